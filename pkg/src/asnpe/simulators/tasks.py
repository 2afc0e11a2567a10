"""Benchmark tasks with tractable likelihoods and reference posteriors.

Task constants that the originating benchmark suite leaves configurable are
pinned here and recorded in each builder's docstring. Simulators are pure
functions of (theta, rng); repeated calls draw i.i.d. observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..priors import FactorizedNormalPrior, MultivariateNormalPrior, Prior, UniformBoxPrior

__all__ = [
    "TaskSpec",
    "task_linear_gaussian",
    "task_gaussian_mixture",
    "task_bernoulli_glm",
    "task_slcp",
]

Simulator = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass
class TaskSpec:
    name: str
    theta_dim: int
    x_dim: int
    prior: Prior
    simulate: Simulator
    reference_kind: str  # analytic | grid-is | mcmc | none
    observe: Callable[[int], tuple[np.ndarray, np.ndarray]]  # seed -> (theta_true, x_o)
    log_likelihood: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    analytic_posterior: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    mcmc_step_scale: float = 0.5
    symmetrize: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None
    notes: str = ""
    extras: dict = field(default_factory=dict)


def task_linear_gaussian(d: int) -> TaskSpec:
    """Conjugate oracle task: theta ~ N(0, I); x = theta + N(0, 0.5^2 I).

    Posterior given x_o is N(x_o / 1.25, 0.2 I) by the standard conjugate
    update with likelihood variance 0.25.
    """
    if d < 1:
        raise ConfigError("d must be >= 1")
    noise_sd = 0.5
    prior = FactorizedNormalPrior(np.zeros(d), np.ones(d))

    def simulate(theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + noise_sd * rng.standard_normal(d)

    def observe(seed):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
        theta_true = prior.sample(1, rng)[0]
        return theta_true, simulate(theta_true, rng)

    def analytic_posterior(x_o):
        x_o = np.asarray(x_o, dtype=float)
        var = noise_sd**2 / (1.0 + noise_sd**2)
        return x_o / (1.0 + noise_sd**2), np.full(d, var)

    def log_likelihood(theta, x_o):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        z = (x_o - theta) / noise_sd
        return -0.5 * np.sum(z**2, axis=1) - d * (math.log(noise_sd) + 0.5 * math.log(2 * math.pi))

    return TaskSpec(
        name="linear-gaussian",
        theta_dim=d,
        x_dim=d,
        prior=prior,
        simulate=simulate,
        reference_kind="analytic",
        observe=observe,
        log_likelihood=log_likelihood,
        analytic_posterior=analytic_posterior,
        notes="noise_sd=0.5; posterior mean x_o/1.25, variance 0.2",
    )


def task_gaussian_mixture() -> TaskSpec:
    """Two-component location mixture: x ~ 0.5 N(theta, I) + 0.5 N(theta, 0.01 I).

    theta lives on the uniform box [-10, 10]^2. The reference posterior is
    self-normalized importance sampling on a fine grid (400 points per axis
    spanning x_o +/- 6 clipped to the box), with uniform within-cell jitter.
    """
    d = 2
    prior = UniformBoxPrior(-10.0 * np.ones(d), 10.0 * np.ones(d))
    scales = np.array([1.0, 0.1])

    def simulate(theta, rng):
        theta = np.asarray(theta, dtype=float)
        s = scales[rng.integers(0, 2)]
        return theta + s * rng.standard_normal(d)

    def log_likelihood(theta, x_o):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        out = []
        for s in scales:
            z2 = np.sum((x_o - theta) ** 2, axis=1) / s**2
            out.append(math.log(0.5) - 0.5 * z2 - d * (math.log(s) + 0.5 * math.log(2 * math.pi)))
        stacked = np.stack(out, axis=0)
        shift = stacked.max(axis=0)
        return shift + np.log(np.sum(np.exp(stacked - shift), axis=0))

    def observe(seed):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
        theta_true = prior.sample(1, rng)[0]
        return theta_true, simulate(theta_true, rng)

    return TaskSpec(
        name="gaussian-mixture",
        theta_dim=d,
        x_dim=d,
        prior=prior,
        simulate=simulate,
        reference_kind="grid-is",
        observe=observe,
        log_likelihood=log_likelihood,
        notes="mixture scales (1.0, 0.1) with equal weights; grid-IS reference",
        extras={"grid_half_width": 6.0, "grid_points": 400},
    )


def task_bernoulli_glm() -> TaskSpec:
    """Logistic GLM on a fixed white-noise stimulus, summarized sufficiently.

    Constants: T=100 time bins; stimulus ~ N(0,1) drawn once from seed 1208;
    filter length 9 (theta = bias + 9 filter weights); prior bias ~ N(0, 2)
    and filter ~ N(0, K) with K_ij = 1.5^2 exp(-(i-j)^2 / (2 * 1.5^2)).
    Observables are the sufficient statistics (spike count, spike-triggered
    stimulus sums), so the posterior given x equals the posterior given the
    underlying spike train that generated it.
    """
    t_bins, filt_len = 100, 9
    d = 1 + filt_len
    design_rng = np.random.default_rng(np.random.SeedSequence(entropy=1208))
    stimulus = design_rng.standard_normal(t_bins)
    # lagged design matrix: row t holds stimulus[t], stimulus[t-1], ...
    design = np.zeros((t_bins, filt_len))
    for lag in range(filt_len):
        design[lag:, lag] = stimulus[: t_bins - lag]

    amp, length = 1.5, 1.5
    ii = np.arange(filt_len)
    filt_cov = amp**2 * np.exp(-((ii[:, None] - ii[None, :]) ** 2) / (2 * length**2))
    mean = np.zeros(d)
    cov = np.zeros((d, d))
    cov[0, 0] = 2.0
    cov[1:, 1:] = filt_cov

    prior = MultivariateNormalPrior(mean, cov)

    def spikes_to_stats(y):
        return np.concatenate([[y.sum()], design.T @ y])

    def sample_spikes(theta, rng):
        theta = np.asarray(theta, dtype=float)
        logits = theta[0] + design @ theta[1:]
        probs = 1.0 / (1.0 + np.exp(-logits))
        return (rng.random(t_bins) < probs).astype(float)

    def simulate(theta, rng):
        return spikes_to_stats(sample_spikes(theta, rng))

    def observe(seed):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
        theta_true = prior.sample(1, rng)[0]
        spikes = sample_spikes(theta_true, rng)
        return theta_true, spikes_to_stats(spikes)

    def log_likelihood(theta, x_o):
        # exact GLM log-likelihood in terms of the sufficient statistics:
        # sum_t [y_t * logit_t - softplus(logit_t)] = <stats, theta> - sum softplus
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        logits = theta[:, :1] + theta[:, 1:] @ design.T  # (n, T)
        softplus = np.logaddexp(0.0, logits).sum(axis=1)
        stat_term = x_o[0] * theta[:, 0] + theta[:, 1:] @ x_o[1:]
        return stat_term - softplus

    return TaskSpec(
        name="bernoulli-glm",
        theta_dim=d,
        x_dim=d,
        prior=prior,
        simulate=simulate,
        reference_kind="mcmc",
        observe=observe,
        log_likelihood=log_likelihood,
        mcmc_step_scale=0.2,
        notes="T=100, filter length 9, stimulus seed 1208, RBF filter prior",
        extras={"design": design},
    )


def task_slcp(distractor_dims: int = 20) -> TaskSpec:
    """Simple likelihood, complex posterior: 4 i.i.d. bivariate normal draws.

    mu = (theta_1, theta_2); scales s1 = theta_3^2, s2 = theta_4^2;
    correlation rho = tanh(theta_5); covariance [[s1^2, rho s1 s2],
    [rho s1 s2, s2^2]] + 1e-6 I (regularizer applied consistently in the
    simulator and the likelihood). Distractor dimensions append pure N(0,1)
    noise carrying no information about theta. Posterior is symmetric under
    independent sign flips of theta_3 and theta_4; reference chains are
    symmetrized accordingly.
    """
    if distractor_dims < 0:
        raise ConfigError("distractor_dims must be nonnegative")
    d = 5
    draws = 4
    x_dim = 2 * draws + distractor_dims
    prior = UniformBoxPrior(-3.0 * np.ones(d), 3.0 * np.ones(d))
    jitter = 1e-6

    def cov_of(theta):
        s1, s2 = theta[2] ** 2, theta[3] ** 2
        rho = math.tanh(theta[4])
        cov = np.array([[s1**2, rho * s1 * s2], [rho * s1 * s2, s2**2]])
        return cov + jitter * np.eye(2)

    def simulate(theta, rng):
        theta = np.asarray(theta, dtype=float)
        mean = theta[:2]
        chol = np.linalg.cholesky(cov_of(theta))
        pts = mean + rng.standard_normal((draws, 2)) @ chol.T
        out = pts.ravel()
        if distractor_dims:
            out = np.concatenate([out, rng.standard_normal(distractor_dims)])
        return out

    def log_likelihood(theta, x_o):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        pts = np.asarray(x_o[: 2 * draws], dtype=float).reshape(draws, 2)
        out = np.empty(theta.shape[0])
        for i, th in enumerate(theta):
            cov = cov_of(th)
            sign, logdet = np.linalg.slogdet(cov)
            if sign <= 0:
                out[i] = -np.inf
                continue
            diff = pts - th[:2]
            sol = np.linalg.solve(cov, diff.T)
            mahal = np.sum(diff.T * sol)
            out[i] = -0.5 * (mahal + draws * (logdet + 2 * math.log(2 * math.pi)))
        return out

    def observe(seed):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(4,)))
        theta_true = prior.sample(1, rng)[0]
        return theta_true, simulate(theta_true, rng)

    def symmetrize(samples, rng):
        flipped = samples.copy()
        flipped[:, 2] *= rng.choice([-1.0, 1.0], size=len(samples))
        flipped[:, 3] *= rng.choice([-1.0, 1.0], size=len(samples))
        return flipped

    return TaskSpec(
        name="slcp",
        theta_dim=d,
        x_dim=x_dim,
        prior=prior,
        simulate=simulate,
        reference_kind="mcmc",
        observe=observe,
        log_likelihood=log_likelihood,
        mcmc_step_scale=0.3,
        symmetrize=symmetrize,
        notes=f"4 draws, {distractor_dims} distractor dims, 1e-6 covariance jitter",
        extras={"informative_dims": 2 * draws, "distractor_dims": distractor_dims},
    )
