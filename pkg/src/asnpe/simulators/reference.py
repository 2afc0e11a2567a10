"""Reference posterior sampling: analytic, grid importance sampling, Metropolis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tasks import TaskSpec

__all__ = ["ReferenceResult", "reference_posterior", "random_walk_metropolis"]


@dataclass
class ReferenceResult:
    samples: np.ndarray
    warnings: list = field(default_factory=list)


def random_walk_metropolis(
    log_post,
    start: np.ndarray,
    n: int,
    rng: np.random.Generator,
    step_scale: float = 0.5,
    burn_in: int = 10_000,
    thin: int = 10,
) -> tuple[np.ndarray, float]:
    """Gaussian random-walk chain with pilot step adaptation.

    The step size is tuned during short pilot runs until the acceptance rate
    lands in [0.2, 0.5]; the main run keeps it fixed. Returns (samples,
    main-run acceptance rate).
    """
    d = start.size
    scale = float(step_scale)

    def run(theta0, lp0, iters, s):
        accepted = 0
        theta, lp = theta0.copy(), lp0
        steps = s * rng.standard_normal((iters, d))
        unif = rng.random(iters)
        kept = []
        for i in range(iters):
            prop = theta + steps[i]
            lp_prop = float(log_post(prop[None, :])[0])
            if np.isfinite(lp_prop) and unif[i] < np.exp(min(0.0, lp_prop - lp)):
                theta, lp = prop, lp_prop
                accepted += 1
            kept.append(theta.copy())
        return np.asarray(kept), accepted / iters, lp

    lp0 = float(log_post(start[None, :])[0])
    if not np.isfinite(lp0):
        raise ConfigError("Metropolis start point has zero posterior density")

    theta, lp = start.copy(), lp0
    for _ in range(25):
        chain, acc, lp = run(theta, lp, 400, scale)
        theta = chain[-1]
        if 0.2 <= acc <= 0.5:
            break
        scale *= float(np.exp(2.0 * (acc - 0.334)))

    total = burn_in + thin * n
    chain, acc, _ = run(theta, lp, total, scale)
    return chain[burn_in::thin][:n], acc


def _grid_importance_resample(task: TaskSpec, x_o, n, rng) -> np.ndarray:
    half = float(task.extras.get("grid_half_width", 6.0))
    pts_per_dim = int(task.extras.get("grid_points", 400))
    lower = np.maximum(np.asarray(x_o) - half, task.prior.lower)
    upper = np.minimum(np.asarray(x_o) + half, task.prior.upper)
    axes = [np.linspace(lower[i], upper[i], pts_per_dim) for i in range(task.theta_dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    log_w = task.log_likelihood(grid, np.asarray(x_o, dtype=float))
    log_w = log_w - log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    idx = rng.choice(grid.shape[0], size=n, replace=True, p=w)
    cells = np.array([(upper[i] - lower[i]) / (pts_per_dim - 1) for i in range(task.theta_dim)])
    jitter = rng.uniform(-0.5, 0.5, size=(n, task.theta_dim)) * cells
    return grid[idx] + jitter


def reference_posterior(task: TaskSpec, x_o, n: int, seed: int = 0) -> ReferenceResult:
    """Reference posterior samples by the method the task declares.

    MCMC references run two independent half-chains from prior starts; if
    their means disagree beyond 6 combined standard errors a warning is
    attached (not an error).
    """
    if task.reference_kind == "none":
        raise ConfigError(f"task {task.name!r} declares no reference posterior")
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(41,)))
    x_o = np.asarray(x_o, dtype=float)

    if task.reference_kind == "analytic":
        mean, var = task.analytic_posterior(x_o)
        samples = mean + np.sqrt(var) * rng.standard_normal((n, task.theta_dim))
        return ReferenceResult(samples=samples)

    if task.reference_kind == "grid-is":
        return ReferenceResult(samples=_grid_importance_resample(task, x_o, n, rng))

    if task.reference_kind == "mcmc":
        def log_post(theta):
            return task.log_likelihood(theta, x_o) + task.prior.log_density(theta)

        halves = []
        warnings = []
        sizes = (n - n // 2, n // 2)
        for half, size in enumerate(sizes):
            if size == 0:
                continue
            start = task.prior.sample(1, rng)[0]
            for _ in range(100):
                if np.isfinite(log_post(start[None, :])[0]):
                    break
                start = task.prior.sample(1, rng)[0]
            samples, acc = random_walk_metropolis(
                log_post, start, size, rng, step_scale=task.mcmc_step_scale
            )
            if not (0.2 <= acc <= 0.5):
                warnings.append(f"chain {half}: acceptance {acc:.3f} outside [0.2, 0.5]")
            halves.append(samples)
        if len(halves) == 2 and min(len(h) for h in halves) > 10:
            m0, m1 = halves[0].mean(axis=0), halves[1].mean(axis=0)
            se = np.sqrt(
                halves[0].var(axis=0) / len(halves[0]) + halves[1].var(axis=0) / len(halves[1])
            )
            z = np.abs(m0 - m1) / np.where(se > 0, se, 1.0)
            if np.any(z > 6.0):
                warnings.append(
                    f"split-chain means disagree (max z = {float(z.max()):.2f}); "
                    "treat the reference with caution"
                )
        samples = np.vstack(halves)
        if task.symmetrize is not None:
            samples = task.symmetrize(samples, rng)
        return ReferenceResult(samples=samples, warnings=warnings)

    raise ConfigError(f"unknown reference kind {task.reference_kind!r}")
