"""Desk-scale origin-destination calibration task.

A sparse routing matrix maps demand on OD pairs to detector flows; the
simulator adds multiplicative demand noise and additive detector noise, the
stand-ins for latent route-choice and assignment stochasticity. The system
stays underdetermined (more OD pairs than detectors) like its full-scale
counterpart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..priors import TruncatedNormalPrior
from .tasks import TaskSpec

__all__ = [
    "OdScenario",
    "make_prior_estimate",
    "make_toy_od_scenario",
    "task_toy_od",
    "starting_prior_rmsne",
]

SCENARIO_SCHEMA_VERSION = 1

# demand profiles: truncated-normal (mu, sigma) for OD counts, lower bound 0
DEMAND_PROFILES = {
    "early-a": (5.0, 25.0),
    "early-b": (10.0, 50.0),
    "peak-a": (25.0, 50.0),
    "peak-b": (50.0, 100.0),
}

PRIOR_PRESETS = {"I": (0.6, 0.3), "II": (0.75, 0.45)}


@dataclass
class OdScenario:
    assignment_matrix: np.ndarray  # (m detectors, d OD pairs), nonnegative
    true_demand: np.ndarray
    prior_estimate: np.ndarray
    bias_r: float
    noise_q: float
    demand_noise_sd: float = 0.05
    obs_noise_frac: float = 0.02
    prior_scale_frac: float = 0.5

    def __post_init__(self):
        self.assignment_matrix = np.asarray(self.assignment_matrix, dtype=float)
        self.true_demand = np.asarray(self.true_demand, dtype=float)
        self.prior_estimate = np.asarray(self.prior_estimate, dtype=float)
        m, d = self.assignment_matrix.shape
        if d < m:
            raise ConfigError("toy OD scenario must stay underdetermined (d >= m)")
        if np.any(self.assignment_matrix.sum(axis=1) == 0):
            raise ConfigError("assignment matrix has an all-zero detector row")
        if np.any(self.assignment_matrix < 0):
            raise ConfigError("assignment matrix must be nonnegative")
        if self.true_demand.shape != (d,) or self.prior_estimate.shape != (d,):
            raise ConfigError("demand vectors must match the OD dimension")

    @property
    def num_detectors(self) -> int:
        return self.assignment_matrix.shape[0]

    @property
    def num_od_pairs(self) -> int:
        return self.assignment_matrix.shape[1]

    def to_json(self, path) -> None:
        payload = {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "assignment_matrix_rows": self.assignment_matrix.shape[0],
            "assignment_matrix_cols": self.assignment_matrix.shape[1],
            "assignment_matrix_row_major": self.assignment_matrix.ravel(order="C").tolist(),
            "true_demand": self.true_demand.tolist(),
            "prior_estimate": self.prior_estimate.tolist(),
            "bias_r": self.bias_r,
            "noise_q": self.noise_q,
            "demand_noise_sd": self.demand_noise_sd,
            "obs_noise_frac": self.obs_noise_frac,
            "prior_scale_frac": self.prior_scale_frac,
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def from_json(cls, path) -> "OdScenario":
        payload = json.loads(Path(path).read_text())
        if payload.get("schema_version") != SCENARIO_SCHEMA_VERSION:
            raise ConfigError("unsupported OD scenario schema version")
        m, d = payload["assignment_matrix_rows"], payload["assignment_matrix_cols"]
        a = np.asarray(payload["assignment_matrix_row_major"], dtype=float).reshape(m, d)
        return cls(
            assignment_matrix=a,
            true_demand=np.asarray(payload["true_demand"], dtype=float),
            prior_estimate=np.asarray(payload["prior_estimate"], dtype=float),
            bias_r=float(payload["bias_r"]),
            noise_q=float(payload["noise_q"]),
            demand_noise_sd=float(payload["demand_noise_sd"]),
            obs_noise_frac=float(payload["obs_noise_frac"]),
            prior_scale_frac=float(payload["prior_scale_frac"]),
        )


def make_prior_estimate(d_true, r: float, q: float, seed: int) -> np.ndarray:
    """Biased, noisy prior center: elementwise (r + q * delta) * d_true.

    delta ~ N(0, 1/3); the scale factor has mean r and variance q^2 / 3.
    Negative factors (rare for the presets) are clipped at zero so the
    center stays in the demand domain.
    """
    if r <= 0 or q < 0:
        raise ConfigError("need bias r > 0 and noise q >= 0")
    d_true = np.asarray(d_true, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(31,)))
    delta = rng.normal(0.0, np.sqrt(1.0 / 3.0), size=d_true.shape)
    factor = np.clip(r + q * delta, 0.0, None)
    return factor * d_true


def make_toy_od_scenario(
    d: int = 40,
    m: int = 12,
    demand_profile: str = "early-a",
    prior_preset: str = "I",
    seed: int = 0,
    prior_scale_frac: float = 0.5,
) -> OdScenario:
    """Random sparse routing matrix plus a demand draw and its perturbed prior center.

    Each OD pair crosses 1-3 detectors with weights in [0.3, 1.0]; detectors
    left uncovered get one extra OD pair assigned so no row is all-zero.
    """
    if demand_profile not in DEMAND_PROFILES:
        raise ConfigError(f"unknown demand profile {demand_profile!r}")
    if prior_preset not in PRIOR_PRESETS:
        raise ConfigError(f"unknown prior preset {prior_preset!r}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(29,)))

    a = np.zeros((m, d))
    for od in range(d):
        k = int(rng.integers(1, 4))
        rows = rng.choice(m, size=min(k, m), replace=False)
        a[rows, od] = rng.uniform(0.3, 1.0, size=rows.size)
    for row in range(m):
        if a[row].sum() == 0:
            a[row, int(rng.integers(0, d))] = rng.uniform(0.3, 1.0)

    mu, sigma = DEMAND_PROFILES[demand_profile]
    demand_prior = TruncatedNormalPrior(np.full(d, mu), np.full(d, sigma), lower=0.0)
    d_true = demand_prior.sample(1, rng)[0]

    r, q = PRIOR_PRESETS[prior_preset]
    d_hat = make_prior_estimate(d_true, r, q, seed=int(rng.integers(0, 2**62)))

    return OdScenario(
        assignment_matrix=a,
        true_demand=d_true,
        prior_estimate=d_hat,
        bias_r=r,
        noise_q=q,
        prior_scale_frac=prior_scale_frac,
    )


def scenario_prior(scenario: OdScenario) -> TruncatedNormalPrior:
    """Independent truncated normals centered at the prior demand estimate."""
    scale = np.maximum(scenario.prior_scale_frac * scenario.prior_estimate, 1.0)
    return TruncatedNormalPrior(scenario.prior_estimate, scale, lower=0.0)


def task_toy_od(scenario: OdScenario) -> TaskSpec:
    """Task wrapper: x = A (d * eta) + eps with eta ~ N(1, sd^2), eps detector noise.

    The detector-noise scale is obs_noise_frac times the mean noiseless flow
    of the evaluated demand, so zero demand produces exactly zero flows. No
    tractable reference posterior is declared.
    """
    a = scenario.assignment_matrix
    m, d = a.shape

    def simulate(theta, rng):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0):
            raise ConfigError("negative demand violates the prior support")
        eta = 1.0 + scenario.demand_noise_sd * rng.standard_normal(d)
        flows = a @ (theta * eta)
        noise_scale = scenario.obs_noise_frac * float(np.mean(a @ theta))
        return flows + noise_scale * rng.standard_normal(m)

    def observe(seed):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(37,)))
        return scenario.true_demand.copy(), simulate(scenario.true_demand, rng)

    return TaskSpec(
        name="toy-od",
        theta_dim=d,
        x_dim=m,
        prior=scenario_prior(scenario),
        simulate=simulate,
        reference_kind="none",
        observe=observe,
        notes=f"{d} OD pairs, {m} detectors, prior preset r={scenario.bias_r}, q={scenario.noise_q}",
        extras={"scenario": scenario},
    )


def starting_prior_rmsne(task: TaskSpec, x_o, n_draws: int, rng: np.random.Generator) -> float:
    """Average RMSNE of simulations at prior draws (the 'setting prior' score)."""
    from ..metrics import rmsne

    thetas = task.prior.sample(n_draws, rng)
    scores = [rmsne(task.simulate(thetas[i], rng), x_o) for i in range(n_draws)]
    return float(np.mean(scores))
