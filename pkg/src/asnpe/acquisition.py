"""Variance-of-posteriors acquisition over MC-dropout weight samples.

Candidates are scored by the proposal density times the (lambda-powered)
population variance of their per-weight-sample posterior densities at the
target observation. Densities within a scoring batch share one max-log
shift: every score picks up the same positive factor, which leaves the
top-B ordering untouched while guarding against underflow.

Also provides the distributional-uncertainty diagnostic (expected KL
between component and marginal posteriors) and an exact discrete oracle for
the mutual-information identity it estimates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .flow import ConditionalMaf, WeightSample

__all__ = [
    "AcquisitionConfig",
    "ScoredCandidate",
    "UncertaintyEstimate",
    "component_densities",
    "acquisition_score",
    "score_candidates",
    "rank_candidates",
    "select_top_b",
    "distributional_uncertainty",
    "mi_identity_oracle",
    "write_acquisition_csv",
]


@dataclass(frozen=True)
class AcquisitionConfig:
    num_weight_samples_S: int = 100
    lambda_: float = 1.0
    density_floor: float = 0.0
    use_proposal_weight: bool = True  # True = Eq. 4 weighting; False = raw disagreement
    kl_direction: str = "component-marginal"  # diagnostic only

    def __post_init__(self):
        if self.num_weight_samples_S < 1:
            raise ConfigError("num_weight_samples_S must be >= 1")
        if self.lambda_ <= 0:
            raise ConfigError("lambda_ must be positive")
        if self.density_floor < 0:
            raise ConfigError("density_floor must be nonnegative")
        if self.kl_direction not in ("component-marginal", "marginal-component"):
            raise ConfigError("kl_direction must be 'component-marginal' or 'marginal-component'")


@dataclass
class ScoredCandidate:
    theta: np.ndarray
    proposal_density: float
    component_densities: np.ndarray  # length S, shared-shift scale
    marginal_density: float
    score: float
    degenerate: bool = False


@dataclass
class UncertaintyEstimate:
    value: float
    standard_error: float
    num_samples: int
    direction: str


def component_densities(
    flow: ConditionalMaf, theta, x_o, phis: list[WeightSample], density_floor: float = 0.0
) -> np.ndarray:
    """Per-weight-sample densities at one candidate, max-log shifted."""
    dens, _ = _density_matrix(flow, np.atleast_2d(np.asarray(theta, dtype=float)), x_o, phis,
                              density_floor)
    return dens[0]


def _density_matrix(flow, thetas, x_o, phis, density_floor):
    logs = flow.component_log_probs(thetas, x_o, phis)
    shift = logs.max()
    dens = np.exp(logs - shift)
    if density_floor > 0:
        dens = np.maximum(dens, density_floor)
    return dens, shift


def acquisition_score(
    component_densities: np.ndarray,
    proposal_density: float = 1.0,
    lambda_: float = 1.0,
    use_proposal_weight: bool = True,
) -> float:
    """Proposal density times the population variance of component densities,
    raised to lambda. Degenerate (zero-variance) candidates score exactly 0.
    """
    comps = np.asarray(component_densities, dtype=float)
    if comps.size < 2:
        raise ConfigError("acquisition score needs at least 2 weight samples")
    var = float(np.mean((comps - comps.mean()) ** 2))
    if var == 0.0:
        return 0.0
    powered = var ** lambda_
    return float(proposal_density * powered) if use_proposal_weight else float(powered)


def score_candidates(
    flow: ConditionalMaf,
    thetas: np.ndarray,
    x_o,
    phis: list[WeightSample],
    proposal_log_density: np.ndarray,
    config: AcquisitionConfig = AcquisitionConfig(),
) -> list[ScoredCandidate]:
    """Score a candidate batch under shared weight samples and shared shifts."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    prop_lp = np.asarray(proposal_log_density, dtype=float)
    if len(phis) < 2:
        raise ConfigError("scoring requires at least 2 weight samples")
    if prop_lp.size != thetas.shape[0]:
        raise ConfigError("proposal densities must match candidate count")

    dens, _ = _density_matrix(flow, thetas, x_o, phis, config.density_floor)
    finite_prop = np.where(np.isfinite(prop_lp), prop_lp, -np.inf)
    prop_shift = np.max(finite_prop) if np.any(np.isfinite(finite_prop)) else 0.0
    prop_dens = np.exp(finite_prop - prop_shift)

    out = []
    for i in range(thetas.shape[0]):
        comps = dens[i]
        marginal = float(comps.mean())
        degenerate = bool(np.all(comps == 0.0))
        score = acquisition_score(
            comps, prop_dens[i], config.lambda_, config.use_proposal_weight
        )
        out.append(
            ScoredCandidate(
                theta=thetas[i].copy(),
                proposal_density=float(prop_dens[i]),
                component_densities=comps.copy(),
                marginal_density=marginal,
                score=score,
                degenerate=degenerate,
            )
        )
    return out


def rank_candidates(candidates: list[ScoredCandidate]) -> np.ndarray:
    """All candidate indices from highest to lowest score, ties in draw order."""
    scores = np.array([c.score for c in candidates])
    return np.argsort(-scores, kind="stable")


def select_top_b(candidates: list[ScoredCandidate], b: int) -> np.ndarray:
    """Indices (in draw order) of the B highest-scoring candidates; ties break
    toward earlier draws, so equal scores select the first B proposal draws."""
    n = len(candidates)
    if b > n:
        raise ConfigError(f"cannot select top {b} from {n} candidates")
    return np.sort(rank_candidates(candidates)[:b])


def distributional_uncertainty(
    flow: ConditionalMaf,
    x,
    phis: list[WeightSample],
    num_theta_samples: int,
    rng: np.random.Generator,
    direction: str = "component-marginal",
) -> UncertaintyEstimate:
    """MC estimate of the expected KL between component and marginal posteriors.

    'component-marginal' averages KL(q_phi || marginal) over phi (the exact
    mutual-information direction); 'marginal-component' is the printed
    alternative. Diagnostic only; not used for selection.
    """
    s = len(phis)
    if s < 2:
        raise ConfigError("need at least 2 weight samples")
    if direction not in ("component-marginal", "marginal-component"):
        raise ConfigError("unknown KL direction")

    picks = rng.integers(0, s, size=num_theta_samples)
    values = np.empty(num_theta_samples)
    offset = 0
    for comp in range(s):
        count = int(np.sum(picks == comp))
        if count == 0:
            continue
        draws = flow.sample(count, x, phis[comp], rng=rng)
        comp_logs = flow.component_log_probs(draws, x, phis)
        shift = comp_logs.max(axis=1, keepdims=True)
        marg = shift[:, 0] + np.log(np.mean(np.exp(comp_logs - shift), axis=1))
        if direction == "component-marginal":
            vals = comp_logs[:, comp] - marg
        else:
            vals = marg - comp_logs.mean(axis=1)
        values[offset : offset + count] = vals
        offset += count
    values = values[:offset]
    est = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else np.inf
    if not np.isfinite(est):
        raise ConfigError("distributional uncertainty estimate is non-finite (unavailable)")
    return UncertaintyEstimate(est, se, int(values.size), direction)


def mi_identity_oracle(joint: np.ndarray) -> tuple[float, float]:
    """Exact enumeration of MI and expected-KL on a discrete (phi, theta) joint.

    Computes I[phi; theta] directly from the joint table and, independently,
    E_phi[KL(p(theta|phi) || p(theta))]; the two agree analytically and the
    pair serves as a unit-test oracle for sign and direction conventions.
    """
    p = np.asarray(joint, dtype=float)
    if p.ndim != 2:
        raise ConfigError("joint must be a 2-D table over (phi, theta)")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ConfigError("joint table must be nonnegative and sum to 1")

    p_phi = p.sum(axis=1)
    p_theta = p.sum(axis=0)

    mi = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j] > 0:
                mi += p[i, j] * np.log(p[i, j] / (p_phi[i] * p_theta[j]))

    expected_kl = 0.0
    for i in range(p.shape[0]):
        if p_phi[i] == 0:
            continue
        cond = p[i] / p_phi[i]
        kl = 0.0
        for j in range(p.shape[1]):
            if cond[j] > 0:
                kl += cond[j] * np.log(cond[j] / p_theta[j])
        expected_kl += p_phi[i] * kl

    return float(mi), float(expected_kl)


def write_acquisition_csv(path, candidates: list[ScoredCandidate], selected: np.ndarray) -> None:
    """Per-round acquisition dump with the selected flags."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chosen = set(int(i) for i in np.asarray(selected).ravel())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate", "proposal_density", "marginal_density", "variance", "score", "selected"])
        for i, c in enumerate(candidates):
            var = float(np.mean((c.component_densities - c.component_densities.mean()) ** 2))
            w.writerow([
                i,
                f"{c.proposal_density:.17g}",
                f"{c.marginal_density:.17g}",
                f"{var:.17g}",
                f"{c.score:.17g}",
                int(i in chosen),
            ])
