import math

import numpy as np
import pytest

from asnpe.acquisition import (
    AcquisitionConfig,
    acquisition_score,
    component_densities,
    distributional_uncertainty,
    mi_identity_oracle,
    rank_candidates,
    score_candidates,
    select_top_b,
    write_acquisition_csv,
)
from asnpe.errors import ConfigError
from asnpe.flow import WeightSample

from conftest import make_flow


def make_phis(flow, n, base_seed=0):
    return [flow.draw_weight_sample(seed=base_seed + s) for s in range(n)]


def shifted_gaussian_phis(flow, shift=1.0):
    """Two weight samples whose densities are exactly N(0,1) and N(shift,1).

    Relies on zero-initialized shift/log-scale heads: setting the shift-head
    bias of the first transform moves the whole density by a constant.
    """
    ones = np.ones(flow.config.maskable_units, dtype=np.uint8)
    phi_a = WeightSample(flow.weights, ones, 0)
    w = flow.weights
    sl, _ = flow.layout.slices["t0.bmu"]
    w[sl] = shift
    phi_b = WeightSample(w, ones, 1)
    return phi_a, phi_b


# ----- acquisition_score algebra -----


def test_hand_computed_score():
    comps = np.array([0.2, 0.4])
    score = acquisition_score(comps, proposal_density=0.5, lambda_=1.0)
    assert score == pytest.approx(0.005, abs=1e-12)


def test_zero_variance_scores_zero():
    assert acquisition_score(np.full(10, 0.37), 0.9) == 0.0
    assert acquisition_score(np.zeros(10), 0.9) == 0.0


def test_lambda_one_level_set_balance():
    comps = np.array([0.2, 0.4])
    base = acquisition_score(comps, 0.5, 1.0)
    # proposal density times n, average squared deviation times 1/n
    n = 4.0
    scaled = acquisition_score(comps / math.sqrt(n) + comps.mean() * (1 - 1 / math.sqrt(n)),
                               0.5 * n, 1.0)
    assert scaled == pytest.approx(base, rel=1e-12)


def test_scale_equivariance_fixed_proposal():
    comps = np.array([0.1, 0.5, 0.3])
    c = 2.5
    assert acquisition_score(c * comps, 0.7, 1.0) == pytest.approx(
        c**2 * acquisition_score(comps, 0.7, 1.0), rel=1e-12
    )


def test_without_proposal_weight_equals_unit_proposal():
    comps = np.array([0.1, 0.5, 0.3])
    assert acquisition_score(comps, 0.37, use_proposal_weight=False) == pytest.approx(
        acquisition_score(comps, 1.0, use_proposal_weight=True), rel=1e-15
    )


def test_lambda_monotonicity():
    small_var = np.array([0.5, 0.5001])  # variance << 1
    s1 = acquisition_score(small_var, 1.0, lambda_=1.0)
    s2 = acquisition_score(small_var, 1.0, lambda_=2.0)
    assert s2 < s1
    big_var = np.array([0.0, 4.0])  # variance = 4 > 1
    assert acquisition_score(big_var, 1.0, lambda_=2.0) > acquisition_score(big_var, 1.0, lambda_=1.0)


def test_score_requires_two_samples():
    with pytest.raises(ConfigError):
        acquisition_score(np.array([0.2]), 1.0)


# ----- component densities through the flow -----


def test_zero_dropout_components_identical(rng):
    flow = make_flow(dropout_rate=0.0, perturb=0.1)
    phis = make_phis(flow, 5)
    comps = component_densities(flow, rng.normal(size=2), rng.normal(size=3), phis)
    assert np.all(comps == comps[0])


def test_single_phi_marginal_equals_component(rng):
    flow = make_flow(dropout_rate=0.25, perturb=0.1)
    phi = flow.draw_weight_sample(seed=1)
    theta = rng.normal(size=2)
    x = rng.normal(size=3)
    comps = component_densities(flow, theta, x, [phi])
    assert comps.size == 1
    assert comps.mean() == pytest.approx(comps[0])


def test_components_invariant_to_phi_order(rng):
    flow = make_flow(dropout_rate=0.5, perturb=0.1)
    phis = make_phis(flow, 4)
    theta = rng.normal(size=2)
    x = rng.normal(size=3)
    fwd = component_densities(flow, theta, x, phis)
    rev = component_densities(flow, theta, x, phis[::-1])
    assert np.allclose(fwd, rev[::-1], rtol=0, atol=0)


def test_score_candidates_marginal_is_component_mean(rng):
    flow = make_flow(dropout_rate=0.5, perturb=0.1)
    phis = make_phis(flow, 6)
    thetas = rng.normal(size=(10, 2))
    x = rng.normal(size=3)
    cands = score_candidates(flow, thetas, x, phis, np.zeros(10))
    for c in cands:
        assert c.marginal_density == pytest.approx(c.component_densities.mean(), rel=1e-12)
        assert c.score >= 0.0


# ----- selection -----


class FakeCandidate:
    def __init__(self, score):
        self.score = score


def test_top_b_indices():
    cands = [FakeCandidate(s) for s in [3.0, 1.0, 2.0]]
    assert set(select_top_b(cands, 2).tolist()) == {0, 2}


def test_full_batch_is_identity():
    cands = [FakeCandidate(s) for s in [0.5, 0.1, 0.9, 0.3]]
    assert select_top_b(cands, 4).tolist() == [0, 1, 2, 3]


def test_equal_scores_select_first_b():
    cands = [FakeCandidate(0.0) for _ in range(6)]
    assert select_top_b(cands, 3).tolist() == [0, 1, 2]


def test_tie_stability_under_permutation():
    scores = [2.0, 1.0, 2.0, 3.0, 1.0]
    cands = [FakeCandidate(s) for s in scores]
    ranked = rank_candidates(cands).tolist()
    assert ranked == [3, 0, 2, 1, 4]


def test_b_larger_than_n_is_error():
    with pytest.raises(ConfigError):
        select_top_b([FakeCandidate(1.0)], 2)


# ----- distributional uncertainty -----


def test_zero_dropout_uncertainty_is_zero(rng):
    flow = make_flow(dropout_rate=0.0, perturb=0.1)
    phis = make_phis(flow, 4)
    est = distributional_uncertainty(flow, rng.normal(size=3), phis, 2000, np.random.default_rng(0))
    assert abs(est.value) <= max(3 * est.standard_error, 1e-12)


def test_uncertainty_matches_quadrature_on_two_gaussians():
    flow = make_flow(theta_dim=1, context_dim=1, num_transforms=2, hidden_units=4,
                     dropout_rate=0.0)
    phi_a, phi_b = shifted_gaussian_phis(flow, shift=1.0)

    # quadrature oracle: 0.5 * [KL(N0 || m) + KL(N1 || m)] with m the equal mixture
    grid = np.linspace(-12.0, 13.0, 200_001)
    def normal_pdf(z, mu):
        return np.exp(-0.5 * (z - mu) ** 2) / math.sqrt(2 * math.pi)
    p0, p1 = normal_pdf(grid, 0.0), normal_pdf(grid, 1.0)
    m = 0.5 * (p0 + p1)
    dz = grid[1] - grid[0]
    kl0 = np.sum(p0 * np.log(p0 / m)) * dz
    kl1 = np.sum(p1 * np.log(p1 / m)) * dz
    oracle = 0.5 * (kl0 + kl1)

    est = distributional_uncertainty(
        flow, np.zeros(1), [phi_a, phi_b], 60_000, np.random.default_rng(42),
        direction="component-marginal",
    )
    assert est.value == pytest.approx(oracle, rel=0.05)


def test_uncertainty_nonnegative_when_components_differ(rng):
    flow = make_flow(dropout_rate=0.5, perturb=0.2)
    phis = make_phis(flow, 5)
    est = distributional_uncertainty(flow, rng.normal(size=3), phis, 4000, np.random.default_rng(1))
    assert est.value >= -3 * est.standard_error


# ----- MI identity oracle -----


def test_independent_joint_gives_zero():
    joint = np.outer([0.3, 0.7], [0.25, 0.75])
    mi, ekl = mi_identity_oracle(joint)
    assert mi == pytest.approx(0.0, abs=1e-15)
    assert ekl == pytest.approx(0.0, abs=1e-15)


def test_hand_computed_joint():
    mi, ekl = mi_identity_oracle(np.array([[0.4, 0.1], [0.1, 0.4]]))
    expected = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
    assert mi == pytest.approx(expected, abs=1e-12)
    assert ekl == pytest.approx(expected, abs=1e-12)
    assert mi == pytest.approx(0.1927, abs=5e-5)


def test_deterministic_coupling_gives_marginal_entropy():
    diag = np.diag([0.2, 0.3, 0.5])
    mi, ekl = mi_identity_oracle(diag)
    entropy = -sum(p * math.log(p) for p in [0.2, 0.3, 0.5])
    assert mi == pytest.approx(entropy, abs=1e-12)
    assert ekl == pytest.approx(entropy, abs=1e-12)


def test_identity_on_random_joints():
    rng = np.random.default_rng(0)
    for _ in range(50):
        shape = (rng.integers(2, 6), rng.integers(2, 6))
        joint = rng.random(shape)
        joint /= joint.sum()
        mi, ekl = mi_identity_oracle(joint)
        assert abs(mi - ekl) < 1e-12


def test_invalid_table_rejected():
    with pytest.raises(ConfigError):
        mi_identity_oracle(np.array([[0.5, 0.2], [0.1, 0.1]]))


# ----- CSV dump -----


def test_acquisition_csv(tmp_path, rng):
    flow = make_flow(dropout_rate=0.5, perturb=0.1)
    phis = make_phis(flow, 3)
    thetas = rng.normal(size=(5, 2))
    cands = score_candidates(flow, thetas, rng.normal(size=3), phis, np.zeros(5))
    sel = select_top_b(cands, 2)
    out = tmp_path / "acq.csv"
    write_acquisition_csv(out, cands, sel)
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("candidate,proposal_density")
    assert len(lines) == 6
    assert sum(int(line.split(",")[-1]) for line in lines[1:]) == 2
