import math

import numpy as np
import pytest

from asnpe.errors import ConfigError
from asnpe.metrics import c2st, median_distance, rmsne
from asnpe.simulators import (
    OdScenario,
    make_prior_estimate,
    make_toy_od_scenario,
    reference_posterior,
    starting_prior_rmsne,
    task_bernoulli_glm,
    task_gaussian_mixture,
    task_linear_gaussian,
    task_slcp,
    task_toy_od,
)


# ----- linear gaussian -----


def test_linear_gaussian_posterior_at_zero():
    task = task_linear_gaussian(2)
    mean, var = task.analytic_posterior(np.zeros(2))
    assert np.allclose(mean, 0.0)
    assert np.allclose(var, 0.2)


def test_linear_gaussian_conjugate_values():
    task = task_linear_gaussian(1)
    mean, var = task.analytic_posterior(np.array([1.0]))
    assert mean[0] == pytest.approx(0.8, abs=1e-12)
    assert var[0] == pytest.approx(0.2, abs=1e-12)


def test_linear_gaussian_simulator_unbiased():
    task = task_linear_gaussian(3)
    rng = np.random.default_rng(0)
    theta = np.array([0.5, -1.0, 2.0])
    draws = np.stack([task.simulate(theta, rng) for _ in range(100_000)])
    assert np.max(np.abs(draws.mean(axis=0) - theta)) < 0.01


def test_simulator_is_pure_function_of_theta_and_rng():
    task = task_linear_gaussian(2)
    theta = np.array([0.3, 0.7])
    a = task.simulate(theta, np.random.default_rng(42))
    b = task.simulate(theta, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_analytic_reference_moments():
    task = task_linear_gaussian(2)
    x_o = np.array([1.0, -2.0])
    res = reference_posterior(task, x_o, 20_000, seed=0)
    mean, var = task.analytic_posterior(x_o)
    se = np.sqrt(var / 20_000)
    assert np.all(np.abs(res.samples.mean(axis=0) - mean) < 3 * se)
    assert res.samples.shape == (20_000, 2)


def test_reference_runs_self_consistent():
    task = task_linear_gaussian(1)
    x_o = np.array([0.5])
    a = reference_posterior(task, x_o, 5000, seed=1).samples
    b = reference_posterior(task, x_o, 5000, seed=2).samples
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 3 * se


# ----- gaussian mixture -----


def test_mixture_likelihood_peaks_at_theta():
    task = task_gaussian_mixture()
    theta = np.array([[1.0, -2.0]])
    x_near = np.array([1.0, -2.0])
    x_far = x_near + np.array([5.0, 0.0])
    near = task.log_likelihood(theta, x_near)[0]
    far = task.log_likelihood(theta, x_far)[0]
    assert near - far > math.log(1e4)


def test_mixture_reference_concentrates_near_observation():
    task = task_gaussian_mixture()
    theta_true, x_o = task.observe(seed=5)
    res = reference_posterior(task, x_o, 2000, seed=0)
    assert res.samples.shape == (2000, 2)
    assert np.all(np.abs(res.samples.mean(axis=0) - x_o) < 0.5)
    assert np.all(task.prior.inside(res.samples))


def test_mixture_reference_self_consistent_under_c2st():
    task = task_gaussian_mixture()
    _, x_o = task.observe(seed=7)
    a = reference_posterior(task, x_o, 512, seed=3).samples
    b = reference_posterior(task, x_o, 512, seed=4).samples
    assert 0.4 <= c2st(a, b, seed=0).value <= 0.6


def test_mixture_median_distance_scale():
    # good posteriors sit near 1.0 on this task's scale
    task = task_gaussian_mixture()
    _, x_o = task.observe(seed=11)
    ref = reference_posterior(task, x_o, 300, seed=0).samples
    report = median_distance(ref, task.simulate, x_o, np.random.default_rng(0))
    assert 0.3 <= report.value <= 3.0


# ----- bernoulli glm -----


def test_glm_zero_weights_fire_at_half_rate():
    task = task_bernoulli_glm()
    rng = np.random.default_rng(0)
    counts = [task.simulate(np.zeros(10), rng)[0] for _ in range(2000)]
    assert abs(np.mean(counts) - 50.0) < 0.5


def test_glm_reference_acceptance_tuned():
    task = task_bernoulli_glm()
    _, x_o = task.observe(seed=3)
    res = reference_posterior(task, x_o, 400, seed=0)
    acc_warnings = [w for w in res.warnings if "acceptance" in w]
    assert not acc_warnings, acc_warnings
    assert res.samples.shape == (400, 10)


def test_glm_median_distance_order_of_magnitude():
    task = task_bernoulli_glm()
    _, x_o = task.observe(seed=3)
    ref = reference_posterior(task, x_o, 300, seed=1).samples
    report = median_distance(ref, task.simulate, x_o, np.random.default_rng(0))
    assert 4.0 <= report.value <= 40.0


# ----- slcp -----


def test_slcp_no_distractors_dim():
    assert task_slcp(distractor_dims=0).x_dim == 8


def test_slcp_distractors_carry_no_information():
    task = task_slcp(distractor_dims=5)
    rng = np.random.default_rng(0)
    n = 400
    thetas = task.prior.sample(n, rng)
    xs = np.stack([task.simulate(thetas[i], rng) for i in range(n)])
    noise = xs[:, 8:]

    def stat(t, z):
        tz = (t - t.mean(0)) / t.std(0)
        zz = (z - z.mean(0)) / z.std(0)
        return np.max(np.abs(tz.T @ zz) / n)

    observed = stat(thetas, noise)
    perm_rng = np.random.default_rng(1)
    null = [stat(thetas[perm_rng.permutation(n)], noise) for _ in range(200)]
    p_value = np.mean([s >= observed for s in null])
    assert p_value > 0.05


def test_slcp_reference_respects_support_and_symmetry():
    task = task_slcp(distractor_dims=0)
    _, x_o = task.observe(seed=9)
    res = reference_posterior(task, x_o, 400, seed=0)
    assert np.all(task.prior.inside(res.samples))
    # exact sign symmetry of theta_3/theta_4 after symmetrization
    for dim in (2, 3):
        frac_pos = np.mean(res.samples[:, dim] > 0)
        assert 0.35 <= frac_pos <= 0.65


# ----- toy OD -----


def test_od_zero_demand_zero_flows():
    scenario = make_toy_od_scenario(seed=0)
    task = task_toy_od(scenario)
    x = task.simulate(np.zeros(scenario.num_od_pairs), np.random.default_rng(0))
    assert np.allclose(x, 0.0)


def test_od_negative_demand_rejected():
    scenario = make_toy_od_scenario(seed=0)
    task = task_toy_od(scenario)
    theta = np.zeros(scenario.num_od_pairs)
    theta[0] = -1.0
    with pytest.raises(ConfigError):
        task.simulate(theta, np.random.default_rng(0))


def test_od_simulator_mean_is_linear_map():
    scenario = make_toy_od_scenario(d=20, m=6, seed=1)
    task = task_toy_od(scenario)
    rng = np.random.default_rng(2)
    d_vec = scenario.prior_estimate
    draws = np.stack([task.simulate(d_vec, rng) for _ in range(10_000)])
    expected = scenario.assignment_matrix @ d_vec
    se = draws.std(axis=0) / math.sqrt(10_000)
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 4 * se + 1e-9)


def test_od_finite_difference_slope_recovers_assignment_entry():
    scenario = make_toy_od_scenario(d=15, m=5, seed=3)
    task = task_toy_od(scenario)
    rng = np.random.default_rng(4)
    base = scenario.prior_estimate.copy()
    h = 10.0
    i = int(np.argmax(scenario.assignment_matrix.sum(axis=0)))  # well-covered OD pair
    bumped = base.copy()
    bumped[i] += h
    n = 20_000
    lo = np.stack([task.simulate(base, rng) for _ in range(n)]).mean(axis=0)
    hi = np.stack([task.simulate(bumped, rng) for _ in range(n)]).mean(axis=0)
    slope = (hi - lo) / h
    assert np.max(np.abs(slope - scenario.assignment_matrix[:, i])) < 0.05


def test_od_truth_rmsne_near_noise_floor():
    scenario = make_toy_od_scenario(seed=5)
    task = task_toy_od(scenario)
    _, x_o = task.observe(seed=5)
    rng = np.random.default_rng(6)
    floor = np.mean([rmsne(task.simulate(scenario.true_demand, rng), x_o) for _ in range(100)])
    assert floor < 0.15
    one = rmsne(task.simulate(scenario.true_demand, rng), x_o)
    assert one < 4 * floor


def test_prior_estimate_bias_without_noise():
    d_true = np.array([10.0, 20.0, 30.0])
    d_hat = make_prior_estimate(d_true, r=0.6, q=0.0, seed=0)
    assert np.allclose(d_hat, 0.6 * d_true)
    assert np.allclose(make_prior_estimate(d_true, r=1.0, q=0.0, seed=0), d_true)


def test_prior_estimate_scale_factor_moments():
    d_true = np.ones(100_000)
    q = 0.3
    factors = make_prior_estimate(d_true, r=0.6, q=q, seed=7)
    target_var = q**2 / 3.0
    assert abs(factors.mean() - 0.6) < 3 * math.sqrt(target_var / d_true.size) + 1e-3
    assert abs(factors.var() - target_var) < 0.002


def test_od_scenario_json_round_trip(tmp_path):
    scenario = make_toy_od_scenario(seed=8)
    path = tmp_path / "scenario.json"
    scenario.to_json(path)
    loaded = OdScenario.from_json(path)
    assert np.array_equal(loaded.assignment_matrix, scenario.assignment_matrix)
    assert np.array_equal(loaded.true_demand, scenario.true_demand)


def test_od_scenario_invariants():
    with pytest.raises(ConfigError):
        OdScenario(
            assignment_matrix=np.ones((5, 3)),  # more detectors than OD pairs
            true_demand=np.ones(3),
            prior_estimate=np.ones(3),
            bias_r=0.6,
            noise_q=0.3,
        )


def test_starting_prior_rmsne_positive():
    scenario = make_toy_od_scenario(seed=9)
    task = task_toy_od(scenario)
    _, x_o = task.observe(seed=9)
    score = starting_prior_rmsne(task, x_o, 50, np.random.default_rng(0))
    assert score > 0.1


# ----- priors integrate to one (d <= 2 quadrature) -----


@pytest.mark.parametrize("task_builder", [task_linear_gaussian, lambda: task_gaussian_mixture()])
def test_prior_normalization_quadrature(task_builder):
    task = task_builder(2) if task_builder is task_linear_gaussian else task_builder()
    prior = task.prior
    grid = np.linspace(-12, 12, 601)
    g0, g1 = np.meshgrid(grid, grid, indexing="ij")
    pts = np.stack([g0.ravel(), g1.ravel()], axis=1)
    dens = np.exp(prior.log_density(pts))
    mass = dens.sum() * (grid[1] - grid[0]) ** 2
    assert 0.95 <= mass <= 1.05
