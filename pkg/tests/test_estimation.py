from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quermass.estimation import (SampleTable, TestFunctionSpec, build_sample_table, contrast, default_alphas,
                                 default_grid, estimator_suite, fit, fit_from_grid, gnz_residual,
                                 grid_integrals, local_minima, observed_statistic, observed_statistics,
                                 profile_intensity, standard_specs)
from quermass.geometry import (Disc, MarkedConfiguration, Window, configuration_from, inflate, minkowski,
                               random_configuration)
from quermass.model import QuermassParams, RadiusLaw
from quermass.sampler import ChainSettings, derive_seed, simulate

LAW = RadiusLaw.uniform(0.5, 2)
F0 = TestFunctionSpec.f0()
ISO = TestFunctionSpec.f_iso()


def synthetic_table(I_cols, seed=0):
    """A table whose integrals at theta = 0 equal ``I_cols`` (one spec per column)."""
    N = 4
    specs = [TestFunctionSpec.f_alpha(0.01 * (k + 1)) for k in range(len(I_cols))]
    values = {s: np.full(N, float(I) / 4.0) for s, I in zip(specs, I_cols)}
    table = SampleTable(np.zeros((N, 3)), np.zeros((N, 3)), values, Window(0, 0, 2, 2))
    return table, specs


def test_spec_validation():
    with pytest.raises(ValueError):
        TestFunctionSpec.f_alpha(-0.1)
    with pytest.raises(ValueError):
        TestFunctionSpec.f_sum([])
    with pytest.raises(ValueError):
        TestFunctionSpec.f_sum([0.1, 0.1])
    assert default_alphas(2.0)[0] == pytest.approx(0.02)
    assert default_alphas(0.5)[2] == pytest.approx(0.015)


def test_observed_f0_two_far_discs():
    obs = configuration_from([Disc(10, 10, 1), Disc(15, 15, 1)], Window(0, 0, 25, 25))
    assert observed_statistic(F0, obs, 2.0) == pytest.approx(4 * math.pi)


def test_observed_iso_count():
    obs = configuration_from([Disc(5, 5, 1), Disc(15, 15, 1), Disc(16, 15, 1)], Window(0, 0, 25, 25))
    assert observed_statistic(ISO, obs, 2.0) == 1.0


def test_observed_sum_matches_inflated_perimeters():
    rng = np.random.default_rng(4)
    xyr = np.column_stack([rng.uniform(8, 22, 20), rng.uniform(8, 22, 20), rng.uniform(0.5, 2, 20)])
    obs = MarkedConfiguration(xyr, Window(0, 0, 30, 30))
    alphas = [i / 50 for i in range(1, 11)]
    expected = sum(minkowski(inflate(obs, a)).perimeter for a in alphas)
    assert observed_statistic(TestFunctionSpec.f_sum(alphas), obs, 2.2) == pytest.approx(expected, abs=1e-9)


def test_empty_eroded_window_names_margin():
    obs = configuration_from([Disc(1, 1, 1)], Window(0, 0, 4, 4))
    with pytest.raises(ValueError, match="margin 2.2"):
        observed_statistic(F0, obs, 2.2)


def test_table_single_dummy_against_empty():
    obs = MarkedConfiguration.empty(Window(0, 0, 10, 10))
    t = build_sample_table(obs, LAW, [F0, ISO], N=1, seed=3)
    (x, y, R), = t.points
    assert t.deltas[0] == pytest.approx([math.pi * R * R, 2 * math.pi * R, 1])
    assert t.values[F0][0] == pytest.approx(2 * math.pi * R)
    assert t.values[ISO][0] == 1.0
    assert t.eroded_window.contains(x, y)


def test_table_is_deterministic():
    obs = random_configuration(np.random.default_rng(0), 40, Window(0, 0, 20, 20), 0.5, 2)
    specs = standard_specs(default_alphas(2.0))
    a = build_sample_table(obs, LAW, specs, N=300, seed=derive_seed(1, "x"))
    b = build_sample_table(obs, LAW, specs, N=300, seed=derive_seed(1, "x"))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.deltas, b.deltas)
    assert all(np.array_equal(a.values[s], b.values[s]) for s in specs)


def test_table_deltas_match_local_delta():
    from quermass.geometry import f_alpha, is_isolated, local_delta
    obs = random_configuration(np.random.default_rng(1), 40, Window(0, 0, 20, 20), 0.5, 2)
    spec = TestFunctionSpec.f_alpha(0.1)
    t = build_sample_table(obs, LAW, [F0, spec, ISO], N=25, seed=2)
    for (x, y, R), d, k in zip(t.points, t.deltas, range(t.N)):
        p = Disc(x, y, R)
        assert tuple(d) == pytest.approx(tuple(local_delta(p, obs)), abs=1e-12)
        assert t.values[spec][k] == pytest.approx(f_alpha(p, obs, 0.1), abs=1e-12)
        assert t.values[ISO][k] == float(is_isolated(p, obs))


def test_integral_at_theta_zero_against_empty():
    obs = MarkedConfiguration.empty(Window(0, 0, 50, 50))
    t = build_sample_table(obs, LAW, [F0], N=2500, seed=5, margin=2.0)
    I = t.integrals([F0], (0, 0, 0))[0]
    area = t.eroded_window.area
    expected = area * 2 * math.pi * LAW.mean()
    sd = area * 2 * math.pi * (1.5 / math.sqrt(12)) / math.sqrt(t.N)
    assert abs(I - expected) < 3 * sd


def test_profile_intensity_examples():
    table, specs = synthetic_table([3.0])
    assert profile_intensity(table, {specs[0]: 6.0}, (0, 0, 0)) == pytest.approx(2.0)
    table, specs = synthetic_table([3.0, 1.0])
    assert profile_intensity(table, {s: 0.0 for s in specs}, (0, 0, 0)) == 0.0
    table, specs = synthetic_table([0.0, 0.0])
    with pytest.raises(ValueError):
        profile_intensity(table, {s: 1.0 for s in specs}, (0, 0, 0))


def test_single_test_function_gives_zero_contrast():
    obs = random_configuration(np.random.default_rng(2), 60, Window(0, 0, 25, 25), 0.5, 2)
    t = build_sample_table(obs, LAW, [F0], N=200, seed=1)
    S = observed_statistics([F0], obs, 2.0)
    for theta in [(0, 0, 0), (0.3, -0.2, 1.0), (-1, 0.5, 0)]:
        assert contrast(t, S, theta).total == pytest.approx(0.0, abs=1e-18 * S[F0] ** 2)


def test_theta_free_integrals_give_exact_fit():
    table, specs = synthetic_table([3.0, 1.5, 0.2])
    S = {s: 0.37 * I for s, I in zip(specs, [3.0, 1.5, 0.2])}
    ev = contrast(table, S, (0.4, -1, 2))
    assert ev.total == pytest.approx(0.0, abs=1e-24)
    assert ev.z_profile == pytest.approx(0.37)
    assert ev.total == pytest.approx(float(ev.residuals @ ev.residuals))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 5), st.tuples(*[st.floats(-1, 1)] * 3))
def test_profile_optimality(seed, z, theta):
    rng = np.random.default_rng(seed)
    N, K = 30, 4
    specs = [TestFunctionSpec.f_alpha(0.1 * (k + 1)) for k in range(K)]
    table = SampleTable(rng.random((N, 3)), rng.normal(size=(N, 3)),
                        {s: rng.random(N) for s in specs}, Window(0, 0, 3, 3))
    S = {s: float(rng.random() * 10) for s in specs}
    ev = contrast(table, S, theta)
    I = table.integrals(specs, theta)
    s = np.array(list(S.values()))
    assert ev.total <= float(np.sum((s - z * I) ** 2)) * (1 + 1e-12) + 1e-12


def test_shared_table_matches_fresh_table():
    obs = random_configuration(np.random.default_rng(3), 80, Window(0, 0, 30, 30), 0.5, 2)
    specs = standard_specs(default_alphas(2.0))
    shared = build_sample_table(obs, LAW, specs, N=400, seed=9)
    S = observed_statistics(specs, obs, 2.2)
    for theta in [(0.2, 0, 0), (0, -0.3, 0.5)]:
        fresh = build_sample_table(obs, LAW, specs, N=400, seed=9)
        assert contrast(shared, S, theta).total == contrast(fresh, S, theta).total


def test_minus_sampling_ignores_far_discs():
    w = Window(0, 0, 30, 30)
    obs = random_configuration(np.random.default_rng(6), 80, w, 0.5, 2)
    specs = standard_specs(default_alphas(2.0))
    margin = 2.2
    t = build_sample_table(obs, LAW, specs, N=300, seed=4, margin=margin)
    # a disc centred outside the window, farther than R_max + R0 from the eroded window
    far = obs.with_discs(np.vstack([obs.xyr, [[-4.5, 15.0, 2.0], [15.0, 35.0, 1.0]]]), validate=False)
    t2 = build_sample_table(far, LAW, specs, N=300, seed=4, margin=margin)
    assert np.array_equal(t.deltas, t2.deltas)
    assert all(np.array_equal(t.values[s], t2.values[s]) for s in specs)
    assert observed_statistics(specs, obs, margin) == observed_statistics(specs, far, margin)


def test_local_minima():
    v = np.array([[3, 2, 3], [2, 1, 2], [3, 2, 0.5]])
    assert sorted(local_minima(v).tolist()) == [4, 8]
    assert local_minima(np.array([2.0, 1.0, 1.0, 3.0])).tolist() == []


@pytest.fixture(scope="module")
def a_process():
    params = QuermassParams(0.1, (0.2, 0, 0))
    return simulate(params, LAW, Window(0, 0, 50, 50), ChainSettings(seed=derive_seed(3, "fixture")))


def test_fit_attains_best_contrast(a_process):
    specs = [F0] + [TestFunctionSpec.f_alpha(a) for a in default_alphas(2.0)]
    grid = default_grid(("theta1",))
    res = fit(a_process, LAW, specs, grid=grid, N=800, seed=1)
    norefine = fit(a_process, LAW, specs, grid=grid, N=800, seed=1, refine=False)
    assert res.grid_minima
    assert res.contrast <= min(m["contrast"] for m in res.grid_minima) + 1e-12
    assert res.contrast <= norefine.contrast
    assert -2 <= res.theta_hat[0] <= 2 and res.theta_hat[1:] == (0.0, 0.0)
    assert res.z_hat > 0


def test_sub_model_masking(a_process):
    specs = [F0] + [TestFunctionSpec.f_alpha(a) for a in default_alphas(2.0)]
    a = fit(a_process, LAW, specs, grid={"theta1": (-2, 2, 0.05)}, N=500, seed=2)
    b = fit(a_process, LAW, specs, grid={"theta1": (-2, 2, 0.05)}, fixed={"theta2": 0.0, "theta3": 0.0},
            N=500, seed=2)
    assert a.theta_hat == b.theta_hat and a.z_hat == b.z_hat


def test_too_few_test_functions(a_process):
    t = build_sample_table(a_process, LAW, [F0, ISO], N=100, seed=0)
    S = observed_statistics([F0, ISO], a_process, 2.0)
    gi = grid_integrals(t, default_grid(("theta1", "theta2")))
    with pytest.raises(ValueError, match="cannot identify"):
        fit_from_grid(t, S, gi)
    gi1 = grid_integrals(t, default_grid(("theta1",)))
    with pytest.warns(UserWarning, match="identifiability"):
        fit_from_grid(t, S, gi1)


def test_non_finite_contrast_reports_theta():
    table, specs = synthetic_table([1.0, 2.0, 3.0])
    table.deltas[:] = 1e4
    gi = grid_integrals(table, {"theta1": (-1, 1, 0.5)})
    with pytest.raises(ValueError, match="theta="):
        fit_from_grid(table, {s: 1.0 for s in specs}, gi)


def test_empty_grid_rejected():
    table, specs = synthetic_table([1.0, 2.0])
    with pytest.raises(ValueError):
        grid_integrals(table, {})
    with pytest.raises(ValueError):
        grid_integrals(table, {"theta9": (0, 1, 0.1)})


def test_suite_variants_and_median(a_process):
    suite = estimator_suite(a_process, LAW, seed=1, N=600)
    singles = [e for k, e in suite.items() if k.startswith("alpha=")]
    assert len(singles) == 10
    assert {"iso", "sum", "all", "med"} <= set(suite)
    assert all(math.isfinite(e.z) for e in suite.values())
    zs = sorted(e.z for e in singles)
    assert suite["med"].z == pytest.approx(0.5 * (zs[4] + zs[5]))
    odd = estimator_suite(a_process, LAW, seed=1, N=600, alphas=default_alphas(2.0, 9))
    zs = sorted(e.z for k, e in odd.items() if k.startswith("alpha="))
    assert odd["med"].z == zs[4]


def test_suite_without_isolated_balls():
    # a single connected blob: no isolated ball, S_iso = 0, the iso estimate still exists
    xs = np.linspace(10, 20, 30)
    obs = MarkedConfiguration(np.column_stack([xs, np.full(30, 15.0), np.full(30, 1.0)]), Window(0, 0, 30, 30))
    assert observed_statistic(ISO, obs, 2.2) == 0.0
    suite = estimator_suite(obs, LAW, seed=0, N=300)
    assert suite["iso"].error is None and math.isfinite(suite["iso"].z)


def test_gnz_residual_empty_observation():
    obs = MarkedConfiguration.empty(Window(0, 0, 50, 50))
    params = QuermassParams(0.1)
    res = gnz_residual(params, obs, F0, 2.0, law=LAW, N=2500, seed=1)
    area = 46.0 ** 2
    expected = -0.1 * area * 2 * math.pi * LAW.mean()
    sd = 0.1 * area * 2 * math.pi * (1.5 / math.sqrt(12)) / math.sqrt(2500)
    assert abs(res - expected) < 3 * sd


def test_gnz_residual_at_fit_is_small(a_process):
    specs = [F0] + [TestFunctionSpec.f_alpha(a) for a in default_alphas(2.0)]
    t = build_sample_table(a_process, LAW, specs, N=800, seed=3)
    S = observed_statistics(specs, a_process, 2.2)
    res = fit_from_grid(t, S, grid_integrals(t, default_grid(("theta1",))))
    p = QuermassParams(res.z_hat, res.theta_hat)
    resid = np.array([gnz_residual(p, a_process, s, 2.2, table=t) for s in specs])
    assert np.sum(resid ** 2) == pytest.approx(res.contrast, rel=1e-9)
    assert np.sqrt(np.mean(resid ** 2)) < 0.05 * np.mean(list(S.values()))


@pytest.mark.slow
def test_larger_window_reduces_spread():
    params = QuermassParams(0.1, (0.2, 0, 0))
    iqr = {}
    for side in (25.0, 50.0):
        zs = []
        for i in range(20):
            obs = simulate(params, LAW, Window(0, 0, side, side),
                           ChainSettings(seed=derive_seed(21, "scale", side, i)))
            zs.append(estimator_suite(obs, LAW, seed=derive_seed(22, "scale", side, i), N=1500)["all"].z)
        q75, q25 = np.percentile(zs, [75, 25])
        iqr[side] = q75 - q25
    assert iqr[50.0] < iqr[25.0]
