import numpy as np
import pytest
import scipy.stats

from kdm.bench import (
    independence_test,
    ks_to_uniform,
    median_heuristic_rho,
    mixture_energy_study,
    null_bound_study,
    rejection_study,
)
from kdm.kernels import KernelSpec
from kdm.simulate import sample_distribution


def test_ks_to_uniform_hand_example():
    assert ks_to_uniform(np.array([0.1, 0.5, 0.9])) == pytest.approx(7.0 / 30.0, rel=1e-14)
    grid = (np.arange(1, 11) - 0.5) / 10.0
    assert ks_to_uniform(grid) == pytest.approx(0.05, rel=1e-14)


def test_ks_to_uniform_matches_scipy():
    rng = np.random.default_rng(0)
    p = rng.uniform(0, 1, 200)
    assert ks_to_uniform(p) == pytest.approx(scipy.stats.kstest(p, "uniform").statistic, rel=1e-12)


def test_ks_to_uniform_guards():
    with pytest.raises(ValueError):
        ks_to_uniform(np.array([]))
    with pytest.raises(ValueError):
        ks_to_uniform(np.array([-0.1, 0.5]))
    with pytest.raises(ValueError):
        ks_to_uniform(np.array([0.5, 1.1]))


def test_median_heuristic_two_points():
    assert median_heuristic_rho(np.array([[0.0], [2.0]])) == pytest.approx(2.0, rel=1e-14)
    assert median_heuristic_rho(np.array([0.0, 2.0])) == pytest.approx(2.0, rel=1e-14)


def test_median_heuristic_subsampling_deterministic():
    rng = np.random.default_rng(1)
    pts = rng.normal(0, 1, (1200, 2))
    assert median_heuristic_rho(pts) == median_heuristic_rho(pts)
    # identical points give the floor value
    assert median_heuristic_rho(np.zeros((5, 2))) == pytest.approx(1e-12)


def test_independence_test_detects_dependence():
    dependent = sample_distribution("circle", 1200, seed=2)
    independent = sample_distribution("independent_clouds", 1200, seed=3)
    p_dep = independence_test(dependent).p_value
    p_ind = independence_test(independent).p_value
    assert p_dep < 1e-3
    assert p_ind > 0.01


def test_independence_test_deterministic_and_kernel_override():
    joint = sample_distribution("variance", 300, seed=4)
    a = independence_test(joint)
    b = independence_test(joint)
    assert (a.statistic, a.ell, a.p_value) == (b.statistic, b.ell, b.p_value)
    c = independence_test(joint, kernel=KernelSpec("laplace", rho=1.0))
    assert c.p_value != a.p_value


def test_rejection_study_reproducible():
    a = rejection_study("circle", 60, 5, seed=2024)
    b = rejection_study("circle", 60, 5, seed=2024)
    np.testing.assert_array_equal(a.p_values, b.p_values)
    assert a.p_values.shape == (5,)
    assert a.rejection_rate == pytest.approx(np.mean(a.p_values <= 0.05))
    assert a.mc_stderr == pytest.approx(
        np.sqrt(max(a.rejection_rate * (1 - a.rejection_rate), 1e-12) / 5)
    )


def test_rejection_study_guards():
    with pytest.raises(ValueError):
        rejection_study("circle", 60, 0, seed=0)
    with pytest.raises(ValueError):
        rejection_study("circle", 60, 2, seed=0, level=1.5)


def test_rejection_study_shifted_scheme_runs():
    res = rejection_study("variance", 45, 2, seed=5, scheme="shifted")
    assert res.p_values.shape == (2,)
    assert np.all((res.p_values >= 0) & (res.p_values <= 1))


def test_null_bound_study_smoke():
    holds = null_bound_study(100, 5, seed=6)
    assert holds.shape == (5,) and holds.dtype == bool
    assert holds.mean() >= 0.6


def test_mixture_energy_study_smoke():
    study = mixture_energy_study(2, seed=7, n_train=120, n_test=15, grid_cap=80, max_rank=120)
    assert study.differentials.shape == (2,)
    np.testing.assert_array_equal(study.clusters, [1, 2])
    assert np.isfinite(study.median_differential)
    again = mixture_energy_study(2, seed=7, n_train=120, n_test=15, grid_cap=80, max_rank=120)
    np.testing.assert_array_equal(study.differentials, again.differentials)
    with pytest.raises(ValueError):
        mixture_energy_study(0, seed=0)
