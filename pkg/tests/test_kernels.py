import numpy as np
import pytest

from kdm.kernels import (
    Dataset,
    KernelSpec,
    Standardizer,
    cross_kernel_matrix,
    eval_kernel,
    kernel_diagonal,
    kernel_sup,
    kernel_sup_is_empirical,
)


def test_gaussian_known_value():
    # exp(-|0-1|^2 / (2*0.5)) = exp(-1)
    spec = KernelSpec("gaussian", rho=0.5)
    assert eval_kernel(spec, [0.0], [1.0]) == pytest.approx(0.36787944117144233, abs=1e-15)


def test_laplace_known_value():
    # exp(-2 * |0-1|) = exp(-2)
    spec = KernelSpec("laplace", rho=2.0)
    assert eval_kernel(spec, [0.0], [1.0]) == pytest.approx(0.1353352832366127, abs=1e-15)


def test_polynomial_known_value():
    # (<(1,0),(1,1)> + 1)^2 = 4
    spec = KernelSpec("polynomial", c=1.0, q=2)
    assert eval_kernel(spec, [1.0, 0.0], [1.0, 1.0]) == 4.0


def test_kernel_at_identical_points():
    for spec in (KernelSpec("gaussian", rho=0.7), KernelSpec("laplace", rho=1.3)):
        z = np.array([0.3, -1.2, 5.0])
        assert eval_kernel(spec, z, z) == 1.0


def test_cross_matrix_symmetry_and_psd():
    rng = np.random.default_rng(42)
    pts = rng.normal(0, 1, (40, 3))
    for spec in (
        KernelSpec("gaussian", rho=0.8),
        KernelSpec("laplace", rho=0.5),
        KernelSpec("polynomial", c=0.5, q=3),
    ):
        k = cross_kernel_matrix(spec, pts, pts)
        np.testing.assert_allclose(k, k.T, atol=1e-12)
        assert np.linalg.eigvalsh(k).min() >= -1e-8 * np.trace(k)


def test_cross_matrix_matches_pointwise():
    rng = np.random.default_rng(3)
    a, b = rng.normal(0, 1, (5, 2)), rng.normal(0, 1, (4, 2))
    spec = KernelSpec("gaussian", rho=1.5)
    k = cross_kernel_matrix(spec, a, b)
    for i in range(5):
        for j in range(4):
            assert k[i, j] == pytest.approx(eval_kernel(spec, a[i], b[j]), rel=1e-14)


def test_cross_matrix_accepts_datasets():
    a = Dataset(np.array([[0.0], [1.0]]))
    k = cross_kernel_matrix(KernelSpec("gaussian", rho=0.5), a, a)
    assert k.shape == (2, 2)
    assert k[0, 1] == pytest.approx(np.exp(-1.0))


def test_dimension_mismatch_rejected():
    spec = KernelSpec("gaussian")
    with pytest.raises(ValueError):
        cross_kernel_matrix(spec, np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        eval_kernel(spec, [0.0], [0.0, 1.0])


def test_duplicate_points_no_negative_distance():
    # expanded distances of far-apart duplicated points must clamp at zero
    pts = np.full((6, 2), 1e6)
    k = cross_kernel_matrix(KernelSpec("gaussian", rho=1.0), pts, pts)
    np.testing.assert_array_equal(k, np.ones((6, 6)))


def test_kernel_diagonal_matches_matrix():
    rng = np.random.default_rng(11)
    pts = rng.normal(0, 2, (15, 2))
    for spec in (KernelSpec("gaussian"), KernelSpec("polynomial", c=1.0, q=2)):
        diag = kernel_diagonal(spec, pts)
        np.testing.assert_allclose(diag, np.diag(cross_kernel_matrix(spec, pts, pts)), rtol=1e-14)


def test_kernel_sup_bounded_families():
    assert kernel_sup(KernelSpec("gaussian", rho=2.0)) == 1.0
    assert kernel_sup(KernelSpec("laplace", rho=0.1)) == 1.0
    assert not kernel_sup_is_empirical(KernelSpec("gaussian"))


def test_kernel_sup_polynomial_empirical():
    spec = KernelSpec("polynomial", c=1.0, q=2)
    # max over {(1,1)} of (<z,z>+1)^2 = (2+1)^2 = 9
    assert kernel_sup(spec, np.array([[1.0, 1.0]])) == 9.0
    assert kernel_sup_is_empirical(spec)
    with pytest.raises(ValueError):
        kernel_sup(spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("triangular")
    with pytest.raises(ValueError):
        KernelSpec("gaussian", rho=0.0)
    with pytest.raises(ValueError):
        KernelSpec("laplace", rho=-1.0)
    with pytest.raises(ValueError):
        KernelSpec("polynomial", c=-0.5)
    with pytest.raises(ValueError):
        KernelSpec("polynomial", q=0)


def test_spec_dict_round_trip():
    spec = KernelSpec("polynomial", rho=2.0, c=0.5, q=4)
    assert KernelSpec.from_dict(spec.to_dict()) == spec


def test_dataset_validation():
    ds = Dataset(np.arange(4.0))
    assert ds.n == 4 and ds.d == 1
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        Dataset(np.empty((0, 2)))


def test_standardizer_round_trip():
    rng = np.random.default_rng(5)
    pts = rng.normal(3.0, 2.5, (200, 3))
    std = Standardizer.from_points(pts)
    out = std.apply(pts)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-12)


def test_standardizer_constant_column():
    pts = np.column_stack([np.ones(10), np.arange(10.0)])
    out = Standardizer.from_points(pts).apply(pts)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[:, 0], 0.0, atol=1e-15)
