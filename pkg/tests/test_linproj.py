import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hnne import linproj
from hnne.errors import InvalidArgumentError
from hnne.hierarchy import build_hierarchy


def _svd_axes(x, d):
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    return vt[:d].T


@pytest.mark.parametrize("route", ["cov", "gram"])
@pytest.mark.parametrize("shape", [(200, 10), (30, 80)])
def test_pca_matches_svd_up_to_sign(rng, route, shape):
    # distinct variances so the axes are well defined
    x = rng.normal(size=shape) * np.linspace(5, 1, shape[1])
    basis, mean = linproj.pca_basis(x, 3, route=route)
    ref = _svd_axes(x, 3)
    np.testing.assert_allclose(np.abs(basis.T @ ref), np.eye(3), atol=1e-8)
    np.testing.assert_allclose(mean, x.mean(axis=0), rtol=1e-12)


def test_routes_give_identical_columns(rng):
    x = rng.normal(size=(40, 60)) * np.linspace(3, 1, 60)
    a, _ = linproj.pca_basis(x, 4, route="cov")
    b, _ = linproj.pca_basis(x, 4, route="gram")
    np.testing.assert_allclose(a, b, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_basis_is_orthonormal_with_fixed_signs(seed, d):
    x = np.random.default_rng(seed).normal(size=(50, 8))
    basis, _ = linproj.pca_basis(x, d)
    np.testing.assert_allclose(basis.T @ basis, np.eye(d), atol=1e-10)
    pivots = basis[np.argmax(np.abs(basis), axis=0), np.arange(d)]
    assert (pivots > 0).all()


def test_zero_variance_falls_back_to_axes():
    x = np.ones((10, 4))
    with pytest.warns(RuntimeWarning):
        basis, _ = linproj.pca_basis(x, 2)
    np.testing.assert_allclose(basis, np.eye(4)[:, :2])


def test_rank_deficient_input_completed_orthonormally(rng):
    x = np.zeros((30, 5))
    x[:, 0] = rng.normal(size=30)
    basis, _ = linproj.pca_basis(x, 3)
    np.testing.assert_allclose(basis.T @ basis, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.abs(basis[:, 0]), [1, 0, 0, 0, 0], atol=1e-12)


def test_select_level():
    assert linproj.select_pca_level([5000, 1400, 300, 40]) == 1
    assert linproj.select_pca_level([900, 200]) == linproj.USE_DATA
    assert linproj.select_pca_level([]) == linproj.USE_DATA
    assert linproj.select_pca_level([1000, 10], threshold=1000) == 0
    h = build_hierarchy(np.random.default_rng(0).normal(size=(5000, 3)))
    assert linproj.select_pca_level(h, 100) == max(i for i, s in enumerate(h.level_sizes()) if s >= 100)


def test_pca_dimension_limits(rng):
    x = rng.normal(size=(3, 10))
    with pytest.raises(InvalidArgumentError):
        linproj.fit_linear(x, 3, "pca-full")
    assert linproj.fit_linear(x, 2, "pca-full").out_dim == 2


def test_random_projection_unit_columns_and_seeded(rng):
    x = rng.normal(size=(100, 20))
    a = linproj.fit_linear(x, 4, "random-projection", seed=5)
    b = linproj.fit_linear(x, 4, "random-proj", seed=5)
    np.testing.assert_allclose(np.linalg.norm(a.basis, axis=0), 1.0)
    assert np.array_equal(a.basis, b.basis)
    with pytest.raises(InvalidArgumentError):
        linproj.fit_linear(x, 21, "random-projection")


def test_apply_linear_and_dimension_check(rng):
    x = rng.normal(size=(60, 6))
    m = linproj.fit_linear(x, 2, "pca-full")
    y = linproj.apply_linear(m, x)
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        linproj.apply_linear(m, np.zeros((2, 5)))


def test_unknown_mode():
    with pytest.raises(InvalidArgumentError):
        linproj.canonical_mode("tsne")
