import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgsiac.numerics_core import (
    BasisSet,
    basis_eval,
    gauss_legendre,
    legendre_deriv,
    legendre_eval,
    radau_eval,
    radau_roots,
    tensor_gauss,
)


@pytest.mark.parametrize("n, xi, expected", [(0, 0.3, 1.0), (2, 1.0, 1.0), (2, 0.0, -0.5)])
def test_legendre_values(n, xi, expected):
    assert legendre_eval(n, xi) == pytest.approx(expected, abs=1e-15)


def test_legendre_matches_numpy():
    xi = np.linspace(-1, 1, 41)
    for n in range(9):
        ref = np.polynomial.legendre.Legendre.basis(n)
        np.testing.assert_allclose(legendre_eval(n, xi), ref(xi), atol=1e-13)
        np.testing.assert_allclose(legendre_deriv(n, xi), ref.deriv()(xi), atol=1e-11)


def test_legendre_orthogonality():
    for n in range(13):
        for m in range(13):
            q = gauss_legendre(n + m + 1)
            val = q.integrate(lambda x: legendre_eval(n, x) * legendre_eval(m, x))
            assert abs(val - (2.0 / (2 * n + 1) if n == m else 0.0)) < 1e-12


def test_radau_roots_examples():
    assert radau_roots(1, "right") == pytest.approx([1.0])
    assert radau_roots(2, "right") == pytest.approx([-1 / 3, 1.0], abs=1e-13)
    assert radau_roots(2, "left") == pytest.approx([-1.0, 1 / 3], abs=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_radau_roots_residual_and_interior(k):
    for side in ("left", "right"):
        roots = np.array(radau_roots(k, side))
        assert len(roots) == k
        assert np.max(np.abs(radau_eval(k, roots, side))) < 1e-12
        interior = roots[np.abs(np.abs(roots) - 1) > 1e-12]
        assert len(interior) == k - 1
        assert np.all(np.abs(interior) < 1) and len(np.unique(interior)) == k - 1
    # mirror symmetry between the two families
    np.testing.assert_allclose(radau_roots(k, "left"), -np.array(radau_roots(k, "right"))[::-1], atol=1e-13)


def test_radau_rejects_bad_input():
    with pytest.raises(ValueError):
        radau_roots(0, "right")
    with pytest.raises(ValueError):
        radau_roots(2, "middle")


def test_gauss_small_rules():
    q1 = gauss_legendre(1)
    assert q1.nodes == pytest.approx([0.0]) and q1.weights == pytest.approx([2.0])
    q2 = gauss_legendre(2)
    assert q2.nodes == pytest.approx([-0.57735026919, 0.57735026919])
    assert q2.weights == pytest.approx([1.0, 1.0])
    assert gauss_legendre(3).integrate(lambda x: x**4) == pytest.approx(0.4, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=40))
def test_gauss_exactness(n):
    q = gauss_legendre(n)
    assert abs(q.weights.sum() - 2.0) < 2e-13
    assert np.all(q.weights > 0)
    for d in range(2 * n):
        exact = 0.0 if d % 2 else 2.0 / (d + 1)
        assert abs(q.integrate(lambda x: x**d) - exact) < 1e-12


def test_quadrature_mapped():
    x, w = gauss_legendre(4).mapped(1.0, 3.0)
    assert np.dot(w, x**3) == pytest.approx((3**4 - 1) / 4, rel=1e-13)


def test_basis_examples():
    b0 = BasisSet(0, 1)
    v, _ = basis_eval(b0, 0.3)
    assert v == pytest.approx([1.0])
    v, _ = basis_eval(BasisSet(1, 1), 1.0)
    assert v == pytest.approx([1.0, 1.0])
    v, g = basis_eval(BasisSet(1, 2), [1.0, 1.0])
    assert v == pytest.approx([1.0] * 4)
    assert g.shape == (2, 4)


@pytest.mark.parametrize("k, dim", [(0, 1), (2, 1), (1, 2), (3, 2)])
def test_basis_mass_diagonal(k, dim):
    basis = BasisSet(k, dim)
    assert basis.size == (k + 1) ** dim
    pts, w = tensor_gauss(k + 2, dim)
    v, _ = basis.eval(pts)
    M = (v * w) @ v.T
    np.testing.assert_allclose(M, np.diag(basis.mass_diagonal()), atol=1e-12)


def test_basis_gradients_by_finite_difference():
    basis = BasisSet(2, 2)
    x = np.array([[0.2, -0.4]])
    _, g = basis.eval(x)
    eps = 1e-6
    for a in range(2):
        d = np.zeros(2)
        d[a] = eps
        vp, _ = basis.eval(x + d)
        vm, _ = basis.eval(x - d)
        np.testing.assert_allclose(g[a], (vp - vm) / (2 * eps), atol=1e-8)


def test_basis_index_layout():
    # index b = ax * (k + 1) + ay
    basis = BasisSet(2, 2)
    assert [tuple(m) for m in basis.multi_indices][:4] == [(0, 0), (0, 1), (0, 2), (1, 0)]
