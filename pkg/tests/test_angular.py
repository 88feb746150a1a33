import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgsiac.angular import (
    OrdinateSet,
    angular_average,
    ordinates_slab,
    ordinates_sphere_cl,
    parse_ordinates,
)


def test_slab_two_point():
    s = ordinates_slab(2)
    np.testing.assert_allclose(s.directions[:, 0], [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(s.weights, [1.0, 1.0], atol=1e-15)
    assert s.measure == 2.0


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=32), st.floats(min_value=-10, max_value=10))
def test_slab_average_of_constant(n, c):
    s = ordinates_slab(n)
    assert abs(s.weights.sum() - 2.0) < 1e-12
    assert angular_average(s, np.full(n, c)) == pytest.approx(c, abs=1e-12 * (1 + abs(c)))


def test_slab_moments():
    s = ordinates_slab(8)
    v = s.directions[:, 0]
    assert angular_average(s, v**2) == pytest.approx(1 / 3, abs=1e-12)
    assert abs(angular_average(ordinates_slab(4), ordinates_slab(4).directions[:, 0] ** 3)) < 1e-14
    assert angular_average(ordinates_slab(2), [3.0, -3.0]) == pytest.approx(0.0, abs=1e-15)


def test_sphere_cl_moments():
    s = ordinates_sphere_cl(8, 4)
    assert s.weights.sum() == pytest.approx(4 * np.pi, rel=1e-12)
    assert np.all(s.weights > 0)
    np.testing.assert_allclose(np.linalg.norm(s.directions, axis=1), 1.0, atol=1e-14)
    ox, oy, oz = s.directions.T
    assert angular_average(s, np.ones(len(s))) == pytest.approx(1.0, abs=1e-14)
    assert abs(angular_average(s, ox)) < 1e-12
    assert angular_average(s, ox**2) == pytest.approx(1 / 3, abs=1e-12)
    assert angular_average(s, oz**2) == pytest.approx(1 / 3, abs=1e-12)
    assert angular_average(s, ox**2 * oy**2) == pytest.approx(1 / 15, abs=1e-12)


def test_sphere_cl_converges_for_smooth_function():
    # exp(Omega_x) averages to sinh(1) over the sphere
    exact = np.sinh(1.0)
    errs = []
    for p in (2, 4, 8):
        s = ordinates_sphere_cl(2 * p, p)
        errs.append(abs(angular_average(s, np.exp(s.directions[:, 0])) - exact))
    assert errs[1] < errs[0] / 4 and errs[2] < errs[1] / 4


def test_in_plane_merges_mirror_pairs():
    s = ordinates_sphere_cl(8, 4)
    p = s.in_plane()
    assert len(p) == 16 and p.dim == 2
    assert p.weights.sum() == pytest.approx(4 * np.pi, rel=1e-13)
    assert p.measure == s.measure
    # planar second moment is preserved
    assert p.average(p.directions[:, 0] ** 2) == pytest.approx(1 / 3, abs=1e-12)
    # no direction is tangential to a mesh axis
    assert np.min(np.abs(p.directions)) > 1e-3


def test_errors():
    with pytest.raises(ValueError):
        ordinates_slab(1)
    with pytest.raises(ValueError):
        ordinates_sphere_cl(2, 4)
    with pytest.raises(ValueError):
        angular_average(ordinates_slab(4), [1.0, 2.0])
    with pytest.raises(ValueError):
        OrdinateSet(np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]), 2.0)


@pytest.mark.parametrize("spec, n, dim", [("gl:8", 8, 1), ("cl:8,4", 32, 3), ("CL:20,10", 200, 3)])
def test_parse(spec, n, dim):
    s = parse_ordinates(spec)
    assert len(s) == n and s.dim == dim


@pytest.mark.parametrize("spec", ["gl", "gl:a", "cl:4", "ls:4", "gl:1"])
def test_parse_rejects(spec):
    with pytest.raises(ValueError):
        parse_ordinates(spec)
