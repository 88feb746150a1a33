import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgsiac.mesh import uniform_mesh


def test_1d_counts():
    m = uniform_mesh((0.0, 1.0), 4)
    assert m.h == pytest.approx(0.25)
    assert len(m.faces) == 5
    assert len(m.boundary_faces()) == 2


def test_2d_faces():
    m = uniform_mesh([(-1, 1), (-1, 1)], 2)
    assert m.n_elem == 4
    assert len(m.faces) == 12
    assert len(m.boundary_faces()) == 8
    assert len(m.interior_faces()) == 4


def test_periodic_identification():
    m = uniform_mesh((0, 1), 4, "periodic")
    assert len(m.faces) == 4
    assert all(f.boundary is None for f in m.faces)
    wrap = [f for f in m.faces if f.left == 3]
    assert wrap[0].right == 0


def test_interior_faces_shared_once():
    m = uniform_mesh([(0, 2), (0, 1)], (4, 3))
    seen = {}
    for f in m.interior_faces():
        for e in (f.left, f.right):
            seen[e] = seen.get(e, 0) + 1
    # every element has (#neighbours) interior faces; total references = 2 * interior faces
    assert sum(seen.values()) == 2 * len(m.interior_faces())
    pairs = {(f.left, f.right) for f in m.interior_faces()}
    assert len(pairs) == len(m.interior_faces())


def test_normals_are_unit_axis_vectors():
    m = uniform_mesh([(0, 1), (0, 1)], 3)
    for f in m.faces:
        n = np.array(f.normal)
        assert np.count_nonzero(n) == 1 and n[f.axis] == 1.0


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 12), min_size=1, max_size=2),
    st.floats(0.1, 5.0),
)
def test_volume_and_h(counts, width):
    bounds = [(-1.0, -1.0 + width * (a + 1)) for a in range(len(counts))]
    m = uniform_mesh(bounds, counts)
    assert m.n_elem * m.element_volume == pytest.approx(m.volume, rel=1e-12)
    assert m.h == pytest.approx(min((b[1] - b[0]) / c for b, c in zip(bounds, counts)))


def test_reference_maps():
    m = uniform_mesh((0, 1), 2)
    assert m.to_reference(0, [0.25]) == pytest.approx([0.0])
    assert m.to_reference(0, [0.5]) == pytest.approx([1.0])
    with pytest.raises(ValueError):
        m.to_reference(0, [0.7])
    m2 = uniform_mesh([(0, 2), (-1, 1)], (4, 5))
    rng = np.random.default_rng(1)
    xi = rng.uniform(-1, 1, (6, 2))
    for e in (0, 7, 19):
        np.testing.assert_allclose(m2.to_reference(e, m2.from_reference(e, xi)), xi, atol=1e-14)


def test_locate_sides():
    m = uniform_mesh((0, 1), 4)
    e, xi = m.locate([[0.5]])
    assert e[0] == 2 and xi[0, 0] == pytest.approx(-1.0)
    e, xi = m.locate([[0.5]], side="minus")
    assert e[0] == 1 and xi[0, 0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        m.locate([[1.5]])


def test_row_major_indexing():
    m = uniform_mesh([(0, 1), (0, 1)], (3, 4))
    assert m.flat_index([1, 2]) == 1 * 4 + 2
    np.testing.assert_array_equal(m.multi_index(6), [1, 2])


@pytest.mark.parametrize(
    "args",
    [
        ((1.0, 0.0), 4, "vacuum"),
        ((0.0, 1.0), 0, "vacuum"),
        ((0.0, 1.0), 4, "reflective"),
    ],
)
def test_bad_meshes(args):
    with pytest.raises(ValueError):
        uniform_mesh(*args)
