import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthshapes.lattice import (
    Cluster,
    DirectionMap,
    cube,
    diamond,
    direction_vector,
    exterior_boundary,
    lattice_ball,
    shape_sites,
    sym_diff_count,
)


def test_default_directions_2d():
    m = DirectionMap.default(2)
    assert direction_vector(m, 0) == (-1, 0)
    assert direction_vector(m, 1) == (1, 0)
    assert direction_vector(m, 2) == (0, 1)
    assert direction_vector(m, 3) == (0, -1)


def test_default_directions_3d():
    assert direction_vector(DirectionMap.default(3), 5) == (0, 0, 1)
    assert direction_vector(DirectionMap.default(3), 0) == (-1, 0, 0)


def test_direction_index_out_of_range():
    with pytest.raises(IndexError):
        direction_vector(DirectionMap.default(2), 4)
    with pytest.raises(IndexError):
        direction_vector(DirectionMap.default(2), -1)


@pytest.mark.parametrize(
    "table",
    [
        [(1, 0), (1, 0), (0, 1), (0, -1)],  # repeated vector
        [(1, 1), (-1, 0), (0, 1), (0, -1)],  # not a unit vector
        [(1, 0), (-1, 0), (0, 1)],  # three vectors in d = 2
    ],
)
def test_direction_map_rejects_bad_tables(table):
    with pytest.raises(ValueError):
        DirectionMap(table)


def test_direction_map_text_roundtrip():
    m = DirectionMap([(0, 1), (1, 0), (0, -1), (-1, 0)])
    assert DirectionMap.from_text(m.to_text()) == m


@pytest.mark.parametrize("kind,r,d,size", [("cube", 1, 2, 9), ("diamond", 1, 2, 5), ("diamond", 2, 2, 13)])
def test_shape_sizes(kind, r, d, size):
    assert len(shape_sites(kind, r, d)) == size


def test_cube_sizes_up_to_20():
    for d in range(1, 5):
        for r in range(0, 21 if d < 4 else 8):
            assert len(cube(r, d)) == (2 * r + 1) ** d


def test_negative_radius_is_empty():
    assert not diamond(-1, 2)
    assert not cube(-0.5, 3)


def test_diamond_membership():
    dm = diamond(3, 3)
    for x in dm:
        assert sum(abs(c) for c in x) <= 3
    assert len(dm) == 63  # octahedral number sum
    assert (1, 1, 2) not in dm


def test_lattice_ball_examples():
    b5 = lattice_ball(5, 2)
    assert set(b5) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    b9 = lattice_ball(9, 2)
    assert set(b9) - set(b5) == {(1, 1), (1, -1), (-1, 1), (-1, -1)}
    b6 = lattice_ball(6, 2)
    assert set(b6) - set(b5) == {(-1, -1)}


def test_lattice_ball_rejects_zero():
    with pytest.raises(ValueError):
        lattice_ball(0, 2)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_lattice_ball_monotone(d):
    prev = None
    for n in range(1, 120):
        b = lattice_ball(n, d)
        assert len(b) == n
        if prev is not None:
            assert prev <= b
        prev = b


def test_lattice_ball_distance_order():
    b = lattice_ball(500, 2)
    inside = max(sum(c * c for c in x) for x in b)
    outside = cube(30, 2) - b
    assert min(sum(c * c for c in x) for x in outside) >= inside


def test_sym_diff_examples():
    a = cube(1, 2)
    assert sym_diff_count(a, a) == 0
    assert sym_diff_count(cube(1, 2), diamond(1, 2)) == 4
    assert sym_diff_count(lattice_ball(5, 2), diamond(1, 2)) == 0


def test_sym_diff_dimension_mismatch():
    with pytest.raises(ValueError):
        sym_diff_count(cube(1, 2), cube(1, 3))


def test_exterior_boundary_examples():
    origin = Cluster.from_sites([(0, 0)], 2)
    assert exterior_boundary(origin) == diamond(1, 2) - origin
    assert exterior_boundary(cube(0, 2)) == diamond(1, 2) - cube(0, 2)
    assert not exterior_boundary(Cluster.empty(2))


clusters = st.integers(1, 3).flatmap(
    lambda d: st.lists(
        st.lists(st.integers(-4, 4), min_size=d, max_size=d).map(tuple), max_size=40
    ).map(lambda pts: Cluster.from_sites(pts, d) if pts else Cluster.empty(d))
)


@given(st.integers(1, 3).flatmap(
    lambda d: st.tuples(*[st.lists(st.lists(st.integers(-3, 3), min_size=d, max_size=d).map(tuple), max_size=25)
                          for _ in range(3)]).map(lambda t: (d, t))))
def test_sym_diff_triangle_inequality(arg):
    d, (p, q, r) = arg
    a, b, c = (Cluster.from_sites(s, d) if s else Cluster.empty(d) for s in (p, q, r))
    assert sym_diff_count(a, c) <= sym_diff_count(a, b) + sym_diff_count(b, c)
    assert sym_diff_count(a, b) == sym_diff_count(b, a)


@given(clusters)
def test_exterior_boundary_disjoint(a):
    eb = exterior_boundary(a)
    assert not (eb & a)
    for x in eb:
        assert any(tuple(c + (s if k == j else 0) for j, c in enumerate(x)) in a
                   for k in range(a.d) for s in (-1, 1))


@given(clusters)
def test_cluster_radius_change_preserves_sites(a):
    big = a.with_radius(a.radius + 3)
    assert big == a
    assert set(big) == set(a)
    assert len(a.tight()) == len(a)


def test_cluster_is_immutable():
    a = cube(1, 2)
    with pytest.raises(AttributeError):
        a.mask = np.zeros((3, 3), dtype=bool)
    with pytest.raises(ValueError):
        a.mask[0, 0] = False


def test_cluster_crop_refuses_to_drop_members():
    with pytest.raises(ValueError):
        cube(3, 2).with_radius(2)
