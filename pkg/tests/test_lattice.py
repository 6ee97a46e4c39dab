import math
from fractions import Fraction

import numpy as np
import pytest

from fppgeo.lattice import (Box, Hyperplane, hyperplane_vertices,
                            lattice_point_on_level, neighbors,
                            normalize_direction, order_key, precedes,
                            undirected_edge)

from oracles import levels_with_lattice_points, normalize_by_search


def test_neighbors_d2_order():
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]


def test_neighbors_d3_count_and_distance():
    ns = neighbors((1, 1, 1))
    assert len(ns) == 6
    assert all(sum(abs(a - b) for a, b in zip(v, (1, 1, 1))) == 1 for v in ns)


def test_neighbors_count_random_dims():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(2, 5))
        v = tuple(int(c) for c in rng.integers(-50, 50, size=d))
        assert len(neighbors(v)) == 2 * d


def test_undirected_edge_canonical():
    assert undirected_edge((1, 0), (0, 0)) == ((0, 0), (1, 0))
    assert undirected_edge((0, 0), (1, 0)) == ((0, 0), (1, 0))
    with pytest.raises(ValueError):
        undirected_edge((0, 0), (1, 1))


def test_box_validation_and_indexing():
    box = Box((-2, -1), (3, 4))
    assert box.n_vertices == 6 * 6
    assert box.vertex_at(box.index_of((0, 2))) == (0, 2)
    # lexicographic flat ordering
    idx = [box.vertex_at(i) for i in range(box.n_vertices)]
    assert idx == sorted(idx)
    with pytest.raises(ValueError):
        Box((1, 0), (0, 0))
    with pytest.raises(ValueError):
        box.index_of((9, 9))


def test_hyperplane_requires_nonzero_direction():
    with pytest.raises(ValueError):
        Hyperplane((0.0, 0.0), 1.0)


def test_normalize_direction_examples():
    assert normalize_direction((Fraction(1, 2), Fraction(3, 2))) == (1, 3)
    assert normalize_direction((2, 4)) == (1, 2)
    assert normalize_direction((1, 0)) == (1, 0)


def test_normalize_direction_pairs_and_floats():
    assert normalize_direction(((1, 2), (3, 2))) == (1, 3)
    assert normalize_direction((0.5, 1.5)) == (1, 3)


def test_normalize_direction_zero_vector():
    with pytest.raises(ValueError):
        normalize_direction((0, 0, 0))


def test_normalize_direction_matches_oracle_and_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = int(rng.integers(2, 4))
        while True:
            nums = rng.integers(-9, 10, size=d)
            dens = rng.integers(1, 10, size=d)
            if np.any(nums != 0):
                break
        fracs = [Fraction(int(n), int(dd)) for n, dd in zip(nums, dens)]
        theta = normalize_direction(tuple(fracs))
        assert theta == normalize_by_search(fracs)
        assert math.gcd(*(abs(c) for c in theta)) == 1
        # idempotent and invariant under positive rational scaling
        assert normalize_direction(theta) == theta
        c = Fraction(int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        assert normalize_direction(tuple(c * f for f in fracs)) == theta


def test_normalized_direction_levels_are_all_integers():
    # output theta reaches every integer level inside a finite search cube
    rng = np.random.default_rng(3)
    for _ in range(20):
        nums = rng.integers(-5, 6, size=2)
        dens = rng.integers(1, 5, size=2)
        if not np.any(nums != 0):
            continue
        theta = normalize_direction(tuple((int(n), int(dd)) for n, dd in zip(nums, dens)))
        radius = max(15, max(abs(c) for c in theta))
        found = levels_with_lattice_points(theta, radius, (-5, 5))
        assert set(range(-5, 6)) <= found


def test_lattice_point_on_level():
    for theta in [(1, 0), (1, 2), (3, -2), (2, 3, 5)]:
        for n in range(-10, 11):
            z = lattice_point_on_level(theta, n)
            assert sum(c * t for c, t in zip(z, theta)) == n


def test_hyperplane_vertices_diagonal():
    box = Box.cube(2, 2)
    got = hyperplane_vertices((1, 1), 0, box)
    assert got == [(-2, 2), (-1, 1), (0, 0), (1, -1), (2, -2)]


def test_hyperplane_vertices_skew_matches_bruteforce():
    box = Box.cube(2, 2)
    got = hyperplane_vertices((1, 2), 0, box)
    brute = sorted(v for v in (tuple(r) for r in np.array(box.coords()))
                   if v[0] + 2 * v[1] == 0)
    assert got == [(-2, 1), (0, 0), (2, -1)]
    assert got == brute


def test_hyperplane_vertices_nonempty_for_coprime():
    box = Box.cube(8, 2)
    for theta in [(1, 1), (2, 3), (5, -3)]:
        for n in (-2, 0, 3):
            assert hyperplane_vertices(theta, n, box)


def test_precedes_examples():
    assert precedes((0, 5), (1, -9), (1, 0))
    assert precedes((0, -1), (0, 1), (1, 0))
    assert precedes((3, 4), (3, 4), (1, 0))  # reflexive


def test_precedes_total_order():
    rng = np.random.default_rng(11)
    theta = (2, 1)
    pts = [tuple(int(c) for c in rng.integers(-6, 7, size=2)) for _ in range(40)]
    ordered = sorted(set(pts), key=order_key(theta))
    for a, b in zip(ordered, ordered[1:]):
        assert precedes(a, b, theta)
        assert not precedes(b, a, theta) or a == b
    # transitivity along the sorted chain
    for i in range(len(ordered)):
        for j in range(i, len(ordered)):
            assert precedes(ordered[i], ordered[j], theta)
