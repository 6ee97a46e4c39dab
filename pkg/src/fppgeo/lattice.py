"""Integer-lattice geometry: vertices, edges, boxes, hyperplanes, and orderings.

Vertices are plain tuples of ints.  Heavy code paths work on flat numpy
index arrays keyed to a Box; the tuple API is the boundary for users and
tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

Vertex = tuple


def neighbors(v):
    """The 2d nearest neighbors of v, in the fixed order +e1, -e1, +e2, -e2, ..."""
    out = []
    for i in range(len(v)):
        for s in (1, -1):
            w = list(v)
            w[i] += s
            out.append(tuple(w))
    return out


def undirected_edge(u, v):
    """Canonical form of the undirected edge {u, v}: endpoints sorted lexicographically."""
    u, v = tuple(u), tuple(v)
    if sum(abs(a - b) for a, b in zip(u, v)) != 1:
        raise ValueError(f"{u} and {v} are not nearest neighbors")
    return (u, v) if u <= v else (v, u)


def edge_axis(e):
    """Axis along which the two endpoints of e differ."""
    u, v = e
    for i, (a, b) in enumerate(zip(u, v)):
        if a != b:
            return i
    raise ValueError("degenerate edge")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of lattice vertices, corners inclusive."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(c) for c in self.lower))
        object.__setattr__(self, "upper", tuple(int(c) for c in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("corner dimensions differ")
        if len(self.lower) < 2:
            raise ValueError("d >= 2 required")
        if any(l > u for l, u in zip(self.lower, self.upper)):
            raise ValueError("lower corner must be <= upper corner componentwise")

    @classmethod
    def cube(cls, radius, dim):
        return cls((-radius,) * dim, (radius,) * dim)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def shape(self):
        return tuple(u - l + 1 for l, u in zip(self.lower, self.upper))

    @property
    def n_vertices(self):
        return int(np.prod(self.shape))

    def contains(self, v):
        return all(l <= c <= u for c, l, u in zip(v, self.lower, self.upper))

    def contains_box(self, other):
        return all(l <= ol and ou <= u for l, u, ol, ou in
                   zip(self.lower, self.upper, other.lower, other.upper))

    def index_of(self, v):
        """Flat index of v in lexicographic (C) order; raises if v is outside."""
        if not self.contains(v):
            raise ValueError(f"vertex {tuple(v)} outside box {self.lower}..{self.upper}")
        idx = 0
        for c, l, s in zip(v, self.lower, self.shape):
            idx = idx * s + (c - l)
        return idx

    def vertex_at(self, idx):
        coords = []
        for s in reversed(self.shape):
            coords.append(idx % s)
            idx //= s
        return tuple(c + l for c, l in zip(reversed(coords), self.lower))

    def coords(self):
        """(n, d) int64 array of all vertices in lexicographic order (read-only, cached)."""
        return _box_coords(self)

    def indices_of(self, coords):
        """Vectorized index_of for an (m, d) int array."""
        coords = np.asarray(coords, dtype=np.int64)
        offs = coords - np.asarray(self.lower, dtype=np.int64)
        if np.any(offs < 0) or np.any(offs >= np.asarray(self.shape)):
            raise ValueError("coordinates outside box")
        return np.ravel_multi_index(tuple(offs.T), self.shape)

    def boundary_mask(self):
        """Boolean mask of vertices lying on a face of the box."""
        coords = self.coords()
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return ((coords == lo) | (coords == hi)).any(axis=1)

    def expand(self, k):
        return Box(tuple(l - k for l in self.lower), tuple(u + k for u in self.upper))

    def shrink(self, k):
        return Box(tuple(l + k for l in self.lower), tuple(u - k for u in self.upper))


@lru_cache(maxsize=32)
def _box_coords(box):
    grids = np.meshgrid(*(np.arange(l, u + 1, dtype=np.int64)
                          for l, u in zip(box.lower, box.upper)), indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    coords.setflags(write=False)
    return coords


@dataclass(frozen=True)
class Hyperplane:
    """Real hyperplane {z : z . direction = level}."""

    direction: tuple
    level: float

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))
        if all(c == 0.0 for c in self.direction):
            raise ValueError("hyperplane direction must be nonzero")


def is_integer_direction(theta):
    return (len(theta) >= 2 and all(isinstance(c, (int, np.integer)) for c in theta)
            and any(c != 0 for c in theta)
            and math.gcd(*(abs(int(c)) for c in theta)) == 1)


def normalize_direction(rho, max_denominator=10 ** 6):
    """Rescale a rational direction to a coprime integer vector.

    Components may be ints, Fractions, (numerator, denominator) pairs, or
    floats (reconstructed as rationals with denominators bounded by
    ``max_denominator``).  The result is the unique positive rational
    multiple of the input with integer components of gcd 1, so the set of
    levels whose hyperplane contains lattice points is exactly the integers.
    """
    fracs = []
    for c in rho:
        if isinstance(c, Fraction):
            f = c
        elif isinstance(c, tuple):
            f = Fraction(int(c[0]), int(c[1]))
        elif isinstance(c, float):
            f = Fraction(c).limit_denominator(max_denominator)
        elif isinstance(c, (int, np.integer)):
            f = Fraction(int(c))
        else:
            raise TypeError(f"unsupported direction component {c!r}")
        fracs.append(f)
    if len(fracs) < 2:
        raise ValueError("d >= 2 required")
    if all(f == 0 for f in fracs):
        raise ValueError("invalid direction: zero vector")
    scale = math.lcm(*(f.denominator for f in fracs))
    ints = [int(f * scale) for f in fracs]
    g = math.gcd(*(abs(i) for i in ints))
    return tuple(i // g for i in ints)


def _extended_gcd(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    return old_r, old_s, old_t


def lattice_point_on_level(theta, n):
    """Some z in Z^d with z . theta = n, built from Bezout coefficients."""
    if not any(c != 0 for c in theta):
        raise ValueError("invalid direction: zero vector")
    d = len(theta)
    combo = [0] * d
    combo[0] = 1
    g = int(theta[0])
    for i in range(1, d):
        g2, a, b = _extended_gcd(g, int(theta[i]))
        combo = [a * c for c in combo]
        combo[i] = b
        g = g2
    if g < 0:
        g, combo = -g, [-c for c in combo]
    if n % g != 0:
        raise ValueError(f"level {n} not reachable for direction {theta}")
    k = n // g
    return tuple(k * c for c in combo)


def hyperplane_vertices(theta, n, box):
    """All box vertices z with z . theta = n, in lexicographic order."""
    coords = box.coords()
    dots = coords @ np.asarray(theta, dtype=np.int64)
    hit = coords[dots == int(n)]
    return [tuple(int(c) for c in row) for row in hit]


def order_key(theta):
    """Sort key realizing the level-then-lexicographic total order on Z^d."""
    theta = tuple(int(c) for c in theta)

    def key(v):
        return (sum(c * t for c, t in zip(v, theta)), tuple(v))

    return key


def precedes(x, y, theta):
    """x precedes y: smaller theta-level first, lexicographic tie-break (reflexive)."""
    return order_key(theta)(x) <= order_key(theta)(y)
