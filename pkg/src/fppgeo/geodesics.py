"""Passage times and unique geodesics on a box.

``solve`` runs one multi-source Dijkstra with distance zero on every target
vertex, which yields T(x, target) for the whole box together with the
successor forest (the union of all point-to-target geodesics under unique
weights).  Successors follow the deterministic rule: argmin over in-box
neighbors y of weight(x, y) + T(y), ties broken by lexicographically
smallest y.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .lattice import Box, is_integer_direction

__version_tag__ = b"FPGD1"


@dataclass(frozen=True)
class PointTarget:
    vertex: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertex", tuple(int(c) for c in self.vertex))


@dataclass(frozen=True)
class HyperplaneTarget:
    """Target hyperplane {z : z . direction = level}.

    ``exact_lattice`` mode takes an integer direction and integer level and
    targets the lattice points on the hyperplane.  ``halfspace_frontier``
    takes real (direction, level) and targets the innermost lattice layer of
    the upper halfspace.
    """

    direction: tuple
    level: float
    mode: str = "exact_lattice"

    def __post_init__(self):
        if self.mode not in ("exact_lattice", "halfspace_frontier"):
            raise ValueError(f"unknown target mode {self.mode!r}")
        if self.mode == "exact_lattice":
            theta = tuple(int(c) for c in self.direction)
            if not is_integer_direction(theta):
                raise ValueError("exact_lattice requires a coprime integer direction")
            if float(self.level) != int(self.level):
                raise ValueError("exact_lattice requires an integer level")
            object.__setattr__(self, "direction", theta)
            object.__setattr__(self, "level", int(self.level))
        else:
            object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))
            object.__setattr__(self, "level", float(self.level))
            if all(c == 0.0 for c in self.direction):
                raise ValueError("direction must be nonzero")


class TruncatedPathError(RuntimeError):
    """Successor chain left the box before reaching a target vertex."""

    def __init__(self, partial):
        super().__init__(f"successor chain truncated after {len(partial)} vertices")
        self.partial = partial


def target_mask(target, box):
    """Boolean mask over box vertices belonging to the target set."""
    coords = box.coords()
    if isinstance(target, PointTarget):
        mask = np.zeros(box.n_vertices, dtype=bool)
        if box.contains(target.vertex):
            mask[box.index_of(target.vertex)] = True
        return mask
    dirs = np.asarray(target.direction, dtype=np.float64)
    if target.mode == "exact_lattice":
        dots = coords @ np.asarray(target.direction, dtype=np.int64)
        return dots == int(target.level)
    dots = coords @ dirs
    step = np.abs(dirs).max()
    return (dots >= target.level) & (dots - step < target.level)


def _axis_edges(box):
    """Per-axis edge index pairs (u, v = u + e_axis) for all in-box edges."""
    shape = box.shape
    n = box.n_vertices
    coords = box.coords()
    out = []
    stride = 1
    strides = []
    for s in reversed(shape):
        strides.append(stride)
        stride *= s
    strides = list(reversed(strides))
    for axis in range(box.dim):
        keep = np.flatnonzero(coords[:, axis] < box.upper[axis])
        out.append((keep, keep + strides[axis]))
    return out


# Lexicographic order of the 2d neighbors of any vertex:
# -e1 < -e2 < ... < -ed < +ed < ... < +e1

def _neighbor_rows(dim):
    rows = {}
    for axis in range(dim):
        rows[(-1, axis)] = axis
        rows[(1, axis)] = 2 * dim - 1 - axis
    return rows


@dataclass
class DistanceField:
    """Exact within-box passage times to a target, plus successor forest."""

    box: Box
    target: object
    env: object
    T: np.ndarray
    succ: np.ndarray
    boundary_touched: np.ndarray
    target_mask: np.ndarray

    @property
    def dim(self):
        return self.box.dim

    def index_of(self, v):
        return self.box.index_of(v)

    def passage_time(self, x):
        return float(self.T[self.box.index_of(x)])

    def is_target(self, x):
        return bool(self.target_mask[self.box.index_of(x)])


def _propagate_touch(succ, seed_mask):
    """OR-accumulate seed_mask along successor chains by pointer doubling."""
    out = seed_mask.copy()
    anc = succ.copy()
    while True:
        valid = np.flatnonzero(anc >= 0)
        if valid.size == 0:
            return out
        parents = anc[valid]
        out[valid] |= out[parents]
        anc[valid] = anc[parents]


def solve(env, box, target):
    """Shortest-path distances from every box vertex to the target set.

    Paths are constrained to the box.  Raises if the target does not
    intersect the box, or if any edge weight is not strictly positive
    (zero-weight regimes are unsupported).
    """
    n = box.n_vertices
    tmask = target_mask(target, box)
    targets = np.flatnonzero(tmask)
    if targets.size == 0:
        raise ValueError("no target vertex inside box")

    coords = box.coords()
    dim = box.dim
    axis_edges = _axis_edges(box)
    axis_weights = []
    rows = []
    cols = []
    data = []
    for axis in range(dim):
        u, v = axis_edges[axis]
        w = env.edge_weights(coords[u], np.full(len(u), axis, dtype=np.int64))
        if np.any(w <= 0.0):
            raise ValueError("nonpositive edge weight encountered; weights must be > 0")
        axis_weights.append(w)
        rows.append(u)
        cols.append(v)
        data.append(w)
    graph = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    T = dijkstra(graph, directed=False, indices=targets, min_only=True)

    # successor rule: argmin_y weight(x,y) + T(y), ties to lex-smallest y
    nbr_rows = _neighbor_rows(dim)
    cand = np.full((2 * dim, n), np.inf)
    nbr_idx = np.full((2 * dim, n), -1, dtype=np.int64)
    for axis in range(dim):
        u, v = axis_edges[axis]
        w = axis_weights[axis]
        r_plus = nbr_rows[(1, axis)]
        cand[r_plus, u] = w + T[v]
        nbr_idx[r_plus, u] = v
        r_minus = nbr_rows[(-1, axis)]
        cand[r_minus, v] = w + T[u]
        nbr_idx[r_minus, v] = u
    choice = np.argmin(cand, axis=0)
    succ = nbr_idx[choice, np.arange(n)].astype(np.int64)
    succ[tmask] = -1

    touched = _propagate_touch(succ, box.boundary_mask())
    return DistanceField(box=box, target=target, env=env, T=T, succ=succ,
                         boundary_touched=touched, target_mask=tmask)


def passage_time(field, x):
    """T(x, target); zero exactly on target vertices."""
    return field.passage_time(x)


def extract_geodesic(field, x):
    """The unique geodesic from x to the target, as a vertex sequence."""
    idx = field.box.index_of(x)
    path = [idx]
    limit = field.box.n_vertices
    while not field.target_mask[path[-1]]:
        s = field.succ[path[-1]]
        if s < 0 or len(path) > limit:
            raise TruncatedPathError([field.box.vertex_at(i) for i in path])
        path.append(int(s))
    return [field.box.vertex_at(i) for i in path]


def path_weight(env, path):
    """Total weight of a vertex path under an environment."""
    return float(sum(env.weight_of((u, v)) for u, v in zip(path, path[1:])))


def successor_margin(field):
    """Gap between best and second-best successor candidate per non-target vertex.

    Near-zero gaps indicate distribution atoms or hash defects; under
    continuous weights the successor is a.s. unique.
    """
    n = field.box.n_vertices
    dim = field.box.dim
    coords = field.box.coords()
    axis_edges = _axis_edges(field.box)
    nbr_rows = _neighbor_rows(dim)
    cand = np.full((2 * dim, n), np.inf)
    for axis in range(dim):
        u, v = axis_edges[axis]
        w = field.env.edge_weights(coords[u], np.full(len(u), axis, dtype=np.int64))
        cand[nbr_rows[(1, axis)], u] = w + field.T[v]
        cand[nbr_rows[(-1, axis)], v] = w + field.T[u]
    part = np.partition(cand, 1, axis=0)
    gap = part[1] - part[0]
    return gap[~field.target_mask]


def _target_config(target):
    if isinstance(target, PointTarget):
        return {"kind": "point", "vertex": list(target.vertex)}
    return {"kind": "hyperplane", "direction": list(target.direction),
            "level": target.level, "mode": target.mode}


def field_to_csv(field, path):
    """CSV dump: x1..xd, T, succ_dx1..succ_dxd, boundary_touched."""
    box = field.box
    d = box.dim
    coords = box.coords()
    with open(path, "w", newline="") as fh:
        head = [f"x{i+1}" for i in range(d)] + ["T"] + \
               [f"succ_dx{i+1}" for i in range(d)] + ["boundary_touched"]
        fh.write(",".join(head) + "\n")
        for i in range(box.n_vertices):
            row = [str(int(c)) for c in coords[i]]
            row.append(format(field.T[i], ".17g"))
            s = field.succ[i]
            if s >= 0:
                row.extend(str(int(c)) for c in (coords[s] - coords[i]))
            else:
                row.extend("" for _ in range(d))
            row.append(str(int(field.boundary_touched[i])))
            fh.write(",".join(row) + "\n")


def field_dump(field, path):
    """Binary dump: tagged header JSON, then T, succ, boundary arrays."""
    header = {
        "dim": field.box.dim,
        "lower": list(field.box.lower),
        "upper": list(field.box.upper),
        "target": _target_config(field.target),
        "seed": int(getattr(field.env, "seed", -1)),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(__version_tag__)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(field.T.astype("<f8").tobytes())
        fh.write(field.succ.astype("<i8").tobytes())
        fh.write(field.boundary_touched.astype("u1").tobytes())


def field_load(path):
    """Load a binary field dump (without the generating environment)."""
    with open(path, "rb") as fh:
        tag = fh.read(5)
        if tag != __version_tag__:
            raise ValueError("not a field dump")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        box = Box(tuple(header["lower"]), tuple(header["upper"]))
        n = box.n_vertices
        T = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        succ = np.frombuffer(fh.read(8 * n), dtype="<i8").copy()
        touched = np.frombuffer(fh.read(n), dtype="u1").astype(bool)
    tc = header["target"]
    if tc["kind"] == "point":
        target = PointTarget(tuple(tc["vertex"]))
    else:
        target = HyperplaneTarget(tuple(tc["direction"]), tc["level"], tc["mode"])
    return DistanceField(box=box, target=target, env=None, T=T, succ=succ,
                         boundary_touched=touched, target_mask=target_mask(target, box))
