"""Strip edge-modification experiment.

Builds the slab-and-cylinder strip around the direction axis, enumerates
the protected vertices whose geodesics must be preserved, raises weights on
the remaining strip edges, and verifies that no geodesic started at or
behind the zero-level hyperplane reaches the forward path of the marked
vertex on the far side of the strip.

Real-point conditions on embedded edges are decided with exact rational
arithmetic: crossings of unit segments with integer-normal hyperplanes are
rational events, so no floating tolerance is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .environment import with_overrides
from .geodesic_graph import build_graph, forward_orbit, forward_path, graph_summary
from .geodesics import HyperplaneTarget, solve
from .lattice import Box, is_integer_direction, order_key


@dataclass(frozen=True)
class StripSpec:
    """Geometry and margins of one modification experiment."""

    theta: tuple
    N: int
    M: float
    M_prime: int
    epsilon: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(int(c) for c in self.theta))
        if not is_integer_direction(self.theta):
            raise ValueError("theta must be a coprime integer direction")
        if self.N < 1:
            raise ValueError("N >= 1 required")
        if not (self.M > 0 and self.M_prime > 0 and self.epsilon > 0 and self.delta > 0):
            raise ValueError("M, M_prime, epsilon, delta must all be positive")


def in_strip(spec, coords):
    """Mask of points inside the strip: level in [0, N], within M of the axis line."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    theta = np.asarray(spec.theta, dtype=np.int64)
    dots = coords @ theta
    nsq = int(theta @ theta)
    # squared distance to the line R*theta, times |theta|^2 (integer exact)
    dist_sq_scaled = (coords ** 2).sum(axis=1) * nsq - dots ** 2
    return (dots >= 0) & (dots <= spec.N) & (dist_sq_scaled <= spec.M ** 2 * nsq)


def strip_vertices(spec, box):
    """Predicate and lexicographic enumeration of the strip inside a box."""
    coords = box.coords()
    mask = in_strip(spec, coords)

    def predicate(z):
        return bool(in_strip(spec, np.asarray([z]))[0])

    return predicate, [tuple(int(c) for c in row) for row in coords[mask]]


def _frac_point_l1(u, axis, t, shift=None):
    """l1 norm of (u + t e_axis - shift) for rational t, exactly."""
    total = Fraction(0)
    for j, c in enumerate(u):
        base = Fraction(int(c) - (int(shift[j]) if shift is not None else 0))
        if j == axis:
            base += t
        total += abs(base)
    return total


def _segment_conditions(u, axis, spec, xi):
    """Which of the three protected-region conditions the edge (u, u+e_axis) meets."""
    theta = spec.theta
    a_u = sum(int(c) * t for c, t in zip(u, theta))
    step = theta[axis]
    a_v = a_u + step
    N, M, Mp = spec.N, spec.M, spec.M_prime
    hit_a = hit_b = hit_c = False

    for level, shift, out in (("a", None, 0), ("b", xi, N)):
        if step == 0:
            if a_u == out:
                far = max(_frac_point_l1(u, axis, Fraction(0), shift),
                          _frac_point_l1(u, axis, Fraction(1), shift))
                if far >= Mp:
                    if level == "a":
                        hit_a = True
                    else:
                        hit_b = True
        else:
            t = Fraction(out - a_u, step)
            if 0 <= t <= 1 and _frac_point_l1(u, axis, t, shift) >= Mp:
                if level == "a":
                    hit_a = True
                else:
                    hit_b = True

    # condition (c): some point of the segment lies in the slab with
    # distance >= M from the axis line; dist^2 is convex in t, so the max
    # over the admissible t-interval sits at an endpoint.
    if step == 0:
        interval = [(Fraction(0), Fraction(1))] if 0 <= a_u <= N else []
    else:
        t0 = Fraction(0 - a_u, step)
        t1 = Fraction(N - a_u, step)
        lo, hi = min(t0, t1), max(t0, t1)
        lo, hi = max(lo, Fraction(0)), min(hi, Fraction(1))
        interval = [(lo, hi)] if lo <= hi else []
    if interval:
        nsq = sum(t * t for t in theta)
        for t in interval[0]:
            w_dot = Fraction(a_u) + t * step
            norm_sq = sum(Fraction(int(c)) ** 2 for j, c in enumerate(u) if j != axis)
            norm_sq += (Fraction(int(u[axis])) + t) ** 2
            if norm_sq * nsq - w_dot ** 2 >= Fraction(M) ** 2 * nsq:
                hit_c = True
                break
    return hit_a, hit_b, hit_c


@lru_cache(maxsize=16)
def protected_vertices(box, spec, xi_N):
    """In-box vertices incident to an edge meeting any protected-region condition.

    Pure geometry (independent of weights), so results are cached per
    (box, spec, xi_N).
    """
    xi = tuple(int(c) for c in xi_N)
    wide = box.expand(1)
    coords = wide.coords()
    out = set()
    for axis in range(box.dim):
        for u in coords[coords[:, axis] < wide.upper[axis]]:
            u = tuple(int(c) for c in u)
            v = list(u)
            v[axis] += 1
            v = tuple(v)
            if not (box.contains(u) or box.contains(v)):
                continue
            ha, hb, hc = _segment_conditions(u, axis, spec, xi)
            if ha or hb or hc:
                for z in (u, v):
                    if box.contains(z):
                        out.add(z)
    return tuple(sorted(out))


def _path_edge_mask(g, orbit_mask):
    """Mask over (vertex, out-edge) pairs whose edge lies on a marked path."""
    return orbit_mask & (g.succ >= 0)


def eligible_edges(g, spec, y, protected):
    """The finite edge set to be raised: strip edges off every kept geodesic.

    Keeps (excludes from the result) every edge on the forward path of y
    and on the forward path of any protected vertex.
    """
    box = g.box
    coords = box.coords()
    strip_mask = in_strip(spec, coords)
    protected_idx = [box.index_of(z) for z in protected if box.contains(z)]
    keep = forward_orbit(g, protected_idx) if protected_idx else np.zeros(g.n_vertices, bool)
    if box.contains(y):
        keep |= forward_orbit(g, [box.index_of(y)])
    kept_edge_tail = _path_edge_mask(g, keep)

    edges = []
    shape = box.shape
    strides = []
    stride = 1
    for s in reversed(shape):
        strides.append(stride)
        stride *= s
    strides = list(reversed(strides))
    for axis in range(box.dim):
        tails = np.flatnonzero((coords[:, axis] < box.upper[axis]) & strip_mask)
        heads = tails + strides[axis]
        ok = strip_mask[heads]
        tails, heads = tails[ok], heads[ok]
        on_path = (kept_edge_tail[tails] & (g.succ[tails] == heads)) | \
                  (kept_edge_tail[heads] & (g.succ[heads] == tails))
        for t_idx in tails[~on_path]:
            u = box.vertex_at(int(t_idx))
            v = list(u)
            v[axis] += 1
            edges.append((u, tuple(v)))
    edges.sort()
    return edges


@dataclass
class EventReport:
    """Per-condition verdicts for the pre-modification event, with witnesses."""

    exit_and_stay: bool          # forward path of xi_N leaves the slab for good
    approach_but_disjoint: bool  # path of y comes close to xi_N yet never meets its path
    speed_bound: bool            # passage times along the y path beat (S - delta) l1
    protected_disjoint: bool     # no protected geodesic meets the path of xi_N
    speed_bound_global: bool     # same speed bound over the whole y path
    witnesses: dict

    @property
    def passed(self):
        return (self.exit_and_stay and self.approach_but_disjoint
                and self.speed_bound and self.protected_disjoint)


def check_event_A2prime(g, field, spec, y, xi_N):
    """Evaluate the event conditions on the finite graph."""
    theta = np.asarray(spec.theta, dtype=np.int64)
    y = tuple(int(c) for c in y)
    xi = tuple(int(c) for c in xi_N)
    if sum(c * t for c, t in zip(xi, spec.theta)) != spec.N:
        raise ValueError(f"xi_N must lie on level N={spec.N}")
    if sum(c * t for c, t in zip(y, spec.theta)) != 0:
        raise ValueError("y must lie on level 0")
    if sum(abs(c) for c in y) > spec.M_prime:
        raise ValueError("y violates |y|_1 <= M_prime")

    box = g.box
    coords = box.coords()
    wit = {}

    xi_path = forward_path(g, xi)
    xi_set = set(map(int, xi_path.indices))
    dots_xi = coords[xi_path.indices] @ theta
    bad = np.flatnonzero(dots_xi[1:] <= spec.N)
    exit_and_stay = bad.size == 0
    if not exit_and_stay:
        wit["slab_reentry"] = box.vertex_at(int(xi_path.indices[1 + bad[0]]))

    y_path = forward_path(g, y)
    y_dist_to_xi = np.abs(coords[y_path.indices] - np.asarray(xi)).sum(axis=1)
    near = y_dist_to_xi <= spec.epsilon * sum(abs(c) for c in xi)
    meets = [int(i) for i in y_path.indices if int(i) in xi_set]
    approach_but_disjoint = bool(near.any()) and not meets
    if meets:
        wit["y_meets_xi_path"] = box.vertex_at(meets[0])
    if not near.any():
        wit["y_never_near"] = True

    S = field.env.spec.sup_support()
    bound = S - spec.delta
    iy = box.index_of(y)
    Ty = field.T[iy] - field.T[y_path.indices]      # passage time from y along its path
    l1_from_y = np.abs(coords[y_path.indices] - np.asarray(y)).sum(axis=1)
    relevant = near & (l1_from_y >= spec.M_prime)
    speed_bound = True
    if math.isinf(S):
        speed_bound = True                           # vacuous in unbounded mode
    elif relevant.any():
        viol = relevant & (Ty > l1_from_y * bound)
        speed_bound = not viol.any()
        if not speed_bound:
            wit["speed_violation"] = box.vertex_at(int(y_path.indices[np.flatnonzero(viol)[0]]))
    global_rel = l1_from_y >= spec.M_prime
    speed_bound_global = True
    if not math.isinf(S) and global_rel.any():
        speed_bound_global = not (global_rel & (Ty > l1_from_y * bound)).any()

    protected = protected_vertices(box, spec, xi)
    prot_idx = [box.index_of(z) for z in protected]
    orbit = forward_orbit(g, prot_idx) if prot_idx else np.zeros(g.n_vertices, bool)
    inter = [i for i in xi_path.indices if orbit[int(i)]]
    protected_disjoint = not inter
    if inter:
        wit["protected_meets_xi_path"] = box.vertex_at(int(inter[0]))

    return EventReport(exit_and_stay=exit_and_stay,
                       approach_but_disjoint=approach_but_disjoint,
                       speed_bound=speed_bound,
                       protected_disjoint=protected_disjoint,
                       speed_bound_global=speed_bound_global,
                       witnesses=wit)


@dataclass
class SeveringVerdict:
    severed: bool
    witness: tuple | None          # a z at level <= 0 whose path meets the xi path
    crossing: tuple | None         # (v1, v2) vertices bracketing the strip crossing
    crossing_time: float | None
    bound_value: float | None      # (S - 3 delta / 4) |xi|_1 when S is finite


def _last_attainment(dots, level):
    """Index pair (segment start, is_vertex) of the last path point on a level."""
    last = None
    for k in range(len(dots)):
        if dots[k] == level:
            last = (k, True)
        if k + 1 < len(dots) and min(dots[k], dots[k + 1]) < level < max(dots[k], dots[k + 1]):
            last = (k, False)
    return last


def _first_attainment(dots, level, start):
    for k in range(start, len(dots)):
        if dots[k] == level:
            return (k, True)
        if k + 1 < len(dots) and min(dots[k], dots[k + 1]) < level < max(dots[k], dots[k + 1]):
            return (k, False)
    return None


def violating_sources(g_mod, spec, xi_N, reference=None):
    """Vertices at level <= 0 whose forward path meets the path of xi_N.

    Computed as the backward closure of the xi path (reverse reachability)
    intersected with the low-level halfspace.  ``reference`` optionally pins
    the xi path to a fixed vertex sequence (for comparisons across
    modification strengths); by default it is recomputed in ``g_mod``.
    """
    theta = np.asarray(spec.theta, dtype=np.int64)
    box = g_mod.box
    coords = box.coords()
    mark = np.zeros(g_mod.n_vertices, dtype=bool)
    if reference is None:
        xi_path = forward_path(g_mod, tuple(int(c) for c in xi_N))
        mark[xi_path.indices] = True
    else:
        for v in reference:
            mark[box.index_of(v)] = True
    indptr, indices = g_mod.reverse_index()
    frontier = [int(i) for i in np.flatnonzero(mark)]
    while frontier:
        nxt = []
        for i in frontier:
            for j in indices[indptr[i]:indptr[i + 1]]:
                j = int(j)
                if not mark[j]:
                    mark[j] = True
                    nxt.append(j)
        frontier = nxt
    dots = coords @ theta
    return [box.vertex_at(int(i)) for i in np.flatnonzero(mark & (dots <= 0))]


def verify_severing(g_mod, spec, xi_N, field_mod=None):
    """True iff no z at level <= 0 has a forward path meeting the path of xi_N.

    On failure, reports the lexicographically smallest witness z together
    with its strip-crossing segment (v1, v2) and that segment's passage time
    for comparison against the severing bound.
    """
    theta = np.asarray(spec.theta, dtype=np.int64)
    box = g_mod.box
    coords = box.coords()
    xi = tuple(int(c) for c in xi_N)

    bound_value = None
    if field_mod is not None and not math.isinf(field_mod.env.spec.sup_support()):
        S = field_mod.env.spec.sup_support()
        bound_value = (S - 0.75 * spec.delta) * sum(abs(c) for c in xi)

    violators = violating_sources(g_mod, spec, xi_N)
    if not violators:
        return SeveringVerdict(severed=True, witness=None, crossing=None,
                               crossing_time=None, bound_value=bound_value)

    src = violators[0]
    path = forward_path(g_mod, src)
    pd = list(coords[path.indices] @ theta)
    w1 = _last_attainment(pd, 0)
    if w1 is None:
        v1_k = 0
    else:
        v1_k = w1[0] if w1[1] else w1[0] + 1
    w2 = _first_attainment(pd, spec.N, v1_k)
    v2_k = w2[0] if w2 is not None else len(pd) - 1
    v1 = int(path.indices[v1_k])
    v2 = int(path.indices[v2_k])
    crossing_time = None
    if field_mod is not None:
        crossing_time = float(field_mod.T[v1] - field_mod.T[v2])
    return SeveringVerdict(severed=False, witness=src,
                           crossing=(box.vertex_at(v1), box.vertex_at(v2)),
                           crossing_time=crossing_time,
                           bound_value=bound_value)


@dataclass
class ModificationOutcome:
    edge_set: list
    lam: float
    event: EventReport
    verdict: SeveringVerdict
    summary_original: dict
    summary_modified: dict

    @property
    def severed(self):
        return self.verdict.severed


def run_modification(env, spec, y, xi_N, mode="bounded", lam=None, box=None, alpha=None):
    """Full experiment: build, modify weights upward on the eligible set, re-verify.

    ``bounded`` mode uses lam = S - delta/2 and requires a finite support
    supremum with mean t_e <= S - 2 delta; ``unbounded`` mode takes a caller
    lambda.
    """
    S = env.spec.sup_support()
    if mode == "bounded":
        if math.isinf(S):
            raise ValueError("bounded mode requires a distribution with finite support")
        if env.spec.mean() > S - 2 * spec.delta:
            raise ValueError("delta too large: need mean t_e <= S - 2 delta")
        lam = S - spec.delta / 2
    elif mode == "unbounded":
        if lam is None:
            raise ValueError("unbounded mode requires an explicit lambda")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if alpha is None:
        alpha = spec.N + max(spec.N // 2, 8)
    if box is None:
        margin = int(math.ceil(spec.M)) + 4
        lo = [-margin] * env.dim
        hi = [margin] * env.dim
        axis = int(np.argmax(np.abs(spec.theta)))
        lo[axis] = -max(8, spec.N // 3)
        hi[axis] = int(alpha)
        box = Box(tuple(lo), tuple(hi))

    target = HyperplaneTarget(spec.theta, alpha)
    field = solve(env, box, target)
    g = build_graph(field)
    protected = protected_vertices(box, spec, tuple(int(c) for c in xi_N))
    xi_edges = eligible_edges(g, spec, y, protected)
    event = check_event_A2prime(g, field, spec, y, xi_N)

    env_mod = with_overrides(env, xi_edges, lam)
    field_mod = solve(env_mod, box, target)
    g_mod = build_graph(field_mod)
    verdict = verify_severing(g_mod, spec, xi_N, field_mod=field_mod)

    return ModificationOutcome(
        edge_set=xi_edges, lam=float(lam), event=event, verdict=verdict,
        summary_original=graph_summary(g), summary_modified=graph_summary(g_mod))


def progenitor(vertices, theta):
    """The minimal vertex: lowest level first, then lexicographic."""
    vertices = list(vertices)
    if not vertices:
        raise ValueError("progenitor of an empty vertex set")
    return min(vertices, key=order_key(theta))


def detour_passage_times(env, box, spec):
    """Max passage time between strip-adjacent boundary vertices avoiding strip edges.

    Supports picking the constant for the unbounded-mode detour condition:
    paths may not use edges with both endpoints in the strip.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import dijkstra as _dijkstra

    coords = box.coords()
    strip = in_strip(spec, coords)
    n = box.n_vertices
    rows, cols, data = [], [], []
    shape = box.shape
    strides = []
    stride = 1
    for s in reversed(shape):
        strides.append(stride)
        stride *= s
    strides = list(reversed(strides))
    boundary_adjacent = np.zeros(n, dtype=bool)
    for axis in range(box.dim):
        tails = np.flatnonzero(coords[:, axis] < box.upper[axis])
        heads = tails + strides[axis]
        w = env.edge_weights(coords[tails], np.full(len(tails), axis, dtype=np.int64))
        keep = ~(strip[tails] & strip[heads])
        rows.append(tails[keep])
        cols.append(heads[keep])
        data.append(w[keep])
        mixed = strip[tails] ^ strip[heads]
        boundary_adjacent[tails[mixed]] |= ~strip[tails[mixed]]
        boundary_adjacent[heads[mixed]] |= ~strip[heads[mixed]]
    graph = csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n))
    pts = np.flatnonzero(boundary_adjacent)
    worst = 0.0
    for p in pts:
        dist = _dijkstra(graph, directed=False, indices=p, min_only=True)
        reach = dist[pts]
        finite = reach[np.isfinite(reach)]
        if finite.size:
            worst = max(worst, float(finite.max()))
    return worst
