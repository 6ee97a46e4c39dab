"""Statistical checkers for limit statements at desk scale.

Every estimator here works on finite boxes and reports finite-size
surrogates: padded windows guard against truncation bias, censored
observations are labeled rather than dropped silently, and Monte Carlo
gates are parameters owned by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .environment import TorusEnvironment
from .geodesic_graph import UnionFind, backward_stats, components, forward_path
from .geodesics import PointTarget, solve
from .lattice import Box


def required_pad(box):
    """Minimum gap an analysis window must keep from the solve-box faces."""
    extent = max(u - l for l, u in zip(box.lower, box.upper))
    return max(extent // 4, 16)


def window_pad(window):
    extent = max(u - l for l, u in zip(window.lower, window.upper))
    return max(extent // 4, 16)


def padded_solve_box(window):
    """Solve box for a window, per the padding rule."""
    return window.expand(window_pad(window))


def check_window(window, box):
    pad = required_pad(box)
    if not box.shrink(pad).contains_box(window):
        raise ValueError(
            f"window {window.lower}..{window.upper} not inside the padded region "
            f"(pad {pad}) of box {box.lower}..{box.upper}")


def direction_grid(dim, count=64):
    """Unit direction samples: uniform angles (d=2), Fibonacci spiral (d=3)."""
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        k = np.arange(count) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / count)
        lam = np.pi * (1.0 + 5.0 ** 0.5) * k
        return np.column_stack([np.sin(phi) * np.cos(lam),
                                np.sin(phi) * np.sin(lam),
                                np.cos(phi)])
    rng = np.random.default_rng(count)
    pts = rng.standard_normal((count, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class ShapeEstimate:
    radius: int
    directions: np.ndarray       # (m, d) unit vectors
    eval_points: np.ndarray      # (m, d) lattice points floor(r * xi)
    g_hat: np.ndarray            # mean T(0, point) / r per direction
    g_stderr: np.ndarray
    T_samples: np.ndarray        # (n_seeds, m)
    boundary_samples: np.ndarray
    n_seeds: int

    def rows(self):
        out = []
        for s in range(self.T_samples.shape[0]):
            for i in range(len(self.g_hat)):
                out.append(("T_over_r", s, i, self.T_samples[s, i] / self.radius))
        for i in range(len(self.g_hat)):
            out.append(("g_hat", "", i, self.g_hat[i]))
            out.append(("g_stderr", "", i, self.g_stderr[i]))
        return out


def _shape_window(points):
    pts = np.vstack([np.zeros((1, points.shape[1]), dtype=np.int64), points])
    return Box(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))


def estimate_shape(env, t_list, n_seeds, directions=None, n_directions=64, box=None):
    """Directional norm estimates g_hat(xi) = mean T(0, floor(r xi)) / r."""
    t_list = sorted(int(t) for t in t_list)
    r = t_list[-1]
    if directions is None:
        directions = direction_grid(env.dim, n_directions)
    directions = np.asarray(directions, dtype=np.float64)
    points = np.floor(r * directions).astype(np.int64)
    window = _shape_window(points)
    if box is None:
        box = padded_solve_box(window)
    else:
        check_window(window, box)

    origin = (0,) * env.dim
    m = len(points)
    samples = np.empty((n_seeds, m))
    boundary = None
    for k in range(n_seeds):
        field = solve(replace(env, seed=env.seed + k), box, PointTarget(origin))
        idx = box.indices_of(points)
        samples[k] = field.T[idx]
        if boundary is None:
            boundary = _boundary_samples(field, r)
    g_hat = samples.mean(axis=0) / r
    if n_seeds > 1:
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n_seeds) / r
    else:
        stderr = np.zeros(m)
    return ShapeEstimate(radius=r, directions=directions, eval_points=points,
                         g_hat=g_hat, g_stderr=stderr, T_samples=samples,
                         boundary_samples=boundary, n_seeds=n_seeds)


def _boundary_samples(field, t):
    """Points x/t on the outer rim of the sublevel set {T <= t}."""
    inside = field.T <= t
    rim = inside & ~field.boundary_touched
    # rim vertex: inside, with some lattice neighbor outside
    coords = field.box.coords()
    outside_nbr = np.zeros_like(inside)
    shape = field.box.shape
    n = field.box.n_vertices
    arange = np.arange(n)
    stride = 1
    strides = []
    for s in reversed(shape):
        strides.append(stride)
        stride *= s
    strides = list(reversed(strides))
    for axis in range(field.box.dim):
        fwd = coords[:, axis] < field.box.upper[axis]
        i = arange[fwd]
        j = i + strides[axis]
        outside_nbr[i] |= ~inside[j]
        outside_nbr[j] |= ~inside[i]
    rim &= outside_nbr
    return coords[rim] / float(t)


@dataclass
class ShapeResidualReport:
    radii: list
    medians: np.ndarray
    per_seed: np.ndarray   # (n_seeds, n_radii)
    monotone_nonincreasing: bool

    def rows(self):
        out = [("residual_median", "", r, m) for r, m in zip(self.radii, self.medians)]
        for s in range(self.per_seed.shape[0]):
            for j, r in enumerate(self.radii):
                out.append(("residual", s, r, self.per_seed[s, j]))
        return out


def shape_residual(env, radii, n_seeds, directions=None, n_directions=16, box=None):
    """Scaled residual max_xi |T(0, x) - g_hat(x)| / |x|_1 per radius.

    g_hat is the directional estimate at the largest radius, extended by
    l1 homogeneity; with at least three radii the report states whether the
    median residual decreases.
    """
    radii = sorted(int(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii to report a trend")
    r_max = radii[-1]
    if directions is None:
        directions = direction_grid(env.dim, n_directions)
    directions = np.asarray(directions, dtype=np.float64)
    points = {r: np.floor(r * directions).astype(np.int64) for r in radii}
    window = _shape_window(points[r_max])
    if box is None:
        box = padded_solve_box(window)
    else:
        check_window(window, box)

    origin = (0,) * env.dim
    l1 = {r: np.abs(points[r]).sum(axis=1).astype(np.float64) for r in radii}
    T = {}
    for k in range(n_seeds):
        field = solve(replace(env, seed=env.seed + k), box, PointTarget(origin))
        for r in radii:
            T.setdefault(r, []).append(field.T[box.indices_of(points[r])])
    T = {r: np.vstack(v) for r, v in T.items()}
    g_unit = T[r_max].mean(axis=0) / l1[r_max]
    per_seed = np.empty((n_seeds, len(radii)))
    for j, r in enumerate(radii):
        resid = np.abs(T[r] - g_unit[None, :] * l1[r][None, :]) / l1[r][None, :]
        per_seed[:, j] = resid.max(axis=1)
    medians = np.median(per_seed, axis=0)
    mono = bool(np.all(np.diff(medians) <= 0))
    return ShapeResidualReport(radii=radii, medians=medians, per_seed=per_seed,
                               monotone_nonincreasing=mono)


@dataclass
class BusemannVectorEstimate:
    rho_fit: np.ndarray
    residual_rms: float
    window: Box

    def rows(self):
        out = [("rho_fit", "", i, v) for i, v in enumerate(self.rho_fit)]
        out.append(("residual_rms", "", "", self.residual_rms))
        return out


def estimate_busemann_vector(field, window):
    """Least-squares rho with B(0, x) ~ rho . x over the window vertices."""
    check_window(window, field.box)
    coords = window.coords()
    idx = field.box.indices_of(coords)
    origin = (0,) * field.box.dim
    b = field.T[field.box.index_of(origin)] - field.T[idx]
    A = coords.astype(np.float64)
    if np.linalg.matrix_rank(A) < field.box.dim:
        raise ValueError("degenerate window: rank-deficient design")
    rho, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ rho
    return BusemannVectorEstimate(rho_fit=rho,
                                  residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                                  window=window)


@dataclass
class CrossingReport:
    levels: list
    samples: list
    counts: np.ndarray      # (n_samples, n_levels)
    path_lengths: np.ndarray
    max_count: int

    def rows(self):
        out = []
        for i, x in enumerate(self.samples):
            for j, a in enumerate(self.levels):
                out.append(("crossings", repr(x), a, int(self.counts[i, j])))
        out.append(("max_count", "", "", self.max_count))
        return out


def crossing_counts(g, theta, levels, sample_vertices):
    """Visits of each forward path to the open lower halfspaces {z . theta < level}."""
    pad = required_pad(g.box)
    inner = g.box.shrink(pad)
    theta = np.asarray(theta, dtype=np.int64)
    counts = np.zeros((len(sample_vertices), len(levels)), dtype=np.int64)
    lengths = np.zeros(len(sample_vertices), dtype=np.int64)
    coords = g.box.coords()
    for i, x in enumerate(sample_vertices):
        if not inner.contains(x):
            raise ValueError(f"sample vertex {tuple(x)} outside padded region")
        path = forward_path(g, x)
        dots = coords[path.indices] @ theta
        lengths[i] = len(path.indices)
        for j, a in enumerate(levels):
            counts[i, j] = int((dots < a).sum())
    return CrossingReport(levels=list(levels), samples=[tuple(v) for v in sample_vertices],
                          counts=counts, path_lengths=lengths,
                          max_count=int(counts.max()) if counts.size else 0)


@dataclass
class BackwardTailReport:
    k_size: np.ndarray
    p_size_ge: np.ndarray
    k_depth: np.ndarray
    p_depth_ge: np.ndarray
    censored_fraction: float
    n_window: int
    n_censored: int
    mean_depth: float

    def rows(self):
        out = [("p_size_ge", "", int(k), p) for k, p in zip(self.k_size, self.p_size_ge)]
        out += [("p_depth_ge", "", int(k), p) for k, p in zip(self.k_depth, self.p_depth_ge)]
        out.append(("censored_fraction", "", "", self.censored_fraction))
        return out


def backward_tail(g, window):
    """Empirical tails of backward-cluster size and depth over a window.

    Clusters touching the solve-box boundary are censored: their sizes are
    only lower bounds, so they are excluded from the tails and reported as
    a fraction.
    """
    check_window(window, g.box)
    sizes, depth, touch = backward_stats(g)
    idx = g.box.indices_of(window.coords())
    censored = touch[idx]
    n_window = len(idx)
    keep_sizes = sizes[idx][~censored]
    keep_depth = depth[idx][~censored]
    if keep_sizes.size == 0:
        raise ValueError("all clusters censored; enlarge the box")
    k_size = np.arange(1, keep_sizes.max() + 1)
    p_size = np.array([(keep_sizes >= k).mean() for k in k_size])
    k_depth = np.arange(0, keep_depth.max() + 2)
    p_depth = np.array([(keep_depth >= k).mean() for k in k_depth])
    return BackwardTailReport(
        k_size=k_size, p_size_ge=p_size, k_depth=k_depth, p_depth_ge=p_depth,
        censored_fraction=float(censored.mean()),
        n_window=n_window, n_censored=int(censored.sum()),
        mean_depth=float(keep_depth.mean()))


@dataclass
class IntersectionRadiusReport:
    records: list   # (level, component_label, n_vertices, radius)

    def rows(self):
        return [("radius", "", f"{lvl}/{lab}", float(r))
                for lvl, lab, _, r in self.records]

    def radii_at(self, level):
        return [r for lvl, _, _, r in self.records if lvl == level]


def _max_pairwise_l1(pts):
    """Exact max l1 distance via sign-pattern projections."""
    if len(pts) == 1:
        return 0
    d = pts.shape[1]
    best = 0
    for bits in range(2 ** (d - 1)):
        signs = np.ones(d, dtype=np.int64)
        for j in range(d - 1):
            if bits >> j & 1:
                signs[j + 1] = -1
        proj = pts @ signs
        best = max(best, int(proj.max() - proj.min()))
    return best


def intersection_radii(g, theta, levels, window=None):
    """Per-component l1 radius of the vertex intersection with each hyperplane."""
    theta = np.asarray(theta, dtype=np.int64)
    comp = components(g)
    if window is None:
        window = g.box.shrink(required_pad(g.box))
    coords = window.coords()
    idx = g.box.indices_of(coords)
    dots = coords @ theta
    records = []
    for lvl in levels:
        on = dots == int(lvl)
        labels = comp.labels[idx[on]]
        pts = coords[on]
        for lab in np.unique(labels):
            sel = pts[labels == lab]
            records.append((int(lvl), int(lab), len(sel), _max_pairwise_l1(sel)))
    return IntersectionRadiusReport(records=records)


@dataclass
class TorusGraph:
    """Successor forest toward a wrapped hyperplane on a torus."""

    dims: tuple
    direction: tuple
    level: int
    succ: np.ndarray
    target_mask: np.ndarray
    T: np.ndarray

    @property
    def n_vertices(self):
        return int(np.prod(self.dims))

    def coords(self):
        grids = np.meshgrid(*(np.arange(L, dtype=np.int64) for L in self.dims),
                            indexing="ij")
        return np.stack([x.ravel() for x in grids], axis=1)


def build_torus_graph(tenv, direction, level=0):
    """Geodesic forest on a torus environment toward {z . theta = level}."""
    if not isinstance(tenv, TorusEnvironment):
        raise ValueError("build_torus_graph requires a TorusEnvironment")
    dims = tenv.dims
    d = len(dims)
    n = int(np.prod(dims))
    grids = np.meshgrid(*(np.arange(L, dtype=np.int64) for L in dims), indexing="ij")
    coords = np.stack([x.ravel() for x in grids], axis=1)
    theta = np.asarray(direction, dtype=np.int64)
    tmask = (coords @ theta) == int(level)
    if not tmask.any():
        raise ValueError("no target vertex on torus")

    rows, cols, data = [], [], []
    nbr_plus = []
    weights_plus = []
    for axis in range(d):
        nxt = coords.copy()
        nxt[:, axis] = (nxt[:, axis] + 1) % dims[axis]
        j = np.ravel_multi_index(tuple(nxt.T), dims)
        w = tenv.edge_weights(coords, np.full(n, axis, dtype=np.int64))
        rows.append(np.arange(n))
        cols.append(j)
        data.append(w)
        nbr_plus.append(j)
        weights_plus.append(w)
    graph = csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n, n))
    T = dijkstra(graph, directed=False, indices=np.flatnonzero(tmask), min_only=True)

    cand = np.full((2 * d, n), np.inf)
    nbr = np.zeros((2 * d, n), dtype=np.int64)
    for axis in range(d):
        j = nbr_plus[axis]
        w = weights_plus[axis]
        cand[2 * axis] = w + T[j]
        nbr[2 * axis] = j
        cand[2 * axis + 1, j] = w + T
        nbr[2 * axis + 1, j] = np.arange(n)
    choice = np.argmin(cand, axis=0)
    succ = nbr[choice, np.arange(n)]
    succ[tmask] = -1
    return TorusGraph(dims=dims, direction=tuple(int(t) for t in theta),
                      level=int(level), succ=succ, target_mask=tmask, T=T)


@dataclass
class MassTransportReport:
    dims: tuple
    n_vertices: int
    n_components: int
    total_sent: int
    total_received: int
    mean_sent: float
    mean_received: float
    difference: int

    def rows(self):
        return [("total_sent", "", "", self.total_sent),
                ("total_received", "", "", self.total_received),
                ("difference", "", "", self.difference)]


def torus_components(g):
    uf = UnionFind(g.n_vertices)
    for i in np.flatnonzero(g.succ >= 0):
        uf.union(int(i), int(g.succ[i]))
    roots = np.fromiter((uf.find(i) for i in range(g.n_vertices)),
                        dtype=np.int64, count=g.n_vertices)
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def mass_transport_balance(g, theta):
    """Exact double-count check: unit mass from every vertex to its component progenitor.

    Sent mass is accumulated vertex by vertex, received mass progenitor by
    progenitor; on a torus the two totals agree as integers in every
    realization.
    """
    if not isinstance(g, TorusGraph):
        raise ValueError("mass transport balance requires a torus-built graph")
    theta = np.asarray(theta, dtype=np.int64)
    coords = g.coords()
    labels = torus_components(g)
    dots = coords @ theta
    # rank vertices by (level, lexicographic coords); progenitor = min rank per label
    order = np.lexsort(tuple(coords[:, j] for j in reversed(range(coords.shape[1]))) + (dots,))
    rank = np.empty(g.n_vertices, dtype=np.int64)
    rank[order] = np.arange(g.n_vertices)
    n_comp = labels.max() + 1
    best = np.full(n_comp, g.n_vertices, dtype=np.int64)
    np.minimum.at(best, labels, rank)
    prog_index = order[best]            # vertex index of each component's progenitor

    sent = 0
    for x in range(g.n_vertices):
        if prog_index[labels[x]] >= 0:
            sent += 1
    received = np.zeros(g.n_vertices, dtype=np.int64)
    np.add.at(received, prog_index[labels], 1)
    total_received = int(received.sum())
    n = g.n_vertices
    return MassTransportReport(
        dims=g.dims, n_vertices=n, n_components=int(n_comp),
        total_sent=int(sent), total_received=total_received,
        mean_sent=sent / n, mean_received=total_received / n,
        difference=int(sent - total_received))
