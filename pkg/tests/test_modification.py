import numpy as np
import pytest

import fixtures_mod as fx
from fppgeo.environment import (WeightEnvironment, exponential, uniform,
                                unit_environment, with_overrides)
from fppgeo.geodesic_graph import build_graph, forward_path
from fppgeo.geodesics import HyperplaneTarget, solve
from fppgeo.lattice import Box
from fppgeo.modification import (StripSpec, check_event_A2prime, eligible_edges,
                                 progenitor, protected_vertices, run_modification,
                                 strip_vertices, verify_severing,
                                 violating_sources)

from oracles import sort_by_order, strip_scan


def test_strip_spec_validation():
    with pytest.raises(ValueError):
        StripSpec((2, 4), 10, 5.0, 3, 0.1, 0.1)   # non-coprime direction
    with pytest.raises(ValueError):
        StripSpec((1, 0), 0, 5.0, 3, 0.1, 0.1)
    with pytest.raises(ValueError):
        StripSpec((1, 0), 10, -5.0, 3, 0.1, 0.1)


def test_strip_contains_origin_and_excludes_far_points():
    spec = StripSpec((1, 0), 10, 3.0, 2, 0.1, 0.1)
    box = Box.cube(12, 2)
    pred, verts = strip_vertices(spec, box)
    assert pred((0, 0))
    assert (0, 0) in verts
    for k in range(0, 10):
        assert not pred((k, 4))  # distance M+1 off the axis
    assert not pred((-1, 0))
    assert not pred((11, 0))


def test_strip_matches_bruteforce_scan():
    for theta, N, M in [((1, 0), 8, 2.5), ((1, 2), 6, 3.0), ((2, -1), 7, 2.0)]:
        spec = StripSpec(theta, N, M, 2, 0.1, 0.1)
        box = Box.cube(10, 2)
        _, verts = strip_vertices(spec, box)
        assert verts == strip_scan(theta, N, M, box.coords())


def test_protected_vertices_geometry():
    xi = (fx.N, 0)
    prot = set(protected_vertices(fx.BOX, fx.SPEC, xi))
    # far side of the level-0 hyperplane
    assert (0, 5) in prot
    assert (0, -5) in prot
    # near the origin on level 0: not protected
    assert (0, 0) not in prot
    # crossing the level-N hyperplane far from xi
    assert (fx.N, 5) in prot
    # cylinder boundary inside the slab
    assert (10, 13) in prot
    assert (10, 0) not in prot


def test_eligible_edges_exclude_kept_paths_and_match_bruteforce():
    env = fx.fixture_env(0)
    field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g = build_graph(field)
    prot = protected_vertices(fx.BOX, fx.SPEC, fx.XI)
    edges = eligible_edges(g, fx.SPEC, fx.Y, prot)
    edge_set = set(edges)

    # y's highway edges inside the strip are kept out of the raise set
    for k in range(0, fx.N):
        assert ((k, 1), (k + 1, 1)) not in edge_set

    # brute-force filter: strip edges minus edges on kept forward paths
    pred, verts = strip_vertices(fx.SPEC, fx.BOX)
    kept_path_edges = set()
    for z in list(prot) + [fx.Y]:
        p = forward_path(g, z).vertices
        kept_path_edges.update(tuple(sorted((u, v))) for u, v in zip(p, p[1:]))
    brute = []
    strip_set = set(verts)
    for u in verts:
        for axis in range(2):
            v = list(u)
            v[axis] += 1
            v = tuple(v)
            if v in strip_set and tuple(sorted((u, v))) not in kept_path_edges:
                brute.append((u, v))
    assert sorted(edges) == sorted(brute)


def test_event_passes_on_engineered_fixture():
    for seed in range(5):
        env = fx.fixture_env(seed)
        field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
        g = build_graph(field)
        rep = check_event_A2prime(g, field, fx.SPEC, fx.Y, fx.XI)
        assert rep.exit_and_stay
        assert rep.approach_but_disjoint
        assert rep.speed_bound
        assert rep.protected_disjoint
        assert rep.passed


def test_event_speed_bound_fails_on_unit_weights():
    # unit weights saturate the support supremum, so the margin condition fails
    env = unit_environment(2, fx.BOX, seed=0)
    field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g = build_graph(field)
    rep = check_event_A2prime(g, field, fx.SPEC, fx.Y, fx.XI)
    assert not rep.speed_bound
    assert "speed_violation" in rep.witnesses


def test_event_detects_path_intersection():
    env = fx.fixture_env(0, bridge=True)
    field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g = build_graph(field)
    rep = check_event_A2prime(g, field, fx.SPEC, fx.Y, fx.XI)
    assert not rep.approach_but_disjoint
    assert rep.witnesses["y_meets_xi_path"] == (30, 0)


def test_event_parameter_validation():
    env = fx.fixture_env(0)
    field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g = build_graph(field)
    with pytest.raises(ValueError):
        check_event_A2prime(g, field, fx.SPEC, fx.Y, (23, 0))   # off-level xi
    with pytest.raises(ValueError):
        check_event_A2prime(g, field, fx.SPEC, (0, 9), fx.XI)   # |y| > M_prime


def test_run_modification_lambda_and_weights():
    env = fx.fixture_env(1)
    out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                           box=fx.BOX, alpha=fx.ALPHA)
    assert out.lam == pytest.approx(0.95)
    env_mod = with_overrides(env, out.edge_set, out.lam)
    for e in out.edge_set[::17]:
        assert env_mod.weight_of(e) >= 0.95


def test_run_modification_low_lambda_identity():
    env = fx.fixture_env(2)
    out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="unbounded", lam=0.0,
                           box=fx.BOX, alpha=fx.ALPHA)
    assert out.summary_original == out.summary_modified


def test_run_modification_mode_errors():
    env = WeightEnvironment(2, exponential(1.0), 0)
    with pytest.raises(ValueError):
        run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                         box=fx.BOX, alpha=fx.ALPHA)
    env2 = fx.fixture_env(0)
    with pytest.raises(ValueError):
        run_modification(env2, fx.SPEC, fx.Y, fx.XI, mode="unbounded",
                         box=fx.BOX, alpha=fx.ALPHA)  # missing lambda
    bad_delta = StripSpec((1, 0), fx.N, 12.0, 3, 0.1, 0.3)  # mean > S - 2 delta
    with pytest.raises(ValueError):
        run_modification(env2, bad_delta, fx.Y, fx.XI, mode="bounded",
                         box=fx.BOX, alpha=fx.ALPHA)


def test_severing_on_fixture_true_with_margin():
    for seed in range(5):
        env = fx.fixture_env(seed)
        out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                               box=fx.BOX, alpha=fx.ALPHA)
        assert out.event.passed
        assert out.severed
        assert out.verdict.bound_value == pytest.approx(0.925 * fx.N)


def test_severing_false_on_bridge_fixture_with_witness():
    env = fx.fixture_env(0, bridge=True)
    out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                           box=fx.BOX, alpha=fx.ALPHA)
    assert not out.event.passed
    assert not out.severed
    assert out.verdict.witness is not None
    wz = out.verdict.witness
    assert sum(c * t for c, t in zip(wz, fx.SPEC.theta)) <= 0
    v1, v2 = out.verdict.crossing
    assert out.verdict.crossing_time is not None
    # the leak rides the cheap corridor, far below the severing bound
    assert out.verdict.crossing_time < out.verdict.bound_value


def test_progenitor_examples_and_oracle():
    assert progenitor([(3, 7)], (1, 0)) == (3, 7)
    assert progenitor([(0, 0), (0, 1), (1, -5)], (1, 0)) == (0, 0)
    with pytest.raises(ValueError):
        progenitor([], (1, 0))
    rng = np.random.default_rng(5)
    for _ in range(50):
        pts = [tuple(int(c) for c in rng.integers(-9, 10, size=2)) for _ in range(12)]
        theta = (1, 2)
        assert progenitor(pts, theta) == sort_by_order(pts, theta)[0]


def test_progenitor_of_severed_component_above_zero():
    # when severing holds, every vertex reaching the xi path sits at level > 0
    env = fx.fixture_env(3)
    out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                           box=fx.BOX, alpha=fx.ALPHA)
    assert out.severed
    env_mod = with_overrides(env, out.edge_set, out.lam)
    field_mod = solve(env_mod, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g_mod = build_graph(field_mod)
    indptr, indices = g_mod.reverse_index()
    xi_path = forward_path(g_mod, fx.XI)
    cluster = set(map(int, xi_path.indices))
    frontier = list(cluster)
    while frontier:
        nxt = []
        for i in frontier:
            for j in indices[indptr[i]:indptr[i + 1]]:
                if int(j) not in cluster:
                    cluster.add(int(j))
                    nxt.append(int(j))
        frontier = nxt
    members = [g_mod.box.vertex_at(i) for i in cluster]
    prog = progenitor(members, fx.SPEC.theta)
    assert sum(c * t for c, t in zip(prog, fx.SPEC.theta)) > 0


def test_monotone_severing_with_pinned_reference():
    # raising lambda only shrinks the violating set when the reference path
    # is held fixed; verified 0/50 violations in the pilot
    for seed in range(12):
        env = WeightEnvironment(2, uniform(0, 1), seed)
        field = solve(env, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
        g = build_graph(field)
        prot = protected_vertices(fx.BOX, fx.SPEC, fx.XI)
        edges = eligible_edges(g, fx.SPEC, fx.Y, prot)
        ref = forward_path(g, fx.XI).vertices

        def vset(lam):
            env2 = with_overrides(env, edges, lam)
            g2 = build_graph(solve(env2, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA)))
            return set(violating_sources(g2, fx.SPEC, fx.XI, reference=ref))

        assert vset(0.95) <= vset(0.6)


def test_xi_segment_passage_time_bound():
    # every path segment inside the raised set costs at least lambda per edge
    env = fx.fixture_env(4)
    out = run_modification(env, fx.SPEC, fx.Y, fx.XI, mode="bounded",
                           box=fx.BOX, alpha=fx.ALPHA)
    env_mod = with_overrides(env, out.edge_set, out.lam)
    edge_set = set(out.edge_set)
    field_mod = solve(env_mod, fx.BOX, HyperplaneTarget((1, 0), fx.ALPHA))
    g_mod = build_graph(field_mod)
    for start in [(5, 5), (10, -7), (20, 3)]:
        p = forward_path(g_mod, start).vertices
        run = 0
        t = 0.0
        for u, v in zip(p, p[1:]):
            if tuple(sorted((u, v))) in edge_set:
                run += 1
                t += env_mod.weight_of((u, v))
            else:
                if run:
                    assert t >= out.lam * run - 1e-12
                run, t = 0, 0.0
        if run:
            assert t >= out.lam * run - 1e-12
