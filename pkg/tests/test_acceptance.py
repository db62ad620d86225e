"""Acceptance criteria: one test per criterion.

Statistical criteria run the fixed seeds {7, 8, 9} and pass when at least two
of the three seeds pass every check; p-value threshold 0.01 and z-tolerance 4
standard errors unless stated. Runtime bounds are checked per seed.
"""

import math
import time

import networkx as nx
import numpy as np
import pytest

from gffmetric import experiments as ex
from gffmetric.fieldsim import GaussianField
from gffmetric.laws import BridgeSpec, local_time_survival
from gffmetric.metric import batch_local_times, batch_minima, batch_shortest, batch_widest
from gffmetric.network import BoundarySpec, Edge, Network, two_point_resistance
from gffmetric.stats import RandomStream

from oracles import brute_delta, brute_itilde, simple_edge_paths

SEEDS = (7, 8, 9)
NEED = 2
P_THRESHOLD = 0.01
Z_TOL = 4.0


def run_seeds(suite: str, n: int | None = None, **kw):
    """Run one suite for every seed; returns (results, wall-clock seconds per seed)."""
    fn = ex.SUITE_FUNCS[suite]
    count = n if n is not None else ex.DEFAULT_N[suite]
    results, times = [], []
    for s in SEEDS:
        t0 = time.perf_counter()
        results.append(fn(seed=s, n=count, **kw))
        times.append(time.perf_counter() - t0)
    for r in results:
        for rep in r.reports:
            print(rep.line())
    return results, times


def assert_thresholds(results):
    for res in results:
        for rep in res.reports:
            if rep.p is not None and rep.statistic.startswith("KS"):
                assert rep.threshold == P_THRESHOLD, rep.test
            if rep.statistic == "proportion":
                assert rep.threshold == Z_TOL, rep.test


def majority(results) -> bool:
    return sum(r.passed for r in results) >= NEED


# 1 ---------------------------------------------------------------------------
def test_criterion_01_deterministic_network_suite():
    t0 = time.perf_counter()
    res = ex.suite_network(seed=0)
    elapsed = time.perf_counter() - t0
    by = {r.test: r for r in res.reports}
    assert by["network/star-mesh"].value <= 1e-9
    assert by["network/elimination"].value <= 1e-9
    assert by["network/green-diagonal"].value <= 1e-10
    var = by["network/variation-identities"]
    assert var.value <= 1e-4
    assert all(3.0 <= q <= 5.0 for q in var.details["richardson_ratios"])  # central differences are second order
    assert res.passed
    assert elapsed < 1.0


# 2 ---------------------------------------------------------------------------
def test_criterion_02_one_edge_local_time_law():
    # the positive-mass target for (w0, wT, T) = (1, 1, 2) is exp(-1)
    assert float(local_time_survival(BridgeSpec(1.0, 1.0, 2.0), 0.0)) == pytest.approx(math.exp(-1.0), rel=1e-15)
    results, times = run_seeds("eq1", n=100_000)
    assert_thresholds(results)
    names = {r.test for r in results[0].reports}
    assert names == {"eq1/zero-ends-exp", "eq1/positive-mass", "eq1/continuous-part"}
    assert majority(results)
    assert max(times) < 5.0


# 3 ---------------------------------------------------------------------------
def test_criterion_03_two_point_law_depends_only_on_resistance():
    for build in (lambda: ex.single_edge(3.0), lambda: ex.series_pair(1.0, 2.0), lambda: ex.bridge_network(3.0)):
        net, _ = build()
        assert two_point_resistance(net, "x", "y") == pytest.approx(3.0, rel=1e-12)
    assert ex.bridge_network(3.0)[0].n == 5
    results, times = run_seeds("two-point", n=100_000)
    assert_thresholds(results)
    assert len(results[0].reports) == 3 + 3  # three one-sample tests and three pairwise two-sample tests
    assert majority(results)
    assert max(times) < 30.0


# 4 ---------------------------------------------------------------------------
def test_criterion_04_rewiring_invariance():
    results, times = run_seeds("rewire", n=100_000)
    assert_thresholds(results)
    names = {r.test for r in results[0].reports}
    assert "rewire/star-vs-mesh" in names
    for g in ("star", "mesh"):
        for ell in ("0.2", "0.5", "1"):
            assert f"rewire/{g}-survival-{ell}" in names
        assert f"rewire/{g}-positive" in names
    assert majority(results)
    assert max(times) < 60.0


# 5 ---------------------------------------------------------------------------
def test_criterion_05_star_triangle_joint_non_invariance():
    results, times = run_seeds("star-joint", n=1_000_000)
    for r in results:
        d = r.data
        print(f"star slope={d.get('star_slope')} triangle slope={d.get('triangle_slope')}")
    ok = 0
    for r in results:
        d = r.data
        if "star_slope" not in d:
            continue
        ok += (d["triangle_slope"] - d["star_slope"] >= 0.5
               and abs(d["star_slope"] - 3.0) <= 0.6
               and abs(d["triangle_slope"] - 4.0) <= 0.6)
    assert ok >= NEED
    assert majority(results)
    assert max(times) < 600.0


# 6 ---------------------------------------------------------------------------
def test_criterion_06_generalized_levy_identity():
    net, bc, pts = ex.levy_graph()
    assert len(bc.values) == 4 and [bc.values[b] for b in ("b1", "b2", "b3", "b4")] == [0.2, 0.6, 0.1, 0.4]
    assert len(pts) == 3 and all(p not in bc.values for p in pts)
    results, times = run_seeds("levy", n=100_000)
    assert_thresholds(results)
    assert len(results[0].reports) == 3 * 3
    assert majority(results)
    assert max(times) < 120.0


# 7 ---------------------------------------------------------------------------
def test_criterion_07_fps_laplace_transform_in_brackets():
    results, times = run_seeds("fps-laplace", n=100_000)
    names = {r.test for r in results[0].reports}
    for g in ("edge", "five-vertex"):
        for nr in (32, 64):
            for u in ("0.25", "1", "4"):
                assert f"fps-laplace/{g}/n{nr}/u{u}" in names
    for r in results:
        for rep in r.reports:
            assert rep.threshold == Z_TOL
    assert majority(results)
    assert max(times) < 300.0


# 8 ---------------------------------------------------------------------------
def test_criterion_08_resistance_drop_is_capped_hitting_time():
    results, times = run_seeds("cor34", n=20_000)
    assert_thresholds(results)
    names = [r.test for r in results[0].reports]
    assert names == ["cor34/drop-n64", "cor34/ks-convergence", "cor34/phi-x0-normal", "cor34/sup-min"]
    assert majority(results)
    assert max(times) < 300.0


# 9 ---------------------------------------------------------------------------
def test_criterion_09_lattice_probe():
    results, times = run_seeds("lattice", n=10_000)
    assert_thresholds(results)
    for r in results:
        d = r.reports[0].details
        assert (d["rows"], d["cols"]) == (80, 40)
        assert d["extremal_distance"] == pytest.approx(2.0)
        assert np.isfinite(d["r_eff"]) and d["r_eff"] > 0  # reported as a diagnostic only
    assert majority(results)
    assert max(times) < 300.0


# 10 --------------------------------------------------------------------------
def _connected_atlas_graphs(max_vertices=5):
    for g in nx.graph_atlas_g():
        if 2 <= g.number_of_nodes() <= max_vertices and nx.is_connected(g):
            yield g


def test_criterion_10_brute_force_path_oracles():
    graphs = list(_connected_atlas_graphs())
    assert len(graphs) == 1 + 2 + 6 + 21  # connected graphs on 2..5 vertices
    samples = 1000
    for gi, g in enumerate(graphs):
        verts = [f"v{i}" for i in g.nodes]
        net = Network(verts, [Edge(f"v{a}", f"v{b}", 1.0) for a, b in g.edges])
        A = [verts[0]] if net.n == 2 else [verts[0], verts[-1]]
        bc = BoundarySpec({a: v for a, v in zip(A, (0.3, -0.2))})
        st = RandomStream(7).substream(f"atlas-{gi}")
        reps = np.arange(samples)
        f = GaussianField(net, bc).sample(st, reps)
        L = batch_local_times(net, f, st, reps)
        M = batch_minima(net, f, st, reps)
        src = [net.index[a] for a in A]
        paths = simple_edge_paths(net)
        assert np.array_equal(batch_shortest(net, L, src), brute_delta(net, paths, L, A))
        assert np.array_equal(batch_widest(net, M, src, f[:, src]),
                              brute_itilde(net, paths, M, {a: f[:, net.index[a]] for a in A}))
        # pairwise distances from every single vertex
        for x in verts:
            assert np.array_equal(batch_shortest(net, L, [net.index[x]]), brute_delta(net, paths, L, [x]))
