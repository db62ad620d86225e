import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gffmetric.experiments import three_boundary_network
from gffmetric.fieldsim import subdivide_edge
from gffmetric.network import (
    BoundarySpec,
    Edge,
    Network,
    NetworkError,
    boundary_mean,
    eroded_kernel,
    eroded_network,
    effective_kernel,
    eliminate_interior,
    green_matrix,
    hadamard_check,
    harmonic_extension,
    load_network,
    network_to_document,
    set_resistance,
    star_mesh,
    two_point_resistance,
)

from conftest import dense_laplacian, random_boundary, random_connected_network


def pinv_resistance(net, x, y):
    """Oracle: R(x, y) = (e_x - e_y)^T L^+ (e_x - e_y) with the dense pseudo-inverse."""
    L = dense_laplacian(net)
    e = np.zeros(net.n)
    e[net.vertices.index(x)] = 1.0
    e[net.vertices.index(y)] = -1.0
    return float(e @ np.linalg.pinv(L) @ e)


def dense_schur(net, F):
    L = dense_laplacian(net)
    f = [net.vertices.index(x) for x in F]
    o = [i for i in range(net.n) if i not in f]
    if not o:
        return L[np.ix_(f, f)]
    return L[np.ix_(f, f)] - L[np.ix_(f, o)] @ np.linalg.solve(L[np.ix_(o, o)], L[np.ix_(o, f)])


graphs = st.builds(
    lambda seed, n, extra: random_connected_network(random.Random(seed), n, extra),
    st.integers(0, 10**6), st.integers(3, 9), st.integers(0, 8),
)


# ---------------------------------------------------------------- validation

def test_rejects_bad_networks():
    with pytest.raises(NetworkError):
        Network(["a"], [Edge("a", "a", 1.0)])
    with pytest.raises(NetworkError):
        Network(["a", "b"], [Edge("a", "b", 0.0)])
    with pytest.raises(NetworkError):
        Network(["a", "b", "c"], [Edge("a", "b", 1.0)])
    with pytest.raises(NetworkError):
        Network(["a", "b"], [Edge("a", "z", 1.0)])


def test_boundary_partition_validation():
    with pytest.raises(NetworkError):
        BoundarySpec({"a": 0.0, "b": 1.0}, ("a",), ("a",))
    with pytest.raises(NetworkError):
        BoundarySpec({"a": 0.0, "b": 1.0}, ("a",), ("c",))
    bc = BoundarySpec({"a": 0.0, "b": 1.0})
    with pytest.raises(NetworkError):
        bc.require_partition()


def test_load_network_round_trip_and_errors():
    net = Network(["a", "b", "c"], [Edge("a", "b", 2.0), Edge("b", "c", 0.5)])
    bc = BoundarySpec({"a": 0.1, "c": 0.2}, ("a",), ("c",))
    doc = json.dumps(network_to_document(net, bc))
    net2, bc2 = load_network(doc)
    assert net2.vertices == net.vertices and bc2.hat == ("a",) and bc2.check == ("c",)
    with pytest.raises(NetworkError, match="parse error"):
        load_network("{not json")
    with pytest.raises(NetworkError, match="parse error"):
        load_network({"vertices": ["a"]})


# ---------------------------------------------------------------- resistance

def test_series_and_parallel():
    series = Network(["a", "b", "c"], [Edge("a", "b", 1.0), Edge("b", "c", 0.5)])
    assert two_point_resistance(series, "a", "c") == pytest.approx(3.0, rel=1e-12)
    par = Network(["a", "b"], [Edge("a", "b", 1.0), Edge("a", "b", 3.0)])
    assert two_point_resistance(par, "a", "b") == pytest.approx(0.25, rel=1e-12)


def test_wheatstone_balanced():
    # Balanced bridge: the middle resistor carries no current, R = (1+1)||(1+1) = 1.
    net = Network(list("sabt"), [Edge("s", "a", 1), Edge("s", "b", 1), Edge("a", "t", 1), Edge("b", "t", 1), Edge("a", "b", 7)])
    assert two_point_resistance(net, "s", "t") == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(graphs, st.data())
def test_resistance_matches_pseudoinverse(net, data):
    x, y = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=2, unique=True))
    assert two_point_resistance(net, x, y) == pytest.approx(pinv_resistance(net, x, y), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(graphs, st.data())
def test_kernel_is_a_laplacian_and_matches_dense_schur(net, data):
    F = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=min(5, net.n), unique=True))
    k = effective_kernel(net, F)
    lap = k.laplacian()
    np.testing.assert_allclose(lap, dense_schur(net, F), rtol=1e-9, atol=1e-12)
    assert np.allclose(k.entries, k.entries.T)
    assert np.all(k.entries >= -1e-12)
    np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(graphs, st.data())
def test_kernel_restriction_is_consistent(net, data):
    F = data.draw(st.lists(st.sampled_from(net.vertices), min_size=3, max_size=min(6, net.n), unique=True))
    sub = F[:-1] if len(F) > 2 else F
    big = effective_kernel(net, F)
    np.testing.assert_allclose(big.restrict(sub).entries, effective_kernel(net, sub).entries, rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(graphs, st.data())
def test_rayleigh_monotonicity(net, data):
    x, y = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=2, unique=True))
    k = data.draw(st.integers(0, len(net.edges) - 1))
    stronger = net.with_edges([Edge(e.u, e.v, e.conductance * (2.0 if i == k else 1.0)) for i, e in enumerate(net.edges)])
    assert two_point_resistance(stronger, x, y) <= two_point_resistance(net, x, y) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(graphs, st.data())
def test_star_mesh_preserves_kernel(net, data):
    F = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=net.n - 1, unique=True))
    v = data.draw(st.sampled_from([x for x in net.vertices if x not in F]))
    reduced = star_mesh(net, v, F)
    np.testing.assert_allclose(effective_kernel(reduced, F).entries, effective_kernel(net, F).entries, rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(graphs, st.data())
def test_full_elimination_reproduces_kernel(net, data):
    F = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=net.n, unique=True))
    red = eliminate_interior(net, F)
    assert set(red.vertices) == set(F)
    np.testing.assert_allclose(dense_laplacian(red)[np.ix_([red.vertices.index(x) for x in F], [red.vertices.index(x) for x in F])],
                               effective_kernel(net, F).laplacian(), rtol=1e-9, atol=1e-12)


def test_star_mesh_rejects_boundary():
    net = Network(list("abc"), [Edge("a", "b", 1), Edge("b", "c", 1)])
    with pytest.raises(NetworkError):
        star_mesh(net, "a", ["a", "c"])


@settings(max_examples=30, deadline=None)
@given(graphs, st.data())
def test_set_resistance_by_short_circuit(net, data):
    pts = data.draw(st.lists(st.sampled_from(net.vertices), min_size=2, max_size=min(5, net.n), unique=True))
    cut = data.draw(st.integers(1, len(pts) - 1))
    S, T = pts[:cut], pts[cut:]
    # Oracle: merge each set into one node (infinite conductance) and use the pseudo-inverse.
    rep = {v: (S[0] if v in S else T[0] if v in T else v) for v in net.vertices}
    verts = [v for v in net.vertices if rep[v] == v]
    edges = [Edge(rep[e.u], rep[e.v], e.conductance) for e in net.edges if rep[e.u] != rep[e.v]]
    merged = Network(verts, edges)
    assert set_resistance(net, S, T) == pytest.approx(pinv_resistance(merged, S[0], T[0]), rel=1e-9)


# ---------------------------------------------------------------- harmonic / Green

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_harmonic_and_green(seed):
    rng = random.Random(seed)
    net = random_connected_network(rng, rng.randint(4, 9), rng.randint(0, 6))
    bc = random_boundary(rng, net, rng.randint(1, net.n - 2))
    h = harmonic_extension(net, bc)
    L = dense_laplacian(net)
    vec = np.array([h[v] for v in net.vertices])
    inner = [i for i, v in enumerate(net.vertices) if v not in bc.values]
    np.testing.assert_allclose((L @ vec)[inner], 0.0, atol=1e-10)
    lo, hi = min(bc.values.values()), max(bc.values.values())
    assert all(lo - 1e-12 <= vec[i] <= hi + 1e-12 for i in inner)  # maximum principle
    G = green_matrix(net, bc)
    np.testing.assert_allclose(G.entries, np.linalg.inv(L[np.ix_(inner, inner)]), rtol=1e-9, atol=1e-12)
    for x in G.points:
        assert G(x, x) == pytest.approx(set_resistance(net, [x], list(bc.values)), rel=1e-10)


def test_boundary_mean_is_weighted_average():
    net = Network(list("abcd"), [Edge("a", "c", 1.0), Edge("b", "c", 3.0), Edge("c", "d", 2.0)])
    bc = BoundarySpec({"a": 1.0, "b": 3.0, "d": 0.0}, ("a", "b"), ("d",))
    k = effective_kernel(net, ["a", "b", "d"])
    w = np.array([k("a", "d"), k("b", "d")])
    assert boundary_mean(net, bc) == pytest.approx((w @ [1.0, 3.0]) / w.sum(), rel=1e-12)
    # star: C(a,d) : C(b,d) = 1 : 3
    assert boundary_mean(net, bc) == pytest.approx(2.5, rel=1e-12)


# ---------------------------------------------------------------- erosion / variation identities

def _one_edge_boundary():
    net = Network(["a", "b", "c", "p", "q"], [Edge("a", "p", 1.0), Edge("b", "p", 2.0), Edge("c", "q", 0.5), Edge("p", "q", 1.0)])
    return net, BoundarySpec({"a": 0.0, "b": 0.0, "c": 0.0})


def test_eroded_network_zero_erosion_matches_boundary_kernel():
    net, bc = _one_edge_boundary()
    k0 = eroded_kernel(net, bc, {})
    enet, pts, bedges = eroded_network(net, bc, {})
    assert bedges == [0, 1, 2]
    np.testing.assert_allclose(k0.entries, effective_kernel(net, ["a", "b", "c"]).entries, rtol=1e-10)


def test_eroded_kernel_matches_explicit_cut():
    net, bc = _one_edge_boundary()
    r = 0.35
    # Oracle: subdivide edge a-p at distance r, then delete a and the segment [a, z].
    sub, z = subdivide_edge(net, 0, r, name="z")
    cut = Network([v for v in sub.vertices if v != "a"], [e for e in sub.edges if "a" not in (e.u, e.v)])
    oracle = effective_kernel(cut, ["z", "b", "c"]).entries
    np.testing.assert_allclose(eroded_kernel(net, bc, {0: r}).entries, oracle, rtol=1e-10)


def test_hadamard_identities_second_order():
    net, bc = three_boundary_network()
    rep = hadamard_check(net, bc, {0: 0.2, 1: 0.1, 2: 0.3, 4: 0.05}, 0)
    assert rep.passed(1e-4)
    assert rep.second_order
    kinds = {d["identity"] for d in rep.entries}
    assert kinds == {"derivative_ij", "derivative_jj"}


def test_hadamard_rejects_interior_edge():
    net, bc = three_boundary_network()
    enet, pts, bedges = eroded_network(net, bc, {})
    inner = next(k for k in range(len(net.edges)) if k not in bedges)
    with pytest.raises(NetworkError):
        hadamard_check(net, bc, {}, inner)
