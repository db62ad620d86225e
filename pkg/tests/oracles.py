"""Independent brute-force oracles shared by the unit and acceptance tests."""

import networkx as nx
import numpy as np

from gffmetric.network import Network


def simple_edge_paths(net: Network):
    """All simple paths between every ordered vertex pair, as lists of edge indices
    (ordered from the start vertex). Single-vertex paths are the empty list."""
    g = nx.MultiGraph()
    g.add_nodes_from(net.vertices)
    for k, e in enumerate(net.edges):
        g.add_edge(e.u, e.v, key=k)
    out = {}
    for s in net.vertices:
        for t in net.vertices:
            if s == t:
                out[(s, t)] = [[]]
            else:
                out[(s, t)] = [[k for (_, _, k) in p] for p in nx.all_simple_edge_paths(g, s, t)]
    return out


def brute_delta(net: Network, paths, weights, sources):
    """min over sources s and simple paths s -> x of the weight sum, accumulated from s.

    ``weights`` is (E,) or (k, E); the result is (n,) or (k, n).
    """
    w = np.asarray(weights, dtype=float)
    res = np.full(w.shape[:-1] + (net.n,), np.inf)
    for i, x in enumerate(net.vertices):
        for s in sources:
            for p in paths[(s, x)]:
                acc = np.zeros(w.shape[:-1])
                for k in p:
                    acc = acc + w[..., k]
                res[..., i] = np.minimum(res[..., i], acc)
    return res


def brute_itilde(net: Network, paths, caps, source_vals: dict):
    """max over sources s and simple paths s -> x of min(value at s, caps along the path).

    ``caps`` is (E,) or (k, E); source values are scalars or (k,) arrays.
    """
    c = np.asarray(caps, dtype=float)
    res = np.full(c.shape[:-1] + (net.n,), -np.inf)
    for i, x in enumerate(net.vertices):
        for s, hs in source_vals.items():
            for p in paths[(s, x)]:
                m = np.broadcast_to(np.asarray(hs, dtype=float), c.shape[:-1]).copy()
                for k in p:
                    m = np.minimum(m, c[..., k])
                res[..., i] = np.maximum(res[..., i], m)
    return res
