"""The local-time pseudo-metric and the infimum field, sampled exactly at vertices.

Given the field at the vertices, the field inside each edge is an independent
Brownian bridge. Two conditional functionals of each bridge are sampled
exactly:

* its total local time at 0, ``L_e`` (edge weight of the pseudo-metric);
* its minimum, ``min_e`` (edge capacity for the infimum field).

The distance between vertices is the shortest-path distance with weights
``L_e``. Because local time is additive and nonnegative along a path, no
continuous path does better than some full-edge vertex path. In the same way,
the infimum field is a bottleneck (maximin) path value with capacities
``min_e``.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .fieldsim import FieldBatch, FieldSample, GaussianField, sample_fields
from .laws import sample_bridge_min_arrays, sample_local_time_arrays
from .network import BoundarySpec, Network, NetworkError
from .stats import RandomStream

__all__ = [
    "AnnotatedSample",
    "MetricSample",
    "InfimumSample",
    "annotate_local_times",
    "annotate_minima",
    "batch_local_times",
    "batch_minima",
    "delta",
    "infimum_field",
    "sign_clusters",
    "shortest_paths",
    "widest_paths",
    "batch_shortest",
    "batch_widest",
    "levy_pair_samples",
    "LevyPairs",
    "metric_to_csv",
    "edges_to_csv",
]


@dataclass
class AnnotatedSample:
    """A field sample plus optional per-edge local times and minima (edge index -> value)."""

    field: FieldSample
    edge_local_times: dict[int, float] | None = None
    edge_minima: dict[int, float] | None = None


@dataclass
class MetricSample:
    delta_to_A: dict[str, float]
    pairwise: np.ndarray | None = None
    two_set: float | None = None


@dataclass
class InfimumSample:
    itilde: dict[str, float]
    i: dict[str, float]


# --------------------------------------------------------------------------
# Conditional edge annotations


def _endpoint_values(net: Network, values: np.ndarray):
    iu, iv, c = net.edge_arrays
    return values[..., iu], values[..., iv], 1.0 / c


def batch_local_times(net: Network, values: np.ndarray, stream: RandomStream, replicates) -> np.ndarray:
    """Local times at 0 of every edge bridge, shape (replicates, edges)."""
    w0, wT, T = _endpoint_values(net, np.asarray(values))
    u = stream.substream("local_time").uniforms(replicates, len(net.edges))
    return sample_local_time_arrays(w0, wT, T, u)


def batch_minima(net: Network, values: np.ndarray, stream: RandomStream, replicates) -> np.ndarray:
    """Minima of every edge bridge, shape (replicates, edges)."""
    w0, wT, T = _endpoint_values(net, np.asarray(values))
    u = stream.substream("minimum").uniforms(replicates, len(net.edges))
    return sample_bridge_min_arrays(w0, wT, T, u)


def _field_array(net: Network, fs: FieldSample) -> np.ndarray:
    return np.array([fs.values[v] for v in net.vertices])


def annotate_local_times(net: Network, bc: BoundarySpec, fs: FieldSample, stream: RandomStream,
                         base: AnnotatedSample | None = None) -> AnnotatedSample:
    L = batch_local_times(net, _field_array(net, fs)[None, :], stream, [fs.replicate])[0]
    out = base if base is not None else AnnotatedSample(fs)
    out.edge_local_times = {k: float(x) for k, x in enumerate(L)}
    return out


def annotate_minima(net: Network, bc: BoundarySpec, fs: FieldSample, stream: RandomStream,
                    base: AnnotatedSample | None = None) -> AnnotatedSample:
    M = batch_minima(net, _field_array(net, fs)[None, :], stream, [fs.replicate])[0]
    out = base if base is not None else AnnotatedSample(fs)
    out.edge_minima = {k: float(x) for k, x in enumerate(M)}
    return out


# --------------------------------------------------------------------------
# Single-sample path computations


def shortest_paths(net: Network, weights: Sequence[float], sources: Iterable[str]) -> np.ndarray:
    """Multi-source Dijkstra over a multigraph with per-edge nonnegative weights."""
    idx = net.index
    adj = _adjacency_lists(net)
    dist = np.full(net.n, math.inf)
    heap = []
    for s in sources:
        dist[idx[s]] = 0.0
        heap.append((0.0, idx[s]))
    heapq.heapify(heap)
    while heap:
        d, x = heapq.heappop(heap)
        if d > dist[x]:
            continue
        for y, k in adj[x]:
            nd = d + weights[k]
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return dist


def widest_paths(net: Network, capacities: Sequence[float], sources: dict[str, float]) -> np.ndarray:
    """Maximin path values: best over paths to a source of the minimum capacity met,
    where each source ``s`` itself contributes ``sources[s]``."""
    idx = net.index
    adj = _adjacency_lists(net)
    best = np.full(net.n, -math.inf)
    heap = []
    for s, val in sources.items():
        best[idx[s]] = max(best[idx[s]], val)
    for i in np.flatnonzero(np.isfinite(best)):
        heap.append((-best[i], int(i)))
    heapq.heapify(heap)
    while heap:
        nb, x = heapq.heappop(heap)
        b = -nb
        if b < best[x]:
            continue
        for y, k in adj[x]:
            cand = min(b, capacities[k])
            if cand > best[y]:
                best[y] = cand
                heapq.heappush(heap, (-cand, y))
    return best


_ADJ_CACHE: dict[int, tuple[Network, list]] = {}


def _adjacency_lists(net: Network) -> list[list[tuple[int, int]]]:
    hit = _ADJ_CACHE.get(id(net))
    if hit is not None and hit[0] is net:
        return hit[1]
    adj: list[list[tuple[int, int]]] = [[] for _ in range(net.n)]
    iu, iv, _ = net.edge_arrays
    for k, (a, b) in enumerate(zip(iu.tolist(), iv.tolist())):
        adj[a].append((b, k))
        adj[b].append((a, k))
    if len(_ADJ_CACHE) > 64:
        _ADJ_CACHE.clear()
    _ADJ_CACHE[id(net)] = (net, adj)
    return adj


def _resolve_sources(bc: BoundarySpec | None, sources) -> list[str]:
    if sources is None:
        if bc is None:
            raise NetworkError("sources or boundary required")
        return list(bc.values)
    return [str(s) for s in sources]


def delta(net: Network, ann: AnnotatedSample, sources: Iterable[str], *, pairwise: bool = False,
          targets: Iterable[str] | None = None) -> MetricSample:
    """Distances to ``sources`` with edge weights equal to the sampled local times.

    ``pairwise`` additionally fills the full vertex-to-vertex distance matrix;
    ``targets`` records the set-to-set distance from ``sources`` to ``targets``.
    """
    if ann.edge_local_times is None:
        raise NetworkError("delta needs edge local times (annotate_local_times)")
    w = [ann.edge_local_times[k] for k in range(len(net.edges))]
    srcs = list(sources)
    d = shortest_paths(net, w, srcs)
    out = MetricSample({v: float(d[i]) for i, v in enumerate(net.vertices)})
    if pairwise:
        out.pairwise = np.vstack([shortest_paths(net, w, [v]) for v in net.vertices])
    if targets is not None:
        out.two_set = float(min(d[net.index[t]] for t in targets))
    return out


def infimum_field(net: Network, ann: AnnotatedSample, bc: BoundarySpec, sources: Iterable[str] | None = None) -> InfimumSample:
    """Best achievable path minimum of the field from each vertex to the sources (default A)."""
    if ann.edge_minima is None:
        raise NetworkError("infimum_field needs edge minima (annotate_minima)")
    srcs = _resolve_sources(bc, sources)
    cap = [ann.edge_minima[k] for k in range(len(net.edges))]
    best = widest_paths(net, cap, {s: ann.field.values[s] for s in srcs})
    it = {v: float(best[i]) for i, v in enumerate(net.vertices)}
    return InfimumSample(it, {v: min(0.0, x) for v, x in it.items()})


def sign_clusters(net: Network, ann: AnnotatedSample) -> list[set[str]]:
    """Components of the graph keeping only edges whose bridge never hits 0."""
    if ann.edge_local_times is None:
        raise NetworkError("sign_clusters needs edge local times")
    iu, iv, _ = net.edge_arrays
    keep = np.array([ann.edge_local_times[k] == 0.0 for k in range(len(net.edges))], dtype=bool)
    g = sp.coo_matrix((np.ones(int(keep.sum())), (iu[keep], iv[keep])), shape=(net.n, net.n))
    _, lab = connected_components(g, directed=False)
    groups: dict[int, set[str]] = {}
    for i, l in enumerate(lab):
        groups.setdefault(int(l), set()).add(net.vertices[i])
    return sorted(groups.values(), key=lambda s: min(net.index[v] for v in s))


# --------------------------------------------------------------------------
# Batched path computations (replicates along axis 0)

_BF_LIMIT = 64


def batch_shortest(net: Network, weights: np.ndarray, source_idx: Sequence[int]) -> np.ndarray:
    """Multi-source shortest-path distances for each replicate row of ``weights`` (k, E)."""
    weights = np.asarray(weights, dtype=float)
    k = weights.shape[0]
    src = np.asarray(source_idx, dtype=np.int64)
    if net.n <= _BF_LIMIT:
        iu, iv, _ = net.edge_arrays
        dist = np.full((k, net.n), np.inf)
        dist[:, src] = 0.0
        for _ in range(net.n):
            changed = False
            for e in range(len(net.edges)):
                a, b = iu[e], iv[e]
                w = weights[:, e]
                da, db = dist[:, a], dist[:, b]
                na = np.minimum(da, db + w)
                nb = np.minimum(db, da + w)
                if not changed and (np.any(na < da) or np.any(nb < db)):
                    changed = True
                dist[:, a] = na
                dist[:, b] = nb
            if not changed:
                break
        return dist
    return _blockdiag_dijkstra(net, weights, src)


def _blockdiag_dijkstra(net: Network, weights: np.ndarray, src: np.ndarray, chunk_vertices: int = 400_000) -> np.ndarray:
    """Replicates as disjoint copies of the graph in one sparse matrix, solved by one Dijkstra call."""
    order, starts, indices, indptr, perm = _csr_pattern(net)
    k = weights.shape[0]
    n = net.n
    per = max(1, chunk_vertices // n)
    out = np.empty((k, n))
    nnz = indices.size
    for s in range(0, k, per):
        blk = weights[s : s + per]
        kb = blk.shape[0]
        # parallel edges keep their minimum weight; zero weights stay explicit entries
        vals = np.minimum.reduceat(blk[:, order], starts, axis=1)[:, perm]
        ind = (indices[None, :] + (np.arange(kb) * n)[:, None]).ravel()
        ptr = np.concatenate([(indptr[:-1][None, :] + (np.arange(kb) * nnz)[:, None]).ravel(), [kb * nnz]])
        g = sp.csr_matrix((vals.ravel(), ind, ptr), shape=(kb * n, kb * n))
        srcs = (src[None, :] + (np.arange(kb) * n)[:, None]).ravel()
        d = dijkstra(g, directed=False, indices=srcs, min_only=True)
        out[s : s + kb] = d.reshape(kb, n)
    return out


_PATTERN_CACHE: dict[int, tuple] = {}


def _csr_pattern(net: Network):
    hit = _PATTERN_CACHE.get(id(net))
    if hit is not None and hit[0] is net:
        return hit[1]
    iu, iv, _ = net.edge_arrays
    a = np.minimum(iu, iv)
    b = np.maximum(iu, iv)
    order = np.lexsort((b, a))
    a_s, b_s = a[order], b[order]
    first = np.ones(a_s.size, dtype=bool)
    first[1:] = (a_s[1:] != a_s[:-1]) | (b_s[1:] != b_s[:-1])
    starts = np.flatnonzero(first)
    ua, ub = a_s[starts], b_s[starts]
    # row-major CSR layout of the unique (a, b) pairs
    csr_order = np.lexsort((ub, ua))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(ua, minlength=net.n))])
    pat = (order, starts, ub[csr_order], indptr, csr_order)
    if len(_PATTERN_CACHE) > 64:
        _PATTERN_CACHE.clear()
    _PATTERN_CACHE[id(net)] = (net, pat)
    return pat


def batch_widest(net: Network, caps: np.ndarray, source_idx: Sequence[int], source_vals: np.ndarray) -> np.ndarray:
    """Maximin values per replicate; ``source_vals`` has shape (k, |sources|)."""
    caps = np.asarray(caps, dtype=float)
    k = caps.shape[0]
    src = np.asarray(source_idx, dtype=np.int64)
    best = np.full((k, net.n), -np.inf)
    best[:, src] = np.asarray(source_vals, dtype=float).reshape(k, -1)
    iu, iv, _ = net.edge_arrays
    if net.n <= _BF_LIMIT:
        for _ in range(net.n):
            changed = False
            for e in range(len(net.edges)):
                a, b = iu[e], iv[e]
                c = caps[:, e]
                ba, bb = best[:, a], best[:, b]
                na = np.maximum(ba, np.minimum(bb, c))
                nb = np.maximum(bb, np.minimum(ba, c))
                if not changed and (np.any(na > ba) or np.any(nb > bb)):
                    changed = True
                best[:, a] = na
                best[:, b] = nb
            if not changed:
                break
        return best
    names = net.vertices
    for r in range(k):
        best[r] = widest_paths(net, caps[r], {names[i]: best[r, i] for i in src})
    return best


# --------------------------------------------------------------------------
# Generalized Levy correspondence


@dataclass
class LevyPairs:
    """Per-vertex samples of (|phi|, delta to A) and (phi - I, -I) from independent replicate sets."""

    vertices: tuple[str, ...]
    abs_phi: np.ndarray
    delta: np.ndarray
    phi_minus_i: np.ndarray
    neg_i: np.ndarray
    replicates: np.ndarray
    seed: int

    def column(self, v: str) -> int:
        return self.vertices.index(v)


def levy_pair_samples(net: Network, bc: BoundarySpec, n: int, stream: RandomStream,
                      start: int = 0, sampler: GaussianField | None = None) -> LevyPairs:
    """Left collection from field + local times, right collection from independent field + minima."""
    if any(v < 0 for v in bc.values.values()):
        raise NetworkError("levy_pair_samples needs nonnegative boundary values")
    g = sampler if sampler is not None else GaussianField(net, bc)
    reps = np.arange(start, start + n, dtype=np.int64)
    src = [net.index[a] for a in bc.values]
    left = stream.substream("levy-left")
    fl = g.sample(left, reps)
    L = batch_local_times(net, fl, left, reps)
    d = batch_shortest(net, L, src)
    right = stream.substream("levy-right")
    fr = g.sample(right, reps)
    M = batch_minima(net, fr, right, reps)
    it = batch_widest(net, M, src, fr[:, src])
    I = np.minimum(it, 0.0)
    return LevyPairs(net.vertices, np.abs(fl), d, fr - I, -I, reps, stream.seed)


# --------------------------------------------------------------------------
# CSV


def metric_to_csv(pairs: LevyPairs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "vertex", "|phi|", "delta", "phiMinusI", "negI"])
    for i, r in enumerate(pairs.replicates):
        for j, v in enumerate(pairs.vertices):
            w.writerow([int(r), v, repr(float(pairs.abs_phi[i, j])), repr(float(pairs.delta[i, j])),
                        repr(float(pairs.phi_minus_i[i, j])), repr(float(pairs.neg_i[i, j]))])
    return buf.getvalue()


def edges_to_csv(net: Network, replicates, L: np.ndarray, M: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "edge", "L", "min"])
    for i, r in enumerate(np.asarray(replicates)):
        for k, e in enumerate(net.edges):
            w.writerow([int(r), f"{e.u}-{e.v}#{k}", repr(float(L[i, k])), repr(float(M[i, k]))])
    return buf.getvalue()
