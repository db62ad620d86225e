"""Exact sampling of the discrete GFF at vertices, edge refinement, and the
Gaussian log-density of field values at a finite set of points.

The field on vertices is ``harmonic extension of h + N(0, G)`` where ``G`` is
the Green function of the walk killed on ``A``. Interior values are drawn by
back-substitution through the Cholesky factor of the interior Laplacian block
(the precision matrix), so sampling is exact and reproducible.

Values inside an edge, given the endpoint values, are an independent Brownian
bridge of length equal to the edge resistance. :func:`sample_refined` uses this
to fill subdivision points exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from ._linalg import SPDFactor
from .network import (
    BoundarySpec,
    Edge,
    Network,
    NetworkError,
    effective_kernel,
    harmonic_vector,
)
from .stats import RandomStream

__all__ = [
    "FieldSample",
    "FieldBatch",
    "GaussianField",
    "RefinedNetwork",
    "sample_field",
    "sample_fields",
    "refine",
    "sample_refined",
    "subdivide_edge",
    "log_density",
    "fields_to_csv",
]


@dataclass(frozen=True)
class FieldSample:
    """One field realization at the vertices of a network."""

    values: dict[str, float]
    seed: int
    replicate: int


@dataclass
class FieldBatch:
    """Several replicates stored as an array of shape (replicates, vertices)."""

    vertices: tuple[str, ...]
    values: np.ndarray
    replicates: np.ndarray
    seed: int

    def sample(self, i: int) -> FieldSample:
        return FieldSample(dict(zip(self.vertices, map(float, self.values[i]))), self.seed, int(self.replicates[i]))

    def column(self, v: str) -> np.ndarray:
        return self.values[:, self.vertices.index(v)]

    def __len__(self) -> int:
        return self.values.shape[0]


class GaussianField:
    """Precomputed sampler for the GFF on ``net`` with boundary data ``bc``."""

    def __init__(self, net: Network, bc: BoundarySpec):
        bc.validate_for(net)
        self.net = net
        self.bc = bc
        idx = net.index
        bmask = np.zeros(net.n, dtype=bool)
        bmask[[idx[a] for a in bc.values]] = True
        self.interior = np.flatnonzero(~bmask)
        self.mean = harmonic_vector(net, bc)

    @cached_property
    def factor(self) -> SPDFactor:
        lap = self.net.laplacian
        return SPDFactor(lap[self.interior][:, self.interior])

    def from_normals(self, z: np.ndarray) -> np.ndarray:
        """Field values (k, n) from standard normals of shape (k, n_interior)."""
        k = z.shape[0]
        out = np.broadcast_to(self.mean, (k, self.net.n)).copy()
        if self.interior.size:
            out[:, self.interior] += self.factor.sample(z.T).T
        return out

    def sample(self, stream: RandomStream, replicates) -> np.ndarray:
        reps = np.atleast_1d(np.asarray(replicates, dtype=np.int64))
        z = stream.substream("field").normals(reps, self.interior.size)
        return self.from_normals(z)


def sample_fields(net: Network, bc: BoundarySpec, stream: RandomStream, replicates,
                  sampler: GaussianField | None = None) -> FieldBatch:
    """Field values for the given replicate indices (bit-identical for any batching)."""
    g = sampler if sampler is not None else GaussianField(net, bc)
    reps = np.atleast_1d(np.asarray(replicates, dtype=np.int64))
    return FieldBatch(net.vertices, g.sample(stream, reps), reps, stream.seed)


def sample_field(net: Network, bc: BoundarySpec, stream: RandomStream, replicate: int = 0) -> FieldSample:
    return sample_fields(net, bc, stream, [replicate]).sample(0)


def fields_to_csv(batch: FieldBatch) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "vertex", "value"])
    for i, r in enumerate(batch.replicates):
        for j, v in enumerate(batch.vertices):
            w.writerow([int(r), v, repr(float(batch.values[i, j]))])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Refinement


@dataclass
class RefinedNetwork:
    """A network whose edges are subdivided into equal-resistance pieces.

    ``chains[k]`` lists refined vertex indices along base edge ``k`` from its
    ``u`` end to its ``v`` end (endpoints included); ``positions[name]`` maps
    every subdivision vertex to (base edge index, distance from the ``u`` end).
    """

    base: Network
    network: Network
    counts: np.ndarray
    chains: list[np.ndarray]
    positions: dict[str, tuple[int, float]] = field(default_factory=dict)

    @property
    def base_index(self) -> np.ndarray:
        """Refined indices of the base vertices, in base order."""
        return np.arange(self.base.n)

    def sub_edge_owner(self) -> np.ndarray:
        """Base edge index of every refined edge, in refined edge order."""
        return np.repeat(np.arange(len(self.base.edges)), self.counts)


def _counts(net: Network, n) -> np.ndarray:
    if isinstance(n, Mapping):
        counts = np.ones(len(net.edges), dtype=np.int64)
        for k, c in n.items():
            counts[int(k)] = int(c)
    else:
        counts = np.full(len(net.edges), int(n), dtype=np.int64)
    if np.any(counts < 1):
        raise NetworkError("subdivision counts must be >= 1")
    return counts


def refine(net: Network, bc: BoundarySpec | None = None, n=1) -> RefinedNetwork:
    """Subdivide every edge ``e`` into ``n_e`` pieces of resistance R(e)/n_e.

    Base vertices keep their names and come first (same order); new vertices
    are named ``"{u}~{v}#{k}:{j}"``. The boundary is unchanged.
    """
    counts = _counts(net, n)
    verts = list(net.vertices)
    idx = dict(net.index)
    edges: list[Edge] = []
    chains: list[np.ndarray] = []
    positions: dict[str, tuple[int, float]] = {}
    for k, e in enumerate(net.edges):
        c = int(counts[k])
        chain = [idx[e.u]]
        step = e.resistance / c
        for j in range(1, c):
            name = f"{e.u}~{e.v}#{k}:{j}"
            idx[name] = len(verts)
            verts.append(name)
            positions[name] = (k, j * step)
            chain.append(idx[name])
        chain.append(idx[e.v])
        cond = e.conductance * c
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append(Edge(verts[a], verts[b], cond))
        chains.append(np.array(chain, dtype=np.int64))
    return RefinedNetwork(net, Network(verts, edges), counts, chains, positions)


def sample_refined(rn: RefinedNetwork, bc: BoundarySpec, stream: RandomStream, replicates,
                   sampler: GaussianField | None = None) -> FieldBatch:
    """Refined-network field: base GFF then exact Brownian-bridge filling of each edge.

    Returns values on all refined vertices (base vertices first).
    """
    base = sampler if sampler is not None else GaussianField(rn.base, bc)
    reps = np.atleast_1d(np.asarray(replicates, dtype=np.int64))
    vb = base.sample(stream, reps)
    k = reps.size
    out = np.empty((k, rn.network.n))
    out[:, : rn.base.n] = vb
    iu, iv, cond = rn.base.edge_arrays
    R = 1.0 / cond
    nmax = int(rn.counts.max())
    if nmax > 1:
        z = stream.substream("fill").normals(reps, len(rn.base.edges) * (nmax - 1)).reshape(k, len(rn.base.edges), nmax - 1)
        prev = vb[:, iu]  # (k, E)
        end = vb[:, iv]
        counts = rn.counts
        for j in range(1, nmax):
            active = np.flatnonzero(counts > j)
            if active.size == 0:
                break
            s = R[active] / counts[active]  # sub-edge resistance
            rem = R[active] - (j - 1) * s  # remaining length from previous point to the v end
            w_prev = prev[:, active]
            mean = w_prev + (s / rem) * (end[:, active] - w_prev)
            var = s * (rem - s) / rem
            val = mean + np.sqrt(var) * z[:, active, j - 1]
            prev[:, active] = val
            cols = np.array([rn.chains[e][j] for e in active], dtype=np.int64)
            out[:, cols] = val
    return FieldBatch(rn.network.vertices, out, reps, stream.seed)


def subdivide_edge(net: Network, k: int, r: float, name: str | None = None) -> tuple[Network, str]:
    """Insert a vertex at distance ``r`` from the ``u`` end of edge ``k`` (same metric graph)."""
    e = net.edges[k]
    if not (0.0 < r < e.resistance):
        raise NetworkError("subdivision point must lie strictly inside the edge")
    name = name or f"{e.u}~{e.v}#{k}@{r:g}"
    if name in net.index:
        raise NetworkError(f"vertex {name!r} already exists")
    edges = list(net.edges[:k]) + [Edge(e.u, name, 1.0 / r), Edge(name, e.v, 1.0 / (e.resistance - r))] + list(net.edges[k + 1:])
    return Network(list(net.vertices) + [name], edges), name


# --------------------------------------------------------------------------
# Density


def log_density(net: Network, bc: BoundarySpec, points: Mapping) -> float:
    """Log-density (up to an additive constant) of the field taking values ``w`` at points ``B``.

    ``points`` maps either a non-boundary vertex name, or a tuple
    ``(edge index, distance from the edge's u end)`` naming a point inside an
    edge, to its value. The density is the Gaussian

        -1/2 sum_{x in A, z in B} C(x, z) (w(z) - h(x))^2
        -1/2 sum_{z < z'}        C(z, z') (w(z) - w(z'))^2

    with C the effective conductance matrix of A together with B.
    """
    work = net
    names: list[str] = []
    vals: list[float] = []
    inserted: dict[tuple[int, float], str] = {}
    # insert in-edge points, processing each original edge from the far end so indices stay valid
    pending = [(key, w) for key, w in points.items() if isinstance(key, tuple)]
    by_edge: dict[int, list[tuple[float, float]]] = {}
    for (k, r), w in pending:
        by_edge.setdefault(int(k), []).append((float(r), float(w)))
    for k in sorted(by_edge, reverse=True):
        e = work.edges[k]
        pts = sorted(by_edge[k])
        rs = [r for r, _ in pts]
        if any(not (0.0 < r < e.resistance) for r in rs) or len(set(rs)) != len(rs):
            raise NetworkError("in-edge points must be distinct and strictly inside their edge")
        chain = [e.u]
        new_vertices = []
        for r, _ in pts:
            nm = f"{e.u}~{e.v}#{k}@{r:g}"
            new_vertices.append(nm)
            chain.append(nm)
            inserted[(k, r)] = nm
        chain.append(e.v)
        cuts = [0.0] + rs + [e.resistance]
        new_edges = [Edge(chain[i], chain[i + 1], 1.0 / (cuts[i + 1] - cuts[i])) for i in range(len(chain) - 1)]
        work = Network(list(work.vertices) + new_vertices, list(work.edges[:k]) + new_edges + list(work.edges[k + 1:]))
    for key, w in points.items():
        if isinstance(key, tuple):
            names.append(inserted[(int(key[0]), float(key[1]))])
        else:
            if key in bc.values:
                raise NetworkError(f"point {key!r} lies in the boundary")
            if key not in work.index:
                raise NetworkError(f"unknown vertex {key!r}")
            names.append(str(key))
        vals.append(float(w))
    if not names:
        return 0.0
    A = list(bc.values)
    kern = effective_kernel(work, A + names)
    m = kern.entries
    nA = len(A)
    h = np.array([bc.values[a] for a in A])
    w = np.array(vals)
    cross = m[:nA, nA:]
    inner = np.triu(m[nA:, nA:], 1)
    term1 = np.sum(cross * (w[None, :] - h[:, None]) ** 2)
    term2 = np.sum(inner * (w[:, None] - w[None, :]) ** 2)
    return float(-0.5 * (term1 + term2))
