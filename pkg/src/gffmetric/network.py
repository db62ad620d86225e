"""Electrical networks: Laplacians, Green functions, harmonic extensions,
effective conductance matrices, star-mesh reduction and eroded-edge kernels.

Everything here is deterministic floating-point linear algebra. Vertices are
opaque strings; parallel edges are allowed and are merged by conductance
addition when the Laplacian is assembled.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ._linalg import SPDFactor, SingularBlockError

__all__ = [
    "Edge",
    "Network",
    "BoundarySpec",
    "KernelMatrix",
    "GreenMatrix",
    "NetworkError",
    "load_network",
    "load_network_file",
    "network_to_document",
    "effective_kernel",
    "schur_kernel",
    "two_point_resistance",
    "set_resistance",
    "star_mesh",
    "eliminate_interior",
    "harmonic_extension",
    "green_matrix",
    "eroded_kernel",
    "eroded_network",
    "hadamard_check",
    "HadamardReport",
    "boundary_mean",
    "matrix_to_csv",
]

ZERO_ABS = 1e-12


class NetworkError(ValueError):
    """Validation or usage error on network inputs."""


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    conductance: float

    @property
    def resistance(self) -> float:
        return 1.0 / self.conductance

    def other(self, x: str) -> str:
        if x == self.u:
            return self.v
        if x == self.v:
            return self.u
        raise NetworkError(f"{x!r} is not an endpoint of edge {self.u}-{self.v}")


@dataclass(frozen=True, eq=False)
class Network:
    """Connected weighted undirected multigraph."""

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __init__(self, vertices: Iterable[str], edges: Iterable[Edge | tuple]):
        verts = tuple(str(v) for v in vertices)
        es = tuple(e if isinstance(e, Edge) else Edge(str(e[0]), str(e[1]), float(e[2])) for e in edges)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", es)
        self._validate()

    def _validate(self) -> None:
        if not self.vertices:
            raise NetworkError("empty vertex list")
        if len(set(self.vertices)) != len(self.vertices):
            raise NetworkError("duplicate vertex identifiers")
        idx = self.index
        for e in self.edges:
            if e.u not in idx or e.v not in idx:
                raise NetworkError(f"edge {e.u}-{e.v} references an unknown vertex")
            if e.u == e.v:
                raise NetworkError(f"self-loop at {e.u!r}")
            if not (math.isfinite(e.conductance) and e.conductance > 0):
                raise NetworkError(f"nonpositive conductance on edge {e.u}-{e.v}: {e.conductance}")
        if len(self.vertices) > 1:
            ncomp, _ = connected_components(self.adjacency, directed=False)
            if ncomp != 1:
                raise NetworkError("disconnected network")

    # --- cached structure -------------------------------------------------
    @cached_property
    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u index, v index, conductance) arrays, one entry per (unmerged) edge."""
        idx = self.index
        iu = np.fromiter((idx[e.u] for e in self.edges), dtype=np.int64, count=len(self.edges))
        iv = np.fromiter((idx[e.v] for e in self.edges), dtype=np.int64, count=len(self.edges))
        c = np.fromiter((e.conductance for e in self.edges), dtype=float, count=len(self.edges))
        return iu, iv, c

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric conductance matrix with parallel edges merged."""
        iu, iv, c = self.edge_arrays
        n = self.n
        a = sp.coo_matrix((np.r_[c, c], (np.r_[iu, iv], np.r_[iv, iu])), shape=(n, n)).tocsr()
        a.sum_duplicates()
        return a

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        a = self.adjacency
        deg = np.asarray(a.sum(axis=1)).ravel()
        return (sp.diags(deg) - a).tocsr()

    def neighbors(self, v: str) -> dict[str, float]:
        """Merged conductances from ``v`` to each neighbor."""
        i = self.index[v]
        row = self.adjacency.getrow(i)
        return {self.vertices[j]: float(c) for j, c in zip(row.indices, row.data)}

    def incident(self, v: str) -> list[int]:
        return [k for k, e in enumerate(self.edges) if v in (e.u, e.v)]

    def with_edges(self, edges: Iterable[Edge]) -> "Network":
        return Network(self.vertices, edges)


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary set A with values h, optionally split into (hat, check) blocks."""

    values: Mapping[str, float]
    hat: tuple[str, ...] | None = None
    check: tuple[str, ...] | None = None

    def __post_init__(self):
        vals = {str(k): float(v) for k, v in dict(self.values).items()}
        object.__setattr__(self, "values", vals)
        if not vals:
            raise NetworkError("empty boundary")
        if (self.hat is None) != (self.check is None):
            raise NetworkError("partition needs both hat and check blocks")
        if self.hat is not None:
            hat = tuple(str(x) for x in self.hat)
            check = tuple(str(x) for x in self.check)
            object.__setattr__(self, "hat", hat)
            object.__setattr__(self, "check", check)
            if not hat or not check:
                raise NetworkError("partition blocks must be nonempty")
            if set(hat) & set(check):
                raise NetworkError("partition blocks must be disjoint")
            if set(hat) | set(check) != set(vals) or len(set(hat)) + len(set(check)) != len(vals):
                raise NetworkError("partition blocks must cover the boundary exactly")

    @property
    def boundary(self) -> tuple[str, ...]:
        return tuple(self.values)

    @property
    def has_partition(self) -> bool:
        return self.hat is not None

    def validate_for(self, net: Network) -> "BoundarySpec":
        missing = [a for a in self.values if a not in net.index]
        if missing:
            raise NetworkError(f"boundary vertices not in network: {missing}")
        return self

    def interior(self, net: Network) -> list[str]:
        return [v for v in net.vertices if v not in self.values]

    def require_partition(self) -> None:
        if not self.has_partition:
            raise NetworkError("boundary partition (hat/check) required")

    def check_sign_constancy(self) -> None:
        """Two-set laws need h of one sign on each block (zeros allowed)."""
        self.require_partition()
        for name, block in (("hat", self.hat), ("check", self.check)):
            h = np.array([self.values[x] for x in block])
            if np.any(h > 0) and np.any(h < 0):
                raise NetworkError(f"h changes sign on the {name} block")

    def with_partition(self, hat: Sequence[str], check: Sequence[str]) -> "BoundarySpec":
        return BoundarySpec(self.values, tuple(hat), tuple(check))


@dataclass(frozen=True)
class KernelMatrix:
    """Effective conductance matrix on an ordered point set (zero diagonal)."""

    points: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        m = np.array(self.entries, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @cached_property
    def pindex(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.points)}

    def __call__(self, x: str, y: str) -> float:
        return float(self.entries[self.pindex[x], self.pindex[y]])

    def laplacian(self) -> np.ndarray:
        return np.diag(self.entries.sum(axis=1)) - self.entries

    def restrict(self, subset: Sequence[str]) -> "KernelMatrix":
        """Schur complement of this kernel's Laplacian onto ``subset``."""
        return schur_kernel(self.laplacian(), self.points, subset)

    def block_sum(self, xs: Sequence[str], ys: Sequence[str]) -> float:
        ix = [self.pindex[x] for x in xs]
        iy = [self.pindex[y] for y in ys]
        return float(self.entries[np.ix_(ix, iy)].sum())

    def to_csv(self) -> str:
        return matrix_to_csv(self.points, self.entries)


@dataclass(frozen=True)
class GreenMatrix:
    """Green function of the walk killed on A, on the interior vertices."""

    points: tuple[str, ...]
    entries: np.ndarray

    @cached_property
    def pindex(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.points)}

    def __call__(self, x: str, y: str) -> float:
        return float(self.entries[self.pindex[x], self.pindex[y]])

    def to_csv(self) -> str:
        return matrix_to_csv(self.points, self.entries)


# --------------------------------------------------------------------------
# I/O


def load_network(document: str | Mapping) -> tuple[Network, BoundarySpec]:
    """Parse a graph document (JSON text or an already-decoded mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"parse error: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise NetworkError("parse error: top level must be an object")
    try:
        vertices = [str(v) for v in doc["vertices"]]
        edges = [Edge(str(e["u"]), str(e["v"]), float(e["conductance"])) for e in doc["edges"]]
        boundary = {str(k): float(v) for k, v in doc["boundary"].items()}
    except (KeyError, TypeError, AttributeError) as exc:
        raise NetworkError(f"parse error: missing or malformed field {exc}") from exc
    net = Network(vertices, edges)
    part = doc.get("partition")
    if part is not None:
        try:
            bc = BoundarySpec(boundary, tuple(part["hat"]), tuple(part["check"]))
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"parse error: malformed partition {exc}") from exc
    else:
        bc = BoundarySpec(boundary)
    bc.validate_for(net)
    return net, bc


def load_network_file(path: str | Path) -> tuple[Network, BoundarySpec]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NetworkError(f"cannot read graph file {path}: {exc}") from exc
    return load_network(text)


def network_to_document(net: Network, bc: BoundarySpec | None = None) -> dict:
    doc: dict = {
        "vertices": list(net.vertices),
        "edges": [{"u": e.u, "v": e.v, "conductance": e.conductance} for e in net.edges],
    }
    if bc is not None:
        doc["boundary"] = dict(bc.values)
        if bc.has_partition:
            doc["partition"] = {"hat": list(bc.hat), "check": list(bc.check)}
    return doc


def matrix_to_csv(points: Sequence[str], entries: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vertex", *points])
    for p, row in zip(points, np.asarray(entries)):
        w.writerow([p, *(repr(float(x)) for x in row)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Schur complements and effective quantities


def _factor(block) -> SPDFactor:
    try:
        return SPDFactor(block)
    except SingularBlockError:
        raise
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularBlockError(str(exc)) from exc


def _schur(lap, keep: np.ndarray) -> np.ndarray:
    """Dense Schur complement of ``lap`` onto index set ``keep``."""
    n = lap.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[keep] = True
    elim = np.flatnonzero(~mask)
    if sp.issparse(lap):
        lap = sp.csr_matrix(lap)
        lff = lap[keep][:, keep].toarray()
        if elim.size == 0:
            return lff
        lfi = lap[keep][:, elim].toarray()
        lii = lap[elim][:, elim]
    else:
        lap = np.asarray(lap, dtype=float)
        lff = lap[np.ix_(keep, keep)]
        if elim.size == 0:
            return lff
        lfi = lap[np.ix_(keep, elim)]
        lii = lap[np.ix_(elim, elim)]
    fac = _factor(lii)
    return lff - lfi @ fac.solve(lfi.T)


def _kernel_from_schur(points, s: np.ndarray) -> KernelMatrix:
    k = -s
    np.fill_diagonal(k, 0.0)
    k = 0.5 * (k + k.T)
    return KernelMatrix(tuple(points), k)


def schur_kernel(lap, labels: Sequence[str], subset: Sequence[str]) -> KernelMatrix:
    """Effective conductance matrix onto ``subset`` of a Laplacian indexed by ``labels``."""
    pos = {p: i for i, p in enumerate(labels)}
    keep = np.array([pos[x] for x in subset], dtype=np.int64)
    return _kernel_from_schur(subset, _schur(lap, keep))


def effective_kernel(net: Network, F: Sequence[str]) -> KernelMatrix:
    """Effective conductance matrix C^eff_F: Schur complement of the Laplacian onto F."""
    F = [str(x) for x in F]
    if len(F) < 2:
        raise NetworkError("effective_kernel needs at least two points")
    if len(set(F)) != len(F):
        raise NetworkError("duplicate points in F")
    unknown = [x for x in F if x not in net.index]
    if unknown:
        raise NetworkError(f"unknown vertices {unknown}")
    return schur_kernel(net.laplacian, net.vertices, F)


def two_point_resistance(net: Network, x: str, y: str) -> float:
    if x == y:
        raise NetworkError("two_point_resistance needs distinct vertices")
    return 1.0 / effective_kernel(net, [x, y])(x, y)


def set_resistance(net: Network, S: Sequence[str], T: Sequence[str]) -> float:
    """Effective resistance between two disjoint vertex sets, each short-circuited."""
    S, T = list(S), list(T)
    if not S or not T or set(S) & set(T):
        raise NetworkError("set_resistance needs disjoint nonempty sets")
    k = effective_kernel(net, S + T) if len(S) + len(T) >= 2 else None
    c = k.block_sum(S, T)
    return math.inf if c == 0.0 else 1.0 / c


def star_mesh(net: Network, v: str, boundary: BoundarySpec | Iterable[str] | None = None) -> Network:
    """Eliminate vertex ``v`` by the star-mesh transform.

    Each pair of neighbors (i, j) gains an edge of conductance C_i C_j / sum C,
    merged with any existing parallel edges.
    """
    if v not in net.index:
        raise NetworkError(f"unknown vertex {v!r}")
    bset = set(boundary.values) if isinstance(boundary, BoundarySpec) else set(boundary or ())
    if v in bset:
        raise NetworkError(f"cannot eliminate boundary vertex {v!r}")
    if net.n == 1:
        raise NetworkError("cannot eliminate the only vertex")
    nbrs = net.neighbors(v)
    total = sum(nbrs.values())
    merged: dict[tuple[str, str], float] = {}
    order: list[tuple[str, str]] = []

    def add(a: str, b: str, c: float):
        key = (a, b) if net.index[a] < net.index[b] else (b, a)
        if key not in merged:
            merged[key] = 0.0
            order.append(key)
        merged[key] += c

    for e in net.edges:
        if v not in (e.u, e.v):
            add(e.u, e.v, e.conductance)
    names = list(nbrs)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            add(names[i], names[j], nbrs[names[i]] * nbrs[names[j]] / total)
    verts = [x for x in net.vertices if x != v]
    return Network(verts, [Edge(a, b, merged[(a, b)]) for (a, b) in order])


def eliminate_interior(net: Network, keep: Iterable[str]) -> Network:
    """Repeated star-mesh elimination of every vertex not in ``keep``."""
    keep = set(keep)
    out = net
    for v in net.vertices:
        if v not in keep:
            out = star_mesh(out, v, keep)
    return out


def _split(net: Network, bc: BoundarySpec):
    bc.validate_for(net)
    idx = net.index
    bmask = np.zeros(net.n, dtype=bool)
    bmask[[idx[a] for a in bc.values]] = True
    return np.flatnonzero(~bmask), np.flatnonzero(bmask)


def harmonic_extension(net: Network, bc: BoundarySpec) -> dict[str, float]:
    """Extension of h to all vertices that is harmonic off A."""
    interior, bnd = _split(net, bc)
    vals = np.empty(net.n)
    vals[bnd] = [bc.values[net.vertices[i]] for i in bnd]
    if interior.size:
        lap = net.laplacian
        lii = lap[interior][:, interior]
        lib = lap[interior][:, bnd]
        vals[interior] = _factor(lii).solve(-(lib @ vals[bnd]))
    return {v: float(vals[i]) for i, v in enumerate(net.vertices)}


def harmonic_vector(net: Network, bc: BoundarySpec) -> np.ndarray:
    h = harmonic_extension(net, bc)
    return np.array([h[v] for v in net.vertices])


def green_matrix(net: Network, bc: BoundarySpec) -> GreenMatrix:
    interior, _ = _split(net, bc)
    if interior.size == 0:
        raise NetworkError("no interior vertices")
    lii = net.laplacian[interior][:, interior]
    g = _factor(lii).inverse()
    g = 0.5 * (g + g.T)
    return GreenMatrix(tuple(net.vertices[i] for i in interior), g)


def boundary_mean(net: Network, bc: BoundarySpec, kernel: KernelMatrix | None = None) -> float:
    """Kernel-weighted average of h over the hat block, weights C^eff_A(hat, check)."""
    bc.require_partition()
    k = kernel if kernel is not None else effective_kernel(net, list(bc.boundary))
    w = np.array([sum(k(xh, xc) for xc in bc.check) for xh in bc.hat])
    tot = w.sum()
    if tot <= 0:
        raise NetworkError("hat and check blocks are not connected through the kernel")
    return float(np.dot(w, [bc.values[x] for x in bc.hat]) / tot)


# --------------------------------------------------------------------------
# Eroded edges


def _edge_key(net: Network, key) -> int:
    if isinstance(key, (int, np.integer)):
        if not 0 <= key < len(net.edges):
            raise NetworkError(f"edge index {key} out of range")
        return int(key)
    a, b = key
    hits = [k for k, e in enumerate(net.edges) if {e.u, e.v} == {a, b}]
    if len(hits) != 1:
        raise NetworkError(f"edge {a}-{b} not found or ambiguous; use an edge index")
    return hits[0]


def _boundary_edges(net: Network, bc: BoundarySpec) -> list[int]:
    A = set(bc.values)
    return [k for k, e in enumerate(net.edges) if (e.u in A) != (e.v in A)]


def eroded_point(net: Network, bc: BoundarySpec, k: int) -> str:
    e = net.edges[k]
    x = e.u if e.u in bc.values else e.v
    return f"{x}>{e.other(x)}#{k}"


def eroded_network(net: Network, bc: BoundarySpec, erosions: Mapping | None = None):
    """The network left after erasing the segments [x_i, z_i].

    Every edge joining A to its complement becomes an edge (z_i, y_i) of
    resistance R(e_i) - r_i attached to a fresh point z_i; A itself is
    removed together with any edges inside A. Edges not listed in
    ``erosions`` use r_i = 0. Returns (network, point labels z_i, edge indices).
    """
    bc.validate_for(net)
    rmap: dict[int, float] = {}
    for key, r in dict(erosions or {}).items():
        k = _edge_key(net, key)
        rmap[k] = float(r)
    bedges = _boundary_edges(net, bc)
    bset = set(bedges)
    for k, r in rmap.items():
        if k not in bset:
            e = net.edges[k]
            raise NetworkError(f"edge {e.u}-{e.v} does not join the boundary to the interior")
        if not (0.0 <= r < net.edges[k].resistance):
            raise NetworkError(f"erosion {r} outside [0, R(e)) on edge {k}")
    A = set(bc.values)
    verts = [v for v in net.vertices if v not in A]
    points = []
    edges = []
    for k, e in enumerate(net.edges):
        if e.u in A and e.v in A:
            continue
        if k in bset:
            x = e.u if e.u in A else e.v
            z = eroded_point(net, bc, k)
            points.append(z)
            edges.append(Edge(z, e.other(x), 1.0 / (e.resistance - rmap.get(k, 0.0))))
        else:
            edges.append(e)
    if len(points) < 1:
        raise NetworkError("no edges join the boundary to the interior")
    return Network(verts + points, edges), points, bedges


def eroded_kernel(net: Network, bc: BoundarySpec, erosions: Mapping | None = None) -> KernelMatrix:
    """C^eff on the erosion points {z_i} of the erased network (one point per boundary edge)."""
    enet, points, _ = eroded_network(net, bc, erosions)
    if len(points) == 1:
        return KernelMatrix(tuple(points), np.zeros((1, 1)))
    return effective_kernel(enet, points)


@dataclass
class HadamardReport:
    step: float
    entries: list[dict] = field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((d["relative_error"] for d in self.entries), default=0.0)

    @property
    def richardson_ratio(self) -> float | None:
        """Total residual at step h divided by total residual at h/2 (about 4 for a second-order scheme)."""
        num = sum(d["residual_h"] for d in self.entries)
        den = sum(d["residual_h2"] for d in self.entries)
        return None if den == 0.0 else num / den

    @property
    def second_order(self) -> bool:
        r = self.richardson_ratio
        return r is None or 3.0 <= r <= 5.0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_relative_error <= tol


def hadamard_check(
    net: Network,
    bc: BoundarySpec,
    erosions: Mapping,
    i,
    target=None,
    *,
    step: float | None = None,
) -> HadamardReport:
    """Central finite-difference check of the first variation of eroded kernels.

    For the erosion point z_i (selected by edge index or (x, y) pair ``i``):

    * d/dr_i C_ij = C_ij * sum_{j' != i} C_ij'   for every j != i
    * d/dr_i C_jj' = -C_ij * C_ij'               for every pair j != j', both != i

    ``target`` optionally restricts the report to one j (int/edge) or one pair.
    """
    enet, points, bedges = eroded_network(net, bc, erosions)
    ki = _edge_key(net, i)
    if ki not in bedges:
        raise NetworkError("selected edge is not a boundary edge")
    rmap = {_edge_key(net, k): float(r) for k, r in dict(erosions).items()}
    r0 = rmap.get(ki, 0.0)
    R = net.edges[ki].resistance
    minR = min(net.edges[k].resistance for k in bedges)
    h = step if step is not None else 1e-4 * minR
    report = HadamardReport(step=h)
    n = len(points)
    if n < 2:
        return report
    if r0 - h <= 0.0 or r0 + h >= R:
        raise NetworkError("finite-difference step leaves the open erosion interval")
    pi = bedges.index(ki)

    def kern(r):
        m = dict(rmap)
        m[ki] = r
        return eroded_kernel(net, bc, m).entries

    c = kern(r0)

    def fd(hh):
        return (kern(r0 + hh) - kern(r0 - hh)) / (2 * hh)

    d1, d2 = fd(h), fd(h / 2)
    row = c[pi]
    srow = row.sum() - row[pi]
    wanted: set | None = None
    if target is not None:
        if isinstance(target, tuple) and len(target) == 2 and not isinstance(target[0], str):
            wanted = {tuple(sorted(bedges.index(_edge_key(net, t)) for t in target))}
        else:
            wanted = {bedges.index(_edge_key(net, target))}
    for j in range(n):
        if j == pi or (wanted is not None and j not in wanted):
            continue
        rhs = row[j] * srow
        report.entries.append(_fd_entry("derivative_ij", (points[pi], points[j]), d1[pi, j], d2[pi, j], rhs))
    for j in range(n):
        for jp in range(j + 1, n):
            if pi in (j, jp) or (wanted is not None and (j, jp) not in wanted):
                continue
            rhs = -row[j] * row[jp]
            report.entries.append(_fd_entry("derivative_jj", (points[j], points[jp]), d1[j, jp], d2[j, jp], rhs))
    return report


def _fd_entry(kind, pts, fd_h, fd_h2, rhs) -> dict:
    scale = max(abs(rhs), abs(fd_h), ZERO_ABS)
    res_h = abs(fd_h - rhs)
    res_h2 = abs(fd_h2 - rhs)
    ratio = res_h / res_h2 if res_h2 > 1e-13 * scale and res_h > 1e-11 * scale else None
    rel = res_h / scale if max(abs(rhs), abs(fd_h)) > ZERO_ABS else res_h
    return {
        "identity": kind,
        "points": pts,
        "finite_difference": float(fd_h),
        "closed_form": float(rhs),
        "relative_error": float(rel),
        "residual_h": float(res_h),
        "residual_h2": float(res_h2),
        "richardson_ratio": None if ratio is None else float(ratio),
    }
