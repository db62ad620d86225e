"""First-passage sets, their effective-resistance observables, metric balls
and nested level schedules, on refined graphs with two-sided brackets.

The metric-graph first passage set of level ``a`` from a source set ``S0`` is
the set of points joined to ``S0`` by a continuous path on which the field
stays ``>= a``. Each edge is refined into ``n`` sub-edges. The field is sampled
exactly at the subdivision points. Every sub-edge additionally gets an exact
sample of its bridge minimum, given its endpoint values. A refined vertex then
belongs to the set iff its maximin path value ``I~`` (capacities = sub-edge
minima) is ``>= a``. This gives two certified brackets:

* ``lower``: the refined vertices of the set. The true set contains them, so
  the effective resistance from this vertex set is an upper bound.
* ``upper``: the lower set plus its graph neighbours. The true set is contained
  in the union of the sub-edges touching the lower set, so the effective
  resistance from this vertex set is a lower bound.

With ``variant="discrete"`` the minima are replaced by ``min`` of the two
endpoint values, i.e. connectivity through vertices only. The two sets are
then the vertex-connected cluster and that cluster plus its frontier (the
classical discrete construction, which may overshoot through a dip).

Interior subdivision vertices have degree two. All per-replicate work is
therefore done on the base graph plus one terminal node, and each chain of
sub-edges is reduced to at most one series resistor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fieldsim import GaussianField, RefinedNetwork, refine, sample_refined
from .laws import fps_laplace, sample_bridge_min_arrays, sample_local_time_arrays
from .metric import batch_shortest, batch_widest
from .network import (
    BoundarySpec,
    Network,
    NetworkError,
    boundary_mean,
    effective_kernel,
    set_resistance,
)
from .stats import RandomStream

__all__ = [
    "FirstPassageSet",
    "FpsObservables",
    "LevelSchedule",
    "ChainEngine",
    "sample_fps",
    "fps_laplace_estimate",
    "LaplaceEstimate",
    "nested_fps",
    "NestedResult",
    "metric_ball",
    "BallResult",
    "fps_to_csv",
]

BRACKETS = ("lower", "upper")


@dataclass(frozen=True)
class LevelSchedule:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv:
            raise NetworkError("level schedule must be nonempty")
        if any(b >= a for a, b in zip(lv[:-1], lv[1:])):
            raise NetworkError("level schedule must be strictly decreasing")


@dataclass
class FirstPassageSet:
    level: float
    variant: str
    inner_vertices: list[str]
    frontier: list[str]

    @property
    def upper_vertices(self) -> list[str]:
        return self.inner_vertices + self.frontier


@dataclass
class FpsObservables:
    """Resistance observables per bracket (``lower`` / ``upper``)."""

    r_eff_to_check: dict[str, float]
    c_eff_to_check: dict[str, float]
    r_eff_drop_at_x0: dict[str, float] | None = None
    c_infinite: bool = False


# --------------------------------------------------------------------------
# Chain engine


@dataclass
class ChainSample:
    """Refined field and per-sub-edge functionals for a batch of replicates."""

    replicates: np.ndarray
    base: np.ndarray  # (k, nb) base-vertex values
    chains: list[np.ndarray]  # per base edge, (k, n_e + 1) values along the chain
    caps: list[np.ndarray] | None = None  # per base edge, (k, n_e) sub-edge minima
    local: list[np.ndarray] | None = None  # per base edge, (k, n_e) sub-edge local times


class ChainEngine:
    """Batch machinery for first-passage sets and metric balls on a refined network."""

    def __init__(self, net: Network, bc: BoundarySpec, n=32):
        bc.validate_for(net)
        self.net = net
        self.bc = bc
        self.rn: RefinedNetwork = refine(net, bc, n)
        self.gf = GaussianField(net, bc)
        iu, iv, cond = net.edge_arrays
        self.iu, self.iv = iu, iv
        self.counts = self.rn.counts
        self.sub_r = (1.0 / cond) / self.counts  # sub-edge resistance per base edge
        self.nb = net.n
        self._offsets = np.concatenate([[0], np.cumsum(self.counts)])

    # ---------------------------------------------------------------- sampling
    def sample(self, stream: RandomStream, replicates, *, minima: bool = True, local: bool = False,
               variant: str = "exact") -> ChainSample:
        reps = np.atleast_1d(np.asarray(replicates, dtype=np.int64))
        fb = sample_refined(self.rn, self.bc, stream, reps, sampler=self.gf)
        vals = fb.values
        chains = [vals[:, ch] for ch in self.rn.chains]
        cs = ChainSample(reps, vals[:, : self.nb], chains)
        total = int(self._offsets[-1])
        if minima:
            if variant == "exact":
                u = stream.substream("subedge-minimum").uniforms(reps, total)
                cs.caps = []
                for e, ch in enumerate(chains):
                    sl = u[:, self._offsets[e] : self._offsets[e + 1]]
                    cs.caps.append(sample_bridge_min_arrays(ch[:, :-1], ch[:, 1:], self.sub_r[e], sl))
            elif variant == "discrete":
                cs.caps = [np.minimum(ch[:, :-1], ch[:, 1:]) for ch in chains]
            else:
                raise NetworkError(f"unknown variant {variant!r}")
        if local:
            u = stream.substream("subedge-local-time").uniforms(reps, total)
            cs.local = []
            for e, ch in enumerate(chains):
                sl = u[:, self._offsets[e] : self._offsets[e + 1]]
                cs.local.append(sample_local_time_arrays(ch[:, :-1], ch[:, 1:], self.sub_r[e], sl))
        return cs

    # ------------------------------------------------------- path functionals
    def maximin(self, cs: ChainSample, sources: Sequence[str]):
        """Maximin values I~ from ``sources`` on base vertices and along every chain."""
        src = np.array([self.net.index[s] for s in sources], dtype=np.int64)
        bott = np.stack([c.min(axis=1) for c in cs.caps], axis=1)
        base = batch_widest(self.net, bott, src, cs.base[:, src])
        chains = []
        for e, c in enumerate(cs.caps):
            left = base[:, [self.iu[e]]]
            right = base[:, [self.iv[e]]]
            pre = np.minimum(left, np.minimum.accumulate(c, axis=1))  # value reaching node t+1 from u
            suf = np.minimum(right, np.minimum.accumulate(c[:, ::-1], axis=1)[:, ::-1])  # node t from v
            from_u = np.concatenate([left, pre], axis=1)
            from_v = np.concatenate([suf, right], axis=1)
            chains.append(np.maximum(from_u, from_v))
        return base, chains

    def distances(self, cs: ChainSample, sources: Sequence[str]):
        """Local-time distances from ``sources`` on base vertices and along every chain."""
        src = np.array([self.net.index[s] for s in sources], dtype=np.int64)
        tot = np.stack([l.sum(axis=1) for l in cs.local], axis=1)
        base = batch_shortest(self.net, tot, src)
        chains = []
        for e, l in enumerate(cs.local):
            cum = np.concatenate([np.zeros((l.shape[0], 1)), np.cumsum(l, axis=1)], axis=1)
            du = base[:, [self.iu[e]]] + cum
            dv = base[:, [self.iv[e]]] + (cum[:, -1:] - cum)
            chains.append(np.minimum(du, dv))
        return base, chains

    # ---------------------------------------------------------- set handling
    @staticmethod
    def expand(base_mem: np.ndarray, chain_mem: list[np.ndarray], iu, iv):
        """Add every graph neighbour of the member set."""
        new_base = base_mem.copy()
        new_chains = []
        for e, m in enumerate(chain_mem):
            x = m.copy()
            x[:, 1:] |= m[:, :-1]
            x[:, :-1] |= m[:, 1:]
            new_chains.append(x)
            new_base[:, iu[e]] |= x[:, 0]
            new_base[:, iv[e]] |= x[:, -1]
        for e, x in enumerate(new_chains):
            x[:, 0] = new_base[:, iu[e]]
            x[:, -1] = new_base[:, iv[e]]
        return new_base, new_chains

    def resistance(self, base_mem: np.ndarray, chain_mem: list[np.ndarray], targets: Sequence[str]) -> np.ndarray:
        """R^eff between the member set (short-circuited) and ``targets`` for every replicate.

        Members inside each chain must form a prefix and a suffix of the chain
        (true for any set grown from base vertices). Returns 0 where the set
        meets a target.
        """
        k = base_mem.shape[0]
        nb = self.nb
        T = nb
        tidx = np.array([self.net.index[t] for t in targets], dtype=np.int64)
        lap = np.zeros((k, nb + 1, nb + 1))
        rows = np.arange(k)
        for e, m in enumerate(chain_mem):
            n = m.shape[1] - 1
            all_in = m.all(axis=1)
            i = np.where(all_in, n + 1, np.argmin(m, axis=1))
            j = np.where(all_in, n + 1, np.argmin(m[:, ::-1], axis=1))
            lo = np.where(i >= 1, i - 1, 0)
            hi = np.where(j >= 1, n + 1 - j, n)
            a = np.where(i >= 1, T, self.iu[e])
            b = np.where(j >= 1, T, self.iv[e])
            drop = all_in | (a == b)
            length = np.where(drop, 1.0, (hi - lo) * self.sub_r[e])
            g = np.where(drop, 0.0, 1.0 / length)
            lap[rows, a, a] += g
            lap[rows, b, b] += g
            lap[rows, a, b] -= g
            lap[rows, b, a] -= g
        hits = base_mem[:, tidx].any(axis=1)
        fixed = np.zeros((k, nb + 1), dtype=bool)
        fixed[:, :nb] = base_mem
        fixed[:, tidx] = True
        fixed[:, T] = True
        rhs = np.zeros((k, nb + 1))
        rhs[:, T] = 1.0
        sysm = np.where(fixed[:, :, None], 0.0, lap)
        diag = np.arange(nb + 1)
        sysm[:, diag, diag] = np.where(fixed, 1.0, sysm[:, diag, diag])
        x = np.linalg.solve(sysm, rhs[:, :, None])[:, :, 0]
        cur = np.einsum("kj,kj->k", lap[:, T, :], x)
        with np.errstate(divide="ignore"):
            r = np.where(hits, 0.0, 1.0 / cur)
        return r

    def bracket_resistances(self, base_val, chain_val, threshold: float, targets: Sequence[str],
                            above: bool = True) -> dict[str, np.ndarray]:
        """Resistances for the lower/upper brackets of {value >= threshold} (or <= if not ``above``)."""
        if above:
            bm = base_val >= threshold
            cm = [c >= threshold for c in chain_val]
        else:
            bm = base_val <= threshold
            cm = [c <= threshold for c in chain_val]
        r_low = self.resistance(bm, cm, targets)
        ub, uc = self.expand(bm, cm, self.iu, self.iv)
        r_up = self.resistance(ub, uc, targets)
        return {"lower": r_low, "upper": r_up}

    def member_names(self, base_mem_row: np.ndarray, chain_mem_rows: list[np.ndarray]) -> list[str]:
        names = self.rn.network.vertices
        out = [names[i] for i in np.flatnonzero(base_mem_row)]
        for e, m in enumerate(chain_mem_rows):
            ch = self.rn.chains[e]
            out.extend(names[ch[t]] for t in np.flatnonzero(m[1:-1]) + 1)
        return out


# --------------------------------------------------------------------------
# Public operations


def _check_level(bc: BoundarySpec, sources: Sequence[str], a: float):
    lo = min(bc.values[s] for s in sources)
    if not a < lo:
        raise NetworkError(f"level {a} must lie below the source boundary values (min {lo})")


def sample_fps(net: Network, bc: BoundarySpec, a: float, n, stream: RandomStream, replicate: int = 0,
               *, variant: str = "exact", x0: str | None = None,
               engine: ChainEngine | None = None) -> tuple[FirstPassageSet, FpsObservables]:
    """One first passage set at level ``a`` grown from the hat block (or all of A when ``x0`` is given)."""
    eng = engine if engine is not None else ChainEngine(net, bc, n)
    if x0 is None:
        bc.require_partition()
        sources, targets = list(bc.hat), list(bc.check)
    else:
        sources, targets = list(bc.values), [x0]
    _check_level(bc, sources, a)
    cs = eng.sample(stream, [replicate], variant=variant)
    base, chains = eng.maximin(cs, sources)
    bm = base >= a
    cm = [c >= a for c in chains]
    ub, uc = eng.expand(bm, cm, eng.iu, eng.iv)
    inner = eng.member_names(bm[0], [c[0] for c in cm])
    upper = eng.member_names(ub[0], [c[0] for c in uc])
    inner_set = set(inner)
    fps = FirstPassageSet(a, variant, inner, [v for v in upper if v not in inner_set])
    r = {"lower": float(eng.resistance(bm, cm, targets)[0]), "upper": float(eng.resistance(ub, uc, targets)[0])}
    c = {k: (math.inf if v == 0.0 else 1.0 / v) for k, v in r.items()}
    obs = FpsObservables(r, c, c_infinite=math.isinf(c["lower"]))
    if x0 is not None:
        r0 = set_resistance(net, [x0], list(bc.values))
        obs.r_eff_drop_at_x0 = {k: r0 - v for k, v in r.items()}
    return fps, obs


@dataclass
class LaplaceEstimate:
    u: np.ndarray
    closed_form: np.ndarray
    estimate: dict[str, np.ndarray]
    se: dict[str, np.ndarray]
    replicates: int
    refinement: int
    parameters: dict = field(default_factory=dict)

    def interval(self, widen: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
        lo = np.minimum(self.estimate["lower"] - widen * self.se["lower"], self.estimate["upper"] - widen * self.se["upper"])
        hi = np.maximum(self.estimate["lower"] + widen * self.se["lower"], self.estimate["upper"] + widen * self.se["upper"])
        return lo, hi

    def covered(self, widen: float = 4.0) -> np.ndarray:
        lo, hi = self.interval(widen)
        return (self.closed_form >= lo) & (self.closed_form <= hi)


def laplace_parameters(net: Network, bc: BoundarySpec) -> dict:
    """(C(hat, check), m, h on check) for the closed-form transform."""
    bc.require_partition()
    hc = {bc.values[x] for x in bc.check}
    if len(hc) != 1:
        raise NetworkError("h must be constant on the check block")
    k = effective_kernel(net, list(bc.boundary))
    return {"C": k.block_sum(bc.hat, bc.check), "m": boundary_mean(net, bc, k), "h_check": hc.pop()}


def fps_laplace_estimate(net: Network, bc: BoundarySpec, a: float, u_grid, n, replicates: int,
                         stream: RandomStream, *, variant: str = "exact", chunk: int = 4000,
                         start: int = 0) -> LaplaceEstimate:
    """Monte Carlo mean of exp(-u C^eff(set, check)) per bracket, with CLT standard errors."""
    par = laplace_parameters(net, bc)
    _check_level(bc, bc.hat, a)
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    eng = ChainEngine(net, bc, n)
    sums = {b: np.zeros(u.size) for b in BRACKETS}
    sq = {b: np.zeros(u.size) for b in BRACKETS}
    for s in range(start, start + replicates, chunk):
        reps = np.arange(s, min(s + chunk, start + replicates))
        r = _level_resistances(eng, stream, reps, [a], list(bc.hat), list(bc.check), variant)
        for b in BRACKETS:
            with np.errstate(divide="ignore"):
                c = np.where(r[b][:, 0] > 0, 1.0 / r[b][:, 0], np.inf)
            vals = np.exp(-np.outer(c, u))
            sums[b] += vals.sum(axis=0)
            sq[b] += (vals ** 2).sum(axis=0)
    est, se = {}, {}
    for b in BRACKETS:
        mean = sums[b] / replicates
        var = np.maximum(sq[b] / replicates - mean ** 2, 0.0) * replicates / max(replicates - 1, 1)
        est[b] = mean
        se[b] = np.sqrt(var / replicates)
    cf = fps_laplace(par["C"], par["m"], par["h_check"], a, u)
    return LaplaceEstimate(u, np.atleast_1d(cf), est, se, replicates, int(np.max(eng.counts)), dict(par, a=a))


def _level_resistances(eng: ChainEngine, stream, reps, levels, sources, targets, variant):
    cs = eng.sample(stream, reps, variant=variant)
    base, chains = eng.maximin(cs, sources)
    out = {b: np.empty((reps.size, len(levels))) for b in BRACKETS}
    for li, a in enumerate(levels):
        r = eng.bracket_resistances(base, chains, a, targets)
        for b in BRACKETS:
            out[b][:, li] = r[b]
    return out


@dataclass
class NestedResult:
    levels: np.ndarray
    r_total: float
    m: float
    drops: dict[str, np.ndarray]  # bracket -> (replicates, levels)
    phi_x0: np.ndarray
    sup_min: np.ndarray  # maximin from x0 to A, capped at min_A h
    replicates: np.ndarray


def nested_fps(net: Network, bc: BoundarySpec, schedule: LevelSchedule | Sequence[float], x0: str, n,
               stream: RandomStream, replicates=1, *, variant: str = "exact", chunk: int = 4000) -> NestedResult:
    """Nested first passage sets from all of A on shared field samples; resistance drops seen from ``x0``."""
    sched = schedule if isinstance(schedule, LevelSchedule) else LevelSchedule(tuple(schedule))
    if x0 in bc.values:
        raise NetworkError("x0 must be an interior vertex")
    A = list(bc.values)
    _check_level(bc, A, sched.levels[0])
    eng = ChainEngine(net, bc, n)
    r0 = set_resistance(net, [x0], A)
    reps_all = np.arange(replicates) if np.isscalar(replicates) else np.asarray(replicates, dtype=np.int64)
    drops = {b: np.empty((reps_all.size, len(sched.levels))) for b in BRACKETS}
    phi = np.empty(reps_all.size)
    supmin = np.empty(reps_all.size)
    ix0 = net.index[x0]
    hmin = min(bc.values.values())
    for s in range(0, reps_all.size, chunk):
        reps = reps_all[s : s + chunk]
        cs = eng.sample(stream, reps, variant=variant)
        base, chains = eng.maximin(cs, A)
        phi[s : s + reps.size] = cs.base[:, ix0]
        supmin[s : s + reps.size] = np.minimum(base[:, ix0], hmin)
        for li, a in enumerate(sched.levels):
            r = eng.bracket_resistances(base, chains, a, [x0])
            for b in BRACKETS:
                drops[b][s : s + reps.size, li] = r0 - r[b]
    m = eng.gf.mean[ix0]
    return NestedResult(np.array(sched.levels), r0, float(m), drops, phi, supmin, reps_all)


@dataclass
class BallResult:
    ells: np.ndarray
    r_total: float
    m: float
    drops: dict[str, np.ndarray]
    abs_phi_minus_delta: np.ndarray
    neg_delta: np.ndarray
    replicates: np.ndarray


def metric_ball(net: Network, bc: BoundarySpec, ell_grid, x0: str, n, stream: RandomStream,
                replicates=1, *, chunk: int = 4000) -> BallResult:
    """Resistance drops at ``x0`` for the pseudo-metric balls around A of radii ``ell_grid``."""
    if any(v < 0 for v in bc.values.values()):
        raise NetworkError("metric balls need nonnegative boundary values")
    if x0 in bc.values:
        raise NetworkError("x0 must be an interior vertex")
    ells = np.atleast_1d(np.asarray(ell_grid, dtype=float))
    if np.any(ells < 0):
        raise NetworkError("radii must be nonnegative")
    A = list(bc.values)
    eng = ChainEngine(net, bc, n)
    r0 = set_resistance(net, [x0], A)
    reps_all = np.arange(replicates) if np.isscalar(replicates) else np.asarray(replicates, dtype=np.int64)
    drops = {b: np.empty((reps_all.size, ells.size)) for b in BRACKETS}
    apd = np.empty(reps_all.size)
    negd = np.empty(reps_all.size)
    ix0 = net.index[x0]
    for s in range(0, reps_all.size, chunk):
        reps = reps_all[s : s + chunk]
        cs = eng.sample(stream, reps, minima=False, local=True)
        base, chains = eng.distances(cs, A)
        apd[s : s + reps.size] = np.abs(cs.base[:, ix0]) - base[:, ix0]
        negd[s : s + reps.size] = -base[:, ix0]
        for li, ell in enumerate(ells):
            r = eng.bracket_resistances(base, chains, ell, [x0], above=False)
            for b in BRACKETS:
                drops[b][s : s + reps.size, li] = r0 - r[b]
    return BallResult(ells, r0, float(eng.gf.mean[ix0]), drops, apd, negd, reps_all)


def fps_to_csv(replicates, levels, drops_or_r: Mapping[str, np.ndarray], kind: str = "drop_at_x0",
               r_total: float | None = None) -> str:
    """CSV rows: replicate, level, bracket, r_eff, c_eff, drop_at_x0."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "level", "bracket", "r_eff", "c_eff", "drop_at_x0"])
    for b in BRACKETS:
        arr = drops_or_r[b]
        for i, rep in enumerate(np.asarray(replicates)):
            for li, lv in enumerate(np.asarray(levels)):
                if kind == "drop_at_x0":
                    drop = float(arr[i, li])
                    r = float(r_total - drop)
                else:
                    r = float(arr[i, li])
                    drop = None
                c = math.inf if r == 0.0 else 1.0 / r
                w.writerow([int(rep), repr(float(lv)), b, repr(r), repr(c), "" if drop is None else repr(drop)])
    return buf.getvalue()
