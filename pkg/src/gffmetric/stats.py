"""Reproducible random streams and the statistical tests used by the verification suites.

Randomness is counter based: every uniform variate is a pure function of
``(seed, tag, replicate, site)`` computed with the Philox4x32-10 block cipher,
so replicates can be generated in any order, in any batch size and on any
number of workers without changing a single bit of output.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import special, stats as sps

__all__ = [
    "RandomStream",
    "philox4x32",
    "EmpiricalDistribution",
    "TestReport",
    "ks_one_sample",
    "ks_two_sample",
    "mean_z",
    "proportion_z",
    "slope_fit",
    "SlopeFit",
    "majority_pass",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter: Sequence[np.ndarray], key: tuple[int, int], rounds: int = 10):
    """Vectorised Philox4x32 block function.

    ``counter`` is four broadcastable arrays of 32-bit words, ``key`` two
    32-bit integers. Returns four uint64 arrays holding 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def _tag_word(path: tuple[str, ...]) -> int:
    if not path:
        return 0
    digest = hashlib.blake2b("/".join(path).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RandomStream:
    """Addressable source of uniform variates.

    A stream is identified by a 64-bit ``seed`` and a ``path`` of names;
    :meth:`substream` derives independent streams for different purposes
    (field values, edge local times, bridge minima, ...). Within a stream,
    draws are addressed by ``(replicate, site)``.
    """

    seed: int
    path: tuple[str, ...] = ()

    def substream(self, name: str) -> "RandomStream":
        return RandomStream(self.seed, self.path + (str(name),))

    @property
    def tag(self) -> int:
        return _tag_word(self.path)

    def uniforms(self, replicates, n_sites: int, offset: int = 0) -> np.ndarray:
        """Uniforms on the open interval (0, 1), shape ``(len(replicates), n_sites)``.

        Each uniform carries 53 random bits built from two 32-bit Philox words.
        """
        reps = np.atleast_1d(np.asarray(replicates, dtype=np.uint64))
        if n_sites <= 0:
            return np.empty((reps.size, 0))
        first = offset // 2
        last = (offset + n_sites - 1) // 2
        blocks = np.arange(first, last + 1, dtype=np.uint64)
        seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        key = (seed & 0xFFFFFFFF, seed >> 32)
        x0, x1, x2, x3 = philox4x32(
            (blocks[None, :], (reps & _MASK32)[:, None], (reps >> _SHIFT32)[:, None], np.uint64(self.tag)),
            key,
        )
        out = np.empty((reps.size, 2 * blocks.size))
        out[:, 0::2] = _to_unit(x0, x1)
        out[:, 1::2] = _to_unit(x2, x3)
        start = offset - 2 * first
        return out[:, start : start + n_sites]

    def normals(self, replicates, n_sites: int, offset: int = 0) -> np.ndarray:
        """Standard normals by inverse CDF of :meth:`uniforms`."""
        return special.ndtri(self.uniforms(replicates, n_sites, offset))

    def generator(self, replicate: int = 0) -> np.random.Generator:
        """A numpy Generator keyed on this stream's address, for ad-hoc use (graph generation etc.)."""
        seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        return np.random.Generator(np.random.Philox(key=[seed, (self.tag << 32) | (int(replicate) & 0xFFFFFFFF)]))


def _to_unit(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    a = (hi >> np.uint64(5)).astype(np.float64)
    b = (lo >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) / 9007199254740992.0


# --------------------------------------------------------------------------
# Empirical distributions and reports


@dataclass
class EmpiricalDistribution:
    values: np.ndarray
    atom: float | None = None
    atom_count: int = 0

    def __init__(self, samples, atom: float | None = None):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empty sample")
        self.values = x
        self.atom = atom
        self.atom_count = int(np.count_nonzero(x == atom)) if atom is not None else 0

    @property
    def count(self) -> int:
        return int(self.values.size)

    def cdf(self, t) -> np.ndarray:
        return np.searchsorted(self.values, t, side="right") / self.count

    def survival(self, t) -> np.ndarray:
        return 1.0 - self.cdf(t)

    def exceed(self, t) -> np.ndarray:
        """Fraction of samples >= t."""
        return 1.0 - np.searchsorted(self.values, t, side="left") / self.count


@dataclass
class TestReport:
    test: str
    statistic: str
    value: float
    p: float | None = None
    z: float | None = None
    threshold: float = 0.01
    passed: bool = False
    n: int = 0
    seed: int | None = None
    runtime_ms: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        return json.loads(json.dumps(d, default=_jsonable))

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        score = f"p={self.p:.4g}" if self.p is not None else (f"z={self.z:+.3f}" if self.z is not None else "")
        return f"[{flag}] {self.test}: {self.statistic}={self.value:.6g} {score} n={self.n} seed={self.seed}"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return str(o)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = 1000.0 * (time.perf_counter() - self.t0)


def ks_one_sample(
    samples,
    cdf: Callable[[np.ndarray], np.ndarray],
    *,
    atom: float | None = None,
    atom_mass: float | None = None,
    name: str = "ks_one_sample",
    threshold: float = 0.01,
    seed: int | None = None,
    min_count: int = 100,
) -> TestReport:
    """One-sample KS test against ``cdf``, with an optional atom.

    When ``atom`` is given, the observed atom frequency is compared with
    ``atom_mass`` by a binomial z-test and the remaining samples are KS-tested
    against the conditional law of the continuous part. The reported p-value
    is the Bonferroni combination of both.
    """
    with _Timer() as tm:
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty sample")
        if x.size < min_count:
            raise ValueError(f"need at least {min_count} samples, got {x.size}")
        details: dict[str, Any] = {}
        if atom is None:
            res = sps.kstest(x, cdf)
            stat, p = float(res.statistic), float(res.pvalue)
        else:
            if atom_mass is None:
                raise ValueError("atom_mass required with atom")
            on_atom = x == atom
            k = int(on_atom.sum())
            n = x.size
            q = float(atom_mass)
            if 0.0 < q < 1.0:
                z = (k - n * q) / math.sqrt(n * q * (1 - q))
                p_atom = float(2 * sps.norm.sf(abs(z)))
            else:
                z = 0.0 if k == round(n * q) else math.inf
                p_atom = 1.0 if z == 0.0 else 0.0
            rest = x[~on_atom]
            details.update(atom_count=k, atom_expected=n * q, atom_z=z, p_atom=p_atom)
            if rest.size >= 2 and q < 1.0:
                def cont_cdf(t, _f=cdf, _a=atom, _q=q):
                    t = np.asarray(t, dtype=float)
                    raw = np.asarray(_f(t), dtype=float)
                    # remove the atom's jump from the CDF to the right of it
                    raw = np.where(t >= _a, raw - _q, raw)
                    return np.clip(raw / (1.0 - _q), 0.0, 1.0)

                res = sps.kstest(rest, cont_cdf)
                stat, p_ks = float(res.statistic), float(res.pvalue)
                details.update(p_ks=p_ks, n_continuous=int(rest.size))
            else:
                stat, p_ks = 0.0, 1.0
            p = min(1.0, 2.0 * min(p_atom, p_ks))
    return TestReport(
        test=name, statistic="KS", value=stat, p=p, threshold=threshold,
        passed=bool(p > threshold), n=int(x.size), seed=seed, runtime_ms=tm.ms, details=details,
    )


def ks_two_sample(a, b, *, name: str = "ks_two_sample", threshold: float = 0.01,
                  seed: int | None = None, min_count: int = 100) -> TestReport:
    with _Timer() as tm:
        x = np.asarray(a, dtype=float).ravel()
        y = np.asarray(b, dtype=float).ravel()
        if x.size == 0 or y.size == 0:
            raise ValueError("empty sample")
        if min(x.size, y.size) < min_count:
            raise ValueError(f"need at least {min_count} samples per side")
        res = sps.ks_2samp(x, y, method="asymp")
    return TestReport(
        test=name, statistic="KS2", value=float(res.statistic), p=float(res.pvalue),
        threshold=threshold, passed=bool(res.pvalue > threshold), n=int(min(x.size, y.size)),
        seed=seed, runtime_ms=tm.ms, details={"n_a": int(x.size), "n_b": int(y.size)},
    )


def mean_z(samples, target: float, tolerance_se: float = 4.0, *, name: str = "mean_z",
           seed: int | None = None) -> TestReport:
    """z-statistic of the sample mean against ``target``; passes when |z| < tolerance_se."""
    with _Timer() as tm:
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("need at least two samples")
        mean = float(x.mean())
        se = float(x.std(ddof=1) / math.sqrt(x.size))
        if se == 0.0:
            z = 0.0 if mean == target else math.inf
        else:
            z = (mean - target) / se
    return TestReport(
        test=name, statistic="mean", value=mean, z=float(z), threshold=tolerance_se,
        passed=bool(abs(z) < tolerance_se), n=int(x.size), seed=seed, runtime_ms=tm.ms,
        details={"target": float(target), "se": se},
    )


def proportion_z(successes: int, n: int, target: float, tolerance_se: float = 4.0, *,
                 name: str = "proportion_z", seed: int | None = None) -> TestReport:
    """Binomial frequency vs ``target`` probability, SE taken under the target."""
    if n <= 0:
        raise ValueError("need n > 0")
    phat = successes / n
    se = math.sqrt(max(target * (1 - target), 0.0) / n)
    if se == 0.0:
        z = 0.0 if phat == target else math.inf
    else:
        z = (phat - target) / se
    return TestReport(
        test=name, statistic="proportion", value=phat, z=float(z), threshold=tolerance_se,
        passed=bool(abs(z) < tolerance_se), n=int(n), seed=seed,
        details={"target": float(target), "se": se, "successes": int(successes)},
    )


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    se: float
    intercept: float


def slope_fit(log_x, log_y) -> SlopeFit:
    """Least-squares slope of ``log_y`` against ``log_x``."""
    x = np.asarray(log_x, dtype=float)
    y = np.asarray(log_y, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise ValueError("slope_fit needs at least 3 paired points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("slope_fit got non-finite input")
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate abscissae")
    res = sps.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept))


def majority_pass(reports: Iterable[TestReport], need: int = 2) -> bool:
    """Flaky-test policy: a statistical test passes if at least ``need`` seeds pass."""
    return sum(bool(r.passed) for r in reports) >= need
