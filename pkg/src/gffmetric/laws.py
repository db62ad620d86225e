"""Closed-form one-dimensional laws and exact inverse-CDF samplers.

All functions broadcast over numpy arrays. Samplers never own randomness:
callers pass uniform variates in (0, 1) (see :class:`gffmetric.stats.RandomStream`).

Conventions
-----------
* A Brownian bridge of length ``T`` from ``w0`` to ``wT`` has unit diffusivity,
  so an edge of resistance ``R`` carries a bridge of length ``R``.
* ``L_T`` is the local time at level 0 of that bridge, normalized so that for
  ``w0 = wT = 0`` the quantity ``L_T**2 / (2T)`` is standard exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .network import BoundarySpec, KernelMatrix, Network, NetworkError, effective_kernel

__all__ = [
    "BridgeSpec",
    "TwoSetLawSpec",
    "TINY",
    "local_time_survival",
    "sample_local_time",
    "bridge_min_survival",
    "sample_bridge_min",
    "bridge_touch_probability",
    "two_set_survival",
    "two_set_positive_probability",
    "connection_probability",
    "fps_laplace",
    "bm_hitting_cdf",
    "capped_hitting_cdf",
    "last_visit_cdf",
    "normal_cdf",
]

TINY = 1e-300


def _clamp(p, with_flag: bool):
    p = np.asarray(p, dtype=float)
    flag = p < TINY
    p = np.where(flag, 0.0, np.clip(p, 0.0, 1.0))
    p = p[()] if p.ndim == 0 else p
    if with_flag:
        return p, (bool(flag) if np.ndim(flag) == 0 else flag)
    return p


@dataclass(frozen=True)
class BridgeSpec:
    """Brownian bridge from ``w0`` to ``wT`` over a time interval of length ``T``."""

    w0: float
    wT: float
    T: float

    def __post_init__(self):
        w0, wT, T = (np.asarray(x, dtype=float) for x in (self.w0, self.wT, self.T))
        if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(wT)) and np.all(np.isfinite(T))):
            raise ValueError("bridge parameters must be finite")
        if np.any(T <= 0):
            raise ValueError("bridge length T must be positive")

    def arrays(self):
        return (np.asarray(self.w0, dtype=float), np.asarray(self.wT, dtype=float),
                np.asarray(self.T, dtype=float))


def _check_uniform(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0)) or np.any(~(u < 1.0)):
        raise ValueError("uniform variates must lie in the open interval (0, 1)")
    return u


# --------------------------------------------------------------------------
# Local time at zero


def local_time_survival(b: BridgeSpec, ell, *, with_flag: bool = False):
    """P(L_T > ell) for the bridge ``b``."""
    w0, wT, T = b.arrays()
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 0):
        raise ValueError("ell must be nonnegative")
    expo = ((np.abs(w0) + np.abs(wT) + ell) ** 2 - (w0 - wT) ** 2) / (2.0 * T)
    return _clamp(np.exp(-np.maximum(expo, 0.0)), with_flag)


def sample_local_time(b: BridgeSpec, u) -> np.ndarray:
    """Inverse-CDF sample of L_T; returns exact 0.0 on the atom."""
    w0, wT, T = b.arrays()
    u = _check_uniform(u)
    val = np.sqrt((w0 - wT) ** 2 - 2.0 * T * np.log(u)) - np.abs(w0) - np.abs(wT)
    out = np.maximum(val, 0.0)
    return out[()] if out.ndim == 0 else out


def sample_local_time_arrays(w0, wT, T, u) -> np.ndarray:
    """Array form of :func:`sample_local_time` without per-call validation (hot loops)."""
    val = np.sqrt((w0 - wT) ** 2 - 2.0 * T * np.log(u)) - np.abs(w0) - np.abs(wT)
    return np.maximum(val, 0.0)


# --------------------------------------------------------------------------
# Bridge minimum


def bridge_touch_probability(b: BridgeSpec, a=0.0):
    """P(the bridge reaches level ``a`` or below)."""
    w0, wT, T = b.arrays()
    a = np.asarray(a, dtype=float)
    d0, d1 = w0 - a, wT - a
    p = np.where((d0 > 0) & (d1 > 0), np.exp(-2.0 * d0 * d1 / T), 1.0)
    return p[()] if p.ndim == 0 else p


def bridge_min_survival(b: BridgeSpec, a):
    """P(min of the bridge > a); zero once ``a`` reaches min(w0, wT)."""
    out = 1.0 - np.asarray(bridge_touch_probability(b, a))
    return out[()] if np.ndim(out) == 0 else out


def sample_bridge_min(b: BridgeSpec, u) -> np.ndarray:
    """Inverse-CDF sample of the bridge minimum (always strictly below both endpoints)."""
    w0, wT, T = b.arrays()
    u = _check_uniform(u)
    out = sample_bridge_min_arrays(w0, wT, T, u)
    return out[()] if out.ndim == 0 else out


def sample_bridge_min_arrays(w0, wT, T, u) -> np.ndarray:
    return 0.5 * ((w0 + wT) - np.sqrt((w0 - wT) ** 2 - 2.0 * T * np.log(u)))


# --------------------------------------------------------------------------
# Two-set laws


@dataclass(frozen=True)
class TwoSetLawSpec:
    """Kernel on A, boundary values and the (hat, check) partition."""

    kernel: KernelMatrix
    values: dict
    hat: tuple[str, ...]
    check: tuple[str, ...]

    def __post_init__(self):
        BoundarySpec(self.values, self.hat, self.check).check_sign_constancy()

    @classmethod
    def from_network(cls, net: Network, bc: BoundarySpec) -> "TwoSetLawSpec":
        bc.check_sign_constancy()
        k = effective_kernel(net, list(bc.boundary))
        return cls(k, dict(bc.values), tuple(bc.hat), tuple(bc.check))

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (C, h_hat, h_check) over all (hat, check) pairs."""
        c, hh, hc = [], [], []
        for x in self.hat:
            for y in self.check:
                c.append(self.kernel(x, y))
                hh.append(self.values[x])
                hc.append(self.values[y])
        return np.array(c), np.array(hh), np.array(hc)


def two_set_survival(spec: TwoSetLawSpec, ell, *, with_flag: bool = False):
    """P(delta between the hat and check blocks >= ell)."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 0):
        raise ValueError("ell must be nonnegative")
    c, hh, hc = spec.pairs()
    e = ell[..., None]
    expo = 0.5 * c * ((np.abs(hh) + np.abs(hc) + e) ** 2 - (hh - hc) ** 2)
    return _clamp(np.exp(-np.maximum(expo, 0.0).sum(axis=-1)), with_flag)


def two_set_positive_probability(spec: TwoSetLawSpec) -> float:
    """P(delta > 0): product of exp(-2 C h_hat h_check) when signs agree, else 0 if some pair disagrees."""
    return float(two_set_survival(spec, 0.0))


def connection_probability(spec: TwoSetLawSpec, a: float) -> float:
    """Probability that hat and check are joined by a path on which the field stays above ``a``.

    Requires ``a`` below the minimum of h on A.
    """
    c, hh, hc = spec.pairs()
    if a >= min(hh.min(), hc.min()):
        raise ValueError("level must lie below the boundary values")
    return float(1.0 - np.exp(-2.0 * np.sum(c * (hh - a) * (hc - a))))


# --------------------------------------------------------------------------
# First-passage sets and hitting times


def fps_laplace(C_hat_check: float, m: float, h_check: float, a: float, u):
    """E[exp(-u C^eff(first passage set at level a, check block))] in closed form."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("u must be positive")
    if C_hat_check <= 0:
        raise ValueError("C_hat_check must be positive")
    expo = 0.5 * C_hat_check * ((m - a + np.sqrt((h_check - a) ** 2 + 2.0 * u)) ** 2 - (m - h_check) ** 2)
    out = np.exp(-expo)
    return out[()] if out.ndim == 0 else out


def normal_cdf(x):
    return special.ndtr(x)


def bm_hitting_cdf(m: float, a: float, t):
    """P(T_a <= t) for standard Brownian motion started at ``m``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    d = abs(m - a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t > 0, 2.0 * special.ndtr(-d / np.sqrt(np.where(t > 0, t, 1.0))), 0.0)
    if d == 0.0:
        out = np.where(t > 0, 1.0, out)
    return out[()] if out.ndim == 0 else out


def capped_hitting_cdf(m: float, a: float, cap: float, t):
    """CDF of min(T_a, cap) for Brownian motion from ``m`` (atom at ``cap``)."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= cap, 1.0, bm_hitting_cdf(m, a, np.clip(t, 0.0, None)))
    return out[()] if out.ndim == 0 else out


def last_visit_cdf(b: BridgeSpec, a: float, t):
    """CDF of the last time the bridge ``b`` is at level ``a`` (0 if it never visits ``a``).

    Obtained by conditioning on the bridge value at time ``t`` and requiring
    that the remaining bridge on ``[t, T]`` avoids ``a``.
    """
    w0, wT, T = (float(x) for x in b.arrays())
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    d = wT - a
    x0 = w0 - a
    if d == 0.0:
        out = np.where(t >= T, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out
    if d < 0:
        d, x0 = -d, -x0
    tt = np.clip(t, 0.0, T)
    inner = (tt > 0) & (tt < T)
    ts = np.where(inner, tt, 0.5 * T)
    mu = x0 + (ts / T) * (d - x0)
    var = ts * (T - ts) / T
    sig = np.sqrt(var)
    k = 2.0 * d / (T - ts)
    log_term = -k * mu + 0.5 * k * k * var + special.log_ndtr((mu - k * var) / sig)
    val = special.ndtr(mu / sig) - np.exp(log_term)
    atom = (1.0 - math.exp(-2.0 * x0 * d / T)) if x0 > 0 else 0.0
    out = np.where(inner, np.clip(val, 0.0, 1.0), np.where(tt >= T, 1.0, atom))
    return out[()] if out.ndim == 0 else out
