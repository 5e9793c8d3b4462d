"""Brownian motion, bridges, BES(3) and the Williams path decomposition.

Paths live on a uniform grid 0, dt, ..., t (dt is adjusted so the grid ends
exactly at t).  Hitting times between grid points are detected with the
Brownian-bridge crossing probability exp(-2 a b / dt), so discrete monitoring
does not bias them; the crossing time inside a step is placed by linear
interpolation (or at the midpoint for a bridge excursion).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sps

from .kernels import DomainError

KINDS = ("bm", "drifted_bm", "bridge", "bes3", "conditioned_bes3", "williams")


@dataclass
class PathSample:
    dt: float
    values: np.ndarray
    kind: str
    start: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown path kind {self.kind!r}")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[-1])

    @property
    def t(self) -> float:
        return self.dt * (self.values.shape[-1] - 1)


def _grid(t, dt):
    if not (t > 0 and dt > 0):
        raise DomainError(f"need t > 0 and dt > 0, got t={t!r}, dt={dt!r}")
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    return n, t / n


def default_dt(t: float) -> float:
    return 1e-3 * max(1.0, t)


def bm_paths(t, dt, rng, n_paths=1, drift=0.0, x0=0.0):
    """Matrix (n_paths, n+1) of Brownian paths with drift."""
    n, h = _grid(t, dt)
    inc = rng.standard_normal((n_paths, n)) * math.sqrt(h) + drift * h
    out = np.empty((n_paths, n + 1))
    out[:, 0] = x0
    np.cumsum(inc, axis=1, out=out[:, 1:])
    out[:, 1:] += x0
    return out, h


def sample_bm(t: float, dt: float, drift: float, rng, x0: float = 0.0) -> PathSample:
    vals, h = bm_paths(t, dt, rng, 1, drift, x0)
    return PathSample(h, vals[0], "drifted_bm" if drift != 0 else "bm", start=x0, meta={"drift": drift})


def bridge_paths(t, dt, rng, n_paths=1):
    w, h = bm_paths(t, dt, rng, n_paths)
    s = h * np.arange(w.shape[1]) / t
    b = w - s[None, :] * w[:, -1:]
    b[:, -1] = 0.0
    return b, h


def sample_bridge(t: float, dt: float, rng) -> PathSample:
    vals, h = bridge_paths(t, dt, rng, 1)
    return PathSample(h, vals[0], "bridge")


def bes3_paths(x, t, dt, rng, n_paths=1):
    """BES_x(3) as the norm of 3-D Brownian motion; ``x`` scalar or one start per row."""
    x = np.broadcast_to(np.asarray(x, dtype=float), (n_paths,))
    if np.any(x < 0):
        raise DomainError("BES(3) start must be nonnegative")
    n, h = _grid(t, dt)
    g = rng.standard_normal((n_paths, n, 3)) * math.sqrt(h)
    pos = np.zeros((n_paths, n + 1, 3))
    pos[:, 0, 0] = x
    np.cumsum(g, axis=1, out=pos[:, 1:, :])
    pos[:, 1:, 0] += x[:, None]
    return np.sqrt(np.einsum("ijk,ijk->ij", pos, pos)), h


def sample_bes3(x: float, t: float, dt: float, rng) -> PathSample:
    vals, h = bes3_paths(x, t, dt, rng, 1)
    return PathSample(h, vals[0], "bes3", start=x)


def first_hits(paths, level, dt, rng):
    """First passage below ``level`` for each row, with bridge-crossing detection.

    Returns (step index k such that the hit lies in [k dt, (k+1) dt], hit time),
    with k = -1 and time = inf when no hit occurs on the grid horizon.
    """
    lev = np.broadcast_to(np.asarray(level, dtype=float).reshape(-1, 1), (paths.shape[0], 1))
    a = paths[:, :-1] - lev
    b = paths[:, 1:] - lev
    below = b <= 0
    with np.errstate(over="ignore", invalid="ignore"):
        p_cross = np.where((a > 0) & (b > 0), np.exp(-2.0 * a * b / dt), 0.0)
    u = rng.random(a.shape)
    crossed = below | (u < p_cross)
    crossed[:, :1] |= a[:, :1] <= 0
    any_hit = crossed.any(axis=1)
    k = np.where(any_hit, crossed.argmax(axis=1), -1)
    rows = np.arange(paths.shape[0])
    kk = np.maximum(k, 0)
    ak, bk = a[rows, kk], b[rows, kk]
    frac = np.where(ak <= 0, 0.0, np.where(bk <= 0, ak / np.maximum(ak - bk, 1e-300), 0.5))
    tau = np.where(any_hit, (kk + frac) * dt, np.inf)
    return k, tau


def bm_then_bes_paths(x, level, t, dt, rng, n_paths=1):
    """BM from x run until it first hits ``level`` (per-row array allowed), then level + BES_0(3).

    Returns (paths, dt, hit times).  Rows that do not hit on [0, t] stay BM.
    """
    bm, h = bm_paths(t, dt, rng, n_paths, x0=0.0)
    x = np.broadcast_to(np.asarray(x, dtype=float).reshape(-1, 1), (n_paths, 1))
    bm = bm + x
    lev = np.broadcast_to(np.asarray(level, dtype=float).reshape(-1, 1), (n_paths, 1))
    k, tau = first_hits(bm, lev, h, rng)
    n = bm.shape[1] - 1
    times = h * np.arange(n + 1)
    # 3-D Brownian increments after the hit; the first one spans (tau, grid point]
    after = times[None, :] > tau[:, None]
    span = np.zeros((n_paths, n + 1))
    span[:, 1:] = np.where(after[:, 1:], h, 0.0)
    first = after & ~np.concatenate([np.zeros((n_paths, 1), bool), after[:, :-1]], axis=1)
    span = np.where(first, times[None, :] - np.where(np.isfinite(tau), tau, 0.0)[:, None], span)
    g = rng.standard_normal((n_paths, n + 1, 3)) * np.sqrt(span)[..., None]
    pos = np.cumsum(g, axis=1)
    r = np.sqrt(np.einsum("ijk,ijk->ij", pos, pos))
    out = np.where(after, lev + r, bm)
    return out, h, tau


def williams_compose(x: float, rng, t: float = 1.0, dt: float | None = None, u: float | None = None) -> PathSample:
    """BES_x(3) built as BM from x down to x*U, followed by x*U + BES_0(3)."""
    if not x > 0:
        raise DomainError("williams_compose needs x > 0")
    dt = default_dt(t) if dt is None else dt
    if u is None:
        u = rng.random()
    level = x * u
    vals, h, tau = bm_then_bes_paths(x, level, t, dt, rng, 1)
    return PathSample(h, vals[0], "williams", start=x, meta={"minimum": level, "split_time": float(tau[0]), "u": u})


def williams_paths(x, t, dt, rng, n_paths):
    u = rng.random(n_paths)
    vals, h, tau = bm_then_bes_paths(x, x * u, t, dt, rng, n_paths)
    return vals, h, tau, x * u


def sample_conditioned_bes(x: float, rng, t: float = 1.0, dt: float | None = None) -> PathSample:
    """BM from x until its first hit of 0, followed by an independent BES_0(3)."""
    if x < 0:
        raise DomainError("conditioned Bessel start must be nonnegative")
    dt = default_dt(t) if dt is None else dt
    vals, h, tau = bm_then_bes_paths(x, 0.0, t, dt, rng, 1)
    return PathSample(h, vals[0], "conditioned_bes3", start=x, meta={"hit_time": float(tau[0]), "minimum": 0.0})


def conditioned_bes_paths(x, t, dt, rng, n_paths):
    vals, h, tau = bm_then_bes_paths(x, 0.0, t, dt, rng, n_paths)
    return vals, h, tau


def hitting_time_cdf(s, x):
    """P(T_x <= s) for standard BM started at x > 0 hitting 0 (reflection principle)."""
    s = np.asarray(s, dtype=float)
    return sps.erfc(x / np.sqrt(2.0 * np.maximum(s, 1e-300)))


def barrier_prob(kind: str, b: float, t: float, drift: float = 0.0) -> float:
    """Probability that a path started at 0 stays below b on [0, t].

    bridge: 1 - exp(-2 b^2 / t).  bm: sqrt(2/pi) int_0^{b/sqrt t} e^{-x^2/2} dx,
    generalised to drift m by the reflection formula
    Phi((b - m t)/sqrt t) - e^{2 m b} Phi((-b - m t)/sqrt t); t = inf with m < 0
    gives 1 - e^{2 m b}.
    """
    if not (b > 0 and t > 0):
        raise DomainError("barrier_prob needs b > 0 and t > 0")
    if kind == "bridge":
        if math.isinf(t):
            raise DomainError("bridge barrier needs finite t")
        return -math.expm1(-2.0 * b * b / t)
    if kind != "bm":
        raise DomainError(f"unknown barrier kind {kind!r}")
    if math.isinf(t):
        if drift >= 0:
            return 0.0
        return -math.expm1(2.0 * drift * b)
    if drift == 0:
        return math.erf(b / math.sqrt(2.0 * t))
    st = math.sqrt(t)
    return float(sps.ndtr((b - drift * t) / st) - math.exp(2.0 * drift * b) * sps.ndtr((-b - drift * t) / st))
