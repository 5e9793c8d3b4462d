"""Lattice GFF on the cylinder R x S^1 and its chaos measure.

The field is X = B_s + Y(s, theta): B a two-sided Brownian motion, Y the
lateral noise.  Y is sampled through its Fourier modes in theta,

    Y(s, theta) = sum_{n <= N} a_n(s) cos(n theta) + b_n(s) sin(n theta),

with a_n, b_n independent stationary Ornstein-Uhlenbeck processes in s of
variance 1/n and correlation exp(-n |ds|).  On the lattice this has exactly
the covariance H_N(ds, dtheta) = sum_{n <= N} e^{-n|ds|} cos(n dtheta)/n,
the mode truncation of log 1/|1 - e^{-|ds| - i dtheta}|, with N = n_theta/2.
Insertions use the same truncated kernel, so vertex operators are
regularised at the lattice scale consistently with the field.

Cell weights follow the cylinder form of the sphere chaos:
exp(gamma (B_s + profile + Y) - gamma^2/2 Var Y) ds dtheta, where the profile
carries -Q|s| and the insertion Green's functions.  B is not variance
renormalised: its -gamma^2|s|/2 is part of the -Q|s| term.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sps

from .kernels import DomainError, LiouvilleParams, lateral_cov

FORMAT_VERSION = 1
_MAGIC = b"LFFIELD1\n"
LOG_MAX = 700.0


class FactorizationError(ArithmeticError):
    """Covariance matrix could not be factorised within the jitter cap."""


@dataclass(frozen=True)
class CylinderLattice:
    s_min: float
    s_max: float
    n_s: int
    n_theta: int

    def __post_init__(self):
        if not (self.s_min < 0 < self.s_max):
            raise DomainError("lattice needs s_min < 0 < s_max")
        if self.n_s < 4 or self.n_theta < 4:
            raise DomainError("lattice needs n_s, n_theta >= 4")
        if self.n_theta % 2:
            raise DomainError("n_theta must be even")

    @classmethod
    def window(cls, t: float = 0.0, n_theta: int = 64, ds: float | None = None, buffer: float = 10.0, min_ns: int = 4):
        """Lattice on [-(t + buffer), t + buffer] with ds defaulting to dtheta."""
        dth = 2 * math.pi / n_theta
        ds = dth if ds is None else ds
        lo, hi = -(t + buffer), t + buffer
        n_s = max(min_ns, int(math.ceil((hi - lo) / ds)))
        return cls(lo, hi, n_s, n_theta)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / self.n_s

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.n_theta

    @property
    def cell_area(self) -> float:
        return self.ds * self.dtheta

    @property
    def s(self) -> np.ndarray:
        return self.s_min + (np.arange(self.n_s) + 0.5) * self.ds

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @property
    def n_modes(self) -> int:
        return self.n_theta // 2

    @property
    def var_diag(self) -> float:
        return lateral_variance(self.n_modes)

    def describe(self) -> dict:
        return {"s_min": self.s_min, "s_max": self.s_max, "n_s": self.n_s, "n_theta": self.n_theta}


def lateral_variance(n_modes: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n_modes + 1)))


def truncated_lateral_cov(ds, dtheta, n_modes: int):
    """H_N(ds, dtheta) = sum_{n=1}^N exp(-n |ds|) cos(n dtheta) / n."""
    ds = np.abs(np.asarray(ds, dtype=float))
    dtheta = np.asarray(dtheta, dtype=float)
    out = np.zeros(np.broadcast(ds, dtheta).shape)
    for n in range(1, n_modes + 1):
        out += np.exp(-n * ds) * np.cos(n * dtheta) / n
    return out


# ---------------------------------------------------------------------------
# samplers


def sample_two_sided_bm(lattice: CylinderLattice, rng, n: int = 1, extra=()):
    """Two-sided BM with B_0 = 0 at the lattice nodes, both window edges and ``extra`` points.

    Returns (values (n, n_s), edges (n, 2) = B at (s_min, s_max), extra values (n, len(extra))).
    """
    s = lattice.s
    extra = np.asarray(extra, dtype=float).reshape(-1)
    pts_all = np.concatenate([s, [lattice.s_min, lattice.s_max], extra])
    vals = np.zeros((n, pts_all.size))
    for side in (1, -1):
        idx = np.flatnonzero(side * pts_all > 0)
        order = idx[np.argsort(side * pts_all[idx], kind="stable")]
        pos = np.concatenate([[0.0], side * pts_all[order]])
        steps = np.sqrt(np.diff(pos))
        vals[:, order] = np.cumsum(rng.standard_normal((n, steps.size)) * steps, axis=1)
    ns = lattice.n_s
    return vals[:, :ns], vals[:, ns : ns + 2], vals[:, ns + 2 :]


def sample_lateral(lattice: CylinderLattice, rng, n: int = 1):
    """Mode-OU sampler of the lateral noise; returns (values (n, n_s, n_theta), var_diag)."""
    N = lattice.n_modes
    k = np.arange(1, N + 1, dtype=float)
    rho = np.exp(-k * lattice.ds)
    sd = 1.0 / np.sqrt(k)
    innov = sd * np.sqrt(-np.expm1(-2.0 * k * lattice.ds))
    xi = rng.standard_normal((lattice.n_s, n, 2, N))
    coef = np.empty_like(xi)
    coef[0] = xi[0] * sd
    for i in range(1, lattice.n_s):
        coef[i] = rho * coef[i - 1] + innov * xi[i]
    m = lattice.n_theta
    spec = np.zeros((n, lattice.n_s, m // 2 + 1), dtype=complex)
    a = np.moveaxis(coef[:, :, 0, :], 0, 1)
    b = np.moveaxis(coef[:, :, 1, :], 0, 1)
    spec[:, :, 1:N] = 0.5 * m * (a[:, :, : N - 1] - 1j * b[:, :, : N - 1])
    spec[:, :, N] = m * a[:, :, N - 1]
    values = np.fft.irfft(spec, n=m, axis=-1)
    return values, lattice.var_diag


def lateral_cov_matrix(lattice: CylinderLattice, rule: str = "truncated") -> np.ndarray:
    """Dense covariance of Y on the lattice (row-major cells).

    ``rule="truncated"``: H_N everywhere, the law sampled by :func:`sample_lateral`.
    ``rule="diagonal"``: the exact kernel off the diagonal with the cell-scale
    diagonal Var = lateral_cov(ds, 0); this matrix is indefinite on every
    lattice tried, see :class:`DenseLateralSampler`.
    """
    s = np.repeat(lattice.s, lattice.n_theta)
    th = np.tile(lattice.theta, lattice.n_s)
    dS = s[:, None] - s[None, :]
    dT = th[:, None] - th[None, :]
    if rule == "truncated":
        return truncated_lateral_cov(dS, dT, lattice.n_modes)
    if rule == "diagonal":
        with np.errstate(divide="ignore"):
            c = -np.log(np.abs(1.0 - np.exp(-np.abs(dS) - 1j * dT)))
        np.fill_diagonal(c, lateral_cov(lattice.ds, 0.0))
        return c
    raise ValueError(f"unknown covariance rule {rule!r}")


@dataclass
class DenseLateralSampler:
    """Dense factorisation of the lateral covariance (small lattices, oracle use)."""

    lattice: CylinderLattice
    rule: str = "truncated"
    jitter_cap: float = 1e-8
    max_cells: int = 4096
    jitter: float = field(init=False, default=0.0)
    factor: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        ncell = self.lattice.n_s * self.lattice.n_theta
        if ncell > self.max_cells:
            raise DomainError(f"dense factorisation limited to {self.max_cells} cells, got {ncell}")
        c = lateral_cov_matrix(self.lattice, self.rule)
        w, v = np.linalg.eigh(c)
        lam_min = float(w[0])
        scale = max(1.0, float(w[-1]))
        if lam_min < -self.jitter_cap * scale:
            raise FactorizationError(
                f"covariance ({self.rule}) has eigenvalue {lam_min:.3g}; jitter needed exceeds cap {self.jitter_cap:g}"
            )
        self.jitter = max(0.0, -lam_min)
        self.factor = v * np.sqrt(np.clip(w, 0.0, None))

    @property
    def var_diag(self) -> float:
        if self.rule == "truncated":
            return self.lattice.var_diag
        return lateral_cov(self.lattice.ds, 0.0)

    def sample(self, rng, n: int = 1):
        z = rng.standard_normal((n, self.factor.shape[1]))
        vals = z @ self.factor.T
        return vals.reshape(n, self.lattice.n_s, self.lattice.n_theta), self.var_diag


@dataclass
class FieldSample:
    lattice: CylinderLattice
    radial: np.ndarray  # (n_s,)
    radial_edges: np.ndarray  # B at (s_min, s_max)
    lateral: np.ndarray  # (n_s, n_theta)
    var_diag: float
    seed: object = None


def sample_field(lattice: CylinderLattice, rng, seed=None) -> FieldSample:
    rad_rng, lat_rng = rng.spawn(2)
    b, e, _ = sample_two_sided_bm(lattice, rad_rng, 1)
    y, v = sample_lateral(lattice, lat_rng, 1)
    return FieldSample(lattice, b[0], e[0], y[0], v, seed)


def dump_field(sample: FieldSample, path) -> None:
    """Binary dump: magic line, JSON header line, then row-major float64 values."""
    header = {
        "version": FORMAT_VERSION,
        "lattice": sample.lattice.describe(),
        "seed": sample.seed,
        "var_diag": sample.var_diag,
        "layout": ["radial[n_s]", "radial_edges[2]", "lateral[n_s, n_theta]"],
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for arr in (sample.radial, sample.radial_edges, sample.lateral):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))


def load_field(path) -> FieldSample:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError("not a field dump")
        header = json.loads(fh.readline())
        if header["version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported dump version {header['version']}")
        lat = CylinderLattice(**header["lattice"])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    ns, nt = lat.n_s, lat.n_theta
    return FieldSample(lat, raw[:ns].copy(), raw[ns : ns + 2].copy(), raw[ns + 2 :].reshape(ns, nt).copy(), header["var_diag"], header["seed"])


# ---------------------------------------------------------------------------
# insertion profiles

PLUS_INF = "+inf"  # s = +inf, the point 0 of the plane
MINUS_INF = "-inf"  # s = -inf, the point at infinity


@dataclass(frozen=True)
class InsertionProfile:
    """Deterministic part of the exponent: -Q|s| plus alpha_k G(z_k, .).

    ``inserts`` holds (alpha, where) with where in {PLUS_INF, MINUS_INF} or a
    cylinder point (s0, theta0).  ``q_drift=False`` drops the -Q|s| term.
    """

    inserts: tuple
    q: float
    q_drift: bool = True

    @classmethod
    def three_point(cls, a1, a2, a3, q):
        # (0, 1, inf) on the plane
        return cls(((a1, PLUS_INF), (a2, (0.0, 0.0)), (a3, MINUS_INF)), q)

    @classmethod
    def four_point(cls, momenta, t, phi, q):
        # (0, z, 1, inf) with z = exp(-t - i phi)
        a1, a2, a3, a4 = momenta
        return cls(((a1, PLUS_INF), (a2, (float(t), float(phi))), (a3, (0.0, 0.0)), (a4, MINUS_INF)), q)

    def radial(self, s):
        s = np.asarray(s, dtype=float)
        out = -self.q * np.abs(s) if self.q_drift else np.zeros_like(s)
        for a, w in self.inserts:
            if w == PLUS_INF:
                out = out + a * np.where(s > 0, s, 0.0)
            elif w == MINUS_INF:
                out = out + a * np.where(s < 0, -s, 0.0)
            else:
                s0 = w[0]
                out = out + a * np.where(s * s0 >= 0, np.minimum(np.abs(s), abs(s0)), 0.0)
        return out

    def lateral(self, lattice: CylinderLattice):
        S, T = np.meshgrid(lattice.s, lattice.theta, indexing="ij")
        out = np.zeros_like(S)
        for a, w in self.inserts:
            if w in (PLUS_INF, MINUS_INF):
                continue
            out += a * truncated_lateral_cov(S - w[0], T - w[1], lattice.n_modes)
        return out

    def decay_rates(self) -> tuple:
        """Slopes c_left, c_right with radial(s) ~ -c |s| at s -> -inf, +inf."""
        cl = self.q if self.q_drift else 0.0
        cr = cl
        for a, w in self.inserts:
            if w == PLUS_INF:
                cr -= a
            elif w == MINUS_INF:
                cl -= a
        return cl, cr

    def describe(self) -> dict:
        return {
            "inserts": [[a, w if isinstance(w, str) else list(w)] for a, w in self.inserts],
            "q": self.q,
            "q_drift": self.q_drift,
        }


# ---------------------------------------------------------------------------
# chaos measure


def log_cell_weights(gamma, radial, lateral_profile, lateral, var_diag, cell_area, normalize_radial_s=None):
    """log of exp(gamma (R + P + Y) - gamma^2/2 var) * area, broadcasting over leading axes."""
    lw = gamma * (radial[..., :, None] + lateral_profile + lateral) - 0.5 * gamma * gamma * var_diag + math.log(cell_area)
    if normalize_radial_s is not None:
        lw = lw - 0.5 * gamma * gamma * np.abs(normalize_radial_s)[:, None]
    return lw


@dataclass
class ChaosMeasure:
    weights: np.ndarray
    profile: dict
    saturated: int = 0
    log_total: float = float("nan")

    @property
    def total(self) -> float:
        return float(np.exp(self.log_total))


def gmc_weights(
    sample: FieldSample,
    params: LiouvilleParams,
    profile: InsertionProfile | None = None,
    normalize_radial: bool = False,
    shift: float = 0.0,
) -> ChaosMeasure:
    """Cell masses of one field realisation.

    ``normalize_radial=True`` also subtracts gamma^2|s|/2 for the radial part,
    which makes E[weight] = exp(gamma * profile) * area; the default keeps the
    sphere normalisation where that term sits inside -Q|s|.  ``shift`` is a
    constant added to the field.
    """
    lat = sample.lattice
    g = params.gamma
    if profile is None:
        profile = InsertionProfile((), params.q, q_drift=False)
    rad = sample.radial + profile.radial(lat.s) + shift
    lw = log_cell_weights(g, rad, profile.lateral(lat), sample.lateral, sample.var_diag, lat.cell_area,
                          lat.s if normalize_radial else None)
    sat = int(np.count_nonzero(lw > LOG_MAX))
    w = np.exp(np.minimum(lw, LOG_MAX))
    return ChaosMeasure(w, profile.describe(), sat, float(sps.logsumexp(lw)))


@dataclass
class FieldBatch:
    """n independent field realisations on a lattice, plus tail randomness."""

    lattice: CylinderLattice
    radial: np.ndarray  # (n, n_s)
    edges: np.ndarray  # (n, 2)
    extra: np.ndarray  # (n, k) B at requested extra points
    lateral: np.ndarray  # (n, n_s, n_theta)
    var_diag: float
    tail_u: np.ndarray  # (n, 2) uniforms driving the two Dufresne tails

    @property
    def n(self) -> int:
        return self.radial.shape[0]


def sample_batch(lattice: CylinderLattice, rng, n: int, extra=()) -> FieldBatch:
    rad_rng, lat_rng, tail_rng = rng.spawn(3)
    b, edges, ex = sample_two_sided_bm(lattice, rad_rng, n, extra)
    y, var = sample_lateral(lattice, lat_rng, n)
    return FieldBatch(lattice, b, edges, ex, y, var, tail_rng.random((n, 2)))


def bulk_log_mass(batch: FieldBatch, gamma: float, radial_exponent, lateral_profile, mask=None, per_s: bool = False):
    """log sum of cell masses given the full radial exponent (n, n_s) and lateral profile (n_s, n_theta)."""
    lat = batch.lattice
    lw = log_cell_weights(gamma, radial_exponent, lateral_profile[None], batch.lateral, batch.var_diag, lat.cell_area)
    if mask is not None:
        lw = np.where(np.asarray(mask, dtype=bool)[None, :, None], lw, -np.inf)
    by_s = sps.logsumexp(lw, axis=2)
    tot = sps.logsumexp(by_s, axis=1)
    return (tot, by_s) if per_s else tot


def dufresne_log_tail_u(log_edge, c, gamma, u):
    """Dufresne tail driven by uniforms ``u`` (inversion of the Gamma law)."""
    if not c > 0:
        raise DomainError(f"tail needs a positive decay rate, got {c!r}")
    z = sps.gammaincinv(2.0 * c / gamma, u)
    return log_edge + math.log(4.0 * math.pi / gamma**2) - np.log(z)


def profile_log_mass(
    batch: FieldBatch,
    params: LiouvilleParams,
    profile: InsertionProfile,
    tails: bool = True,
    normalize_radial: bool = False,
    tilt: float = 0.0,
    tilt_t: float = 0.0,
    mask=None,
    per_s: bool = False,
):
    """log chaos mass of each realisation under an insertion profile.

    ``tilt`` = theta applies the Cameron-Martin shift B_s -> B_s - theta (s ^ t)
    on s > 0 (t = ``tilt_t``); the caller supplies the matching likelihood
    weight theta B_t - theta^2 t / 2 (see :func:`tilt_log_weight`).
    """
    g = params.gamma
    lat = batch.lattice
    s = lat.s
    shift = -tilt * np.clip(s, 0.0, tilt_t) if tilt else 0.0
    rad = batch.radial + profile.radial(s)[None, :] + shift
    if normalize_radial:
        rad = rad - 0.5 * g * np.abs(s)[None, :]
    res = bulk_log_mass(batch, g, rad, profile.lateral(lat), mask=mask, per_s=per_s)
    if not tails or mask is not None:
        return res
    bulk = res[0] if per_s else res
    cl, cr = profile.decay_rates()
    if normalize_radial:
        cl, cr = cl + g / 2, cr + g / 2
    ends = np.array([lat.s_min, lat.s_max])
    edge_prof = profile.radial(ends)
    if normalize_radial:
        edge_prof = edge_prof - 0.5 * g * np.abs(ends)
    right_shift = -tilt * min(lat.s_max, tilt_t) if tilt else 0.0
    left = dufresne_log_tail_u(g * (batch.edges[:, 0] + edge_prof[0]), cl, g, batch.tail_u[:, 0])
    right = dufresne_log_tail_u(g * (batch.edges[:, 1] + edge_prof[1] + right_shift), cr, g, batch.tail_u[:, 1])
    tot = np.logaddexp(bulk, np.logaddexp(left, right))
    return (tot, res[1]) if per_s else tot


def tilt_log_weight(b_t, tilt: float, t: float):
    return tilt * b_t - 0.5 * tilt * tilt * t


def log_masses(lattice: CylinderLattice, params: LiouvilleParams, profile: InsertionProfile, rng, n: int,
               tails: bool = True, normalize_radial: bool = False, mask=None):
    """log total chaos mass for n fresh realisations."""
    batch = sample_batch(lattice, rng, n)
    return profile_log_mass(batch, params, profile, tails=tails, normalize_radial=normalize_radial, mask=mask)


def total_mass_Wt(z_modulus, phase, momenta, params: LiouvilleParams, lattice: CylinderLattice, rng,
                  tails: bool = True) -> float:
    """One realisation of W_t, the cylinder chaos mass with insertions at (0, z, 1, inf)."""
    if not (0 < z_modulus < 1):
        raise DomainError("need 0 < |z| < 1")
    t = -math.log(z_modulus)
    if t > lattice.s_max - 1.0:
        raise DomainError(f"t = {t:.3g} too close to the lattice edge {lattice.s_max}")
    prof = InsertionProfile.four_point(momenta, t, phase, params.q)
    return float(np.exp(log_masses(lattice, params, prof, rng, 1, tails=tails)[0]))
