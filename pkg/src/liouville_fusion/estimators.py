"""Monte Carlo estimators: negative moments, correlation functions, fusion limits.

All chaos masses are handled in log space.  Correlation functions use the
Gamma-function form of the zero-mode integral,

    <prod V> = 2/gamma * mu^{-kappa} * Gamma(kappa) * E[M^{-kappa}],  kappa = Q sigma / gamma,

with M the cylinder chaos mass under the insertion profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sps
from scipy import integrate

from .field import (
    CylinderLattice,
    FieldBatch,
    InsertionProfile,
    bulk_log_mass,
    dufresne_log_tail_u,
    profile_log_mass,
    sample_batch,
    tilt_log_weight,
    truncated_lateral_cov,
)
from .kernels import (
    INFINITY,
    Branch,
    DomainError,
    InsertionSet,
    LiouvilleParams,
    RateSpec,
    check_seiberg,
    log_rate_function,
)
from .montecarlo import MCConfig, MomentEstimate, ValidationError, combined_z, config_digest, mean_estimate, run_chunked
from .paths import bes3_paths, bm_then_bes_paths as _bm_then_bes
from .special import d_dozz_at_q


class SeibergError(DomainError):
    """Momenta violate the Seiberg bounds."""


class BranchError(DomainError):
    """Requested representation does not apply to the rate-function branch."""


# ---------------------------------------------------------------------------
# negative moments


def negative_moment(samples, kappa: float, seed=None, digest=None) -> MomentEstimate:
    """Mean and standard error of samples^-kappa."""
    x = np.asarray(samples, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("negative_moment needs strictly positive samples")
    if kappa < 0:
        raise DomainError("kappa must be nonnegative")
    return mean_estimate(x ** (-kappa), seed, digest, kappa=kappa)


def negative_moment_log(log_samples, kappa: float, log_weights=None, seed=None, digest=None) -> MomentEstimate:
    """Same as :func:`negative_moment` from log samples, optionally importance weighted."""
    lx = np.asarray(log_samples, dtype=float)
    lw = -kappa * lx if log_weights is None else np.asarray(log_weights) - kappa * lx
    return mean_estimate(np.exp(lw), seed, digest, kappa=kappa)


def correlation_kappa(momenta, params: LiouvilleParams) -> float:
    return (sum(momenta) - 2.0 * params.q) / params.gamma


def log_correlation_prefactor(momenta, params: LiouvilleParams) -> float:
    """log of 2/gamma mu^-kappa Gamma(kappa)."""
    k = correlation_kappa(momenta, params)
    return math.log(2.0 / params.gamma) - k * math.log(params.mu) + math.lgamma(k)


def _require_seiberg(locations, momenta, params):
    rep = check_seiberg(InsertionSet.from_pairs(locations, momenta), params)
    if not rep.valid:
        raise SeibergError(f"Seiberg bounds violated for momenta {tuple(momenta)} (sigma={rep.sigma:.4g})")
    return rep


def _lattice_dict(lat: CylinderLattice) -> dict:
    return {"s_min": lat.s_min, "s_max": lat.s_max, "n_s": lat.n_s, "n_theta": lat.n_theta}


# ---------------------------------------------------------------------------
# correlation functions


def default_three_point_lattice() -> CylinderLattice:
    dth = 2 * math.pi / 64
    return CylinderLattice.window(0.0, n_theta=64, ds=dth / 2, buffer=10.0, min_ns=256)


def three_point_mc(a1, a2, a3, params: LiouvilleParams, mc: MCConfig, lattice: CylinderLattice | None = None,
                   tails: bool = True) -> MomentEstimate:
    """<V_a1(0) V_a2(1) V_a3(inf)> from cylinder chaos masses.

    The momenta are placed in canonical order (smallest at the finite point,
    largest at -inf), which makes the lattice estimate exactly symmetric.
    """
    momenta = (float(a1), float(a2), float(a3))
    _require_seiberg((0.0, 1.0, INFINITY), momenta, params)
    lat = lattice or default_three_point_lattice()
    m0, m1, m2 = sorted(momenta)
    prof = InsertionProfile.three_point(m1, m0, m2, params.q)
    kappa = correlation_kappa(momenta, params)
    cfg = {"op": "three_point_mc", "momenta": sorted(momenta), "gamma": params.gamma, "mu": params.mu,
           "lattice": _lattice_dict(lat), "mc": mc.describe(), "tails": tails}
    digest = config_digest(cfg)

    def fn(rng, size):
        b = sample_batch(lat, rng, size)
        return np.exp(-kappa * profile_log_mass(b, params, prof, tails=tails))

    raw = mean_estimate(run_chunked(fn, mc, "three_point"), mc.seed, digest)
    pref = math.exp(log_correlation_prefactor(momenta, params))
    est = raw.scaled(pref)
    est.extra = {"kappa": kappa, "raw_moment": raw.value, "raw_stderr": raw.stderr, "prefactor": pref,
                 "placement": {"+inf": m1, "finite": m0, "-inf": m2}, "lattice": _lattice_dict(lat)}
    return est


def default_four_point_lattice(t: float, n_theta: int = 64) -> CylinderLattice:
    return CylinderLattice.window(t, n_theta=n_theta, buffer=10.0)


def four_point_mc(z, momenta, params: LiouvilleParams, mc: MCConfig, lattice: CylinderLattice | None = None,
                  tails: bool = True) -> MomentEstimate:
    """<V_a1(0) V_a2(z) V_a3(1) V_a4(inf)> including |z|^{-a1 a2} |1-z|^{-a2 a3}."""
    z = complex(z)
    if z == 0 or z == 1:
        raise DomainError("z must differ from 0 and 1")
    r = abs(z)
    if not r < 1:
        raise DomainError("four_point_mc needs |z| < 1")
    momenta = tuple(float(a) for a in momenta)
    if len(momenta) != 4:
        raise DomainError("four_point_mc needs four momenta")
    _require_seiberg((0.0, z, 1.0, INFINITY), momenta, params)
    t, phi = -math.log(r), -math.atan2(z.imag, z.real)
    lat = lattice or default_four_point_lattice(t)
    if t > lat.s_max - 1.0:
        raise DomainError(f"t = {t:.3g} too close to the lattice edge {lat.s_max}")
    prof = InsertionProfile.four_point(momenta, t, phi, params.q)
    kappa = correlation_kappa(momenta, params)
    cfg = {"op": "four_point_mc", "z": [z.real, z.imag], "momenta": momenta, "gamma": params.gamma, "mu": params.mu,
           "lattice": _lattice_dict(lat), "mc": mc.describe(), "tails": tails}
    digest = config_digest(cfg)

    def fn(rng, size):
        b = sample_batch(lat, rng, size)
        return np.exp(-kappa * profile_log_mass(b, params, prof, tails=tails))

    raw = mean_estimate(run_chunked(fn, mc, "four_point"), mc.seed, digest)
    a1, a2, a3, _ = momenta
    logp = log_correlation_prefactor(momenta, params) - a1 * a2 * math.log(r) - a2 * a3 * math.log(abs(1 - z))
    pref = math.exp(logp)
    est = raw.scaled(pref)
    est.extra = {"kappa": kappa, "t": t, "phi": phi, "raw_moment": raw.value, "raw_stderr": raw.stderr,
                 "prefactor": pref, "lattice": _lattice_dict(lat)}
    return est


def four_point_grid_mc(zs, momenta, params: LiouvilleParams, mc: MCConfig, lattice: CylinderLattice | None = None,
                       tails: bool = True, label: str = "four_point_grid"):
    """four_point_mc at many z on shared field realisations.

    Returns (values, stderrs) as arrays aligned with ``zs``.
    """
    zs = [complex(z) for z in zs]
    if any(z == 0 or not abs(z) < 1 or z == 1 for z in zs):
        raise DomainError("every z needs 0 < |z| < 1")
    momenta = tuple(float(a) for a in momenta)
    for z in zs[:1]:
        _require_seiberg((0.0, z, 1.0, INFINITY), momenta, params)
    ts = np.array([-math.log(abs(z)) for z in zs])
    lat = lattice or default_four_point_lattice(float(ts.max()), n_theta=32)
    if ts.max() > lat.s_max - 1.0:
        raise DomainError("largest t too close to the lattice edge")
    profs = [InsertionProfile.four_point(momenta, t, -math.atan2(z.imag, z.real), params.q) for t, z in zip(ts, zs)]
    kappa = correlation_kappa(momenta, params)

    def fn(rng, size):
        b = sample_batch(lat, rng, size)
        return np.stack([np.exp(-kappa * profile_log_mass(b, params, p, tails=tails)) for p in profs], axis=1)

    raw = run_chunked(fn, mc, label)
    a1, a2, a3, _ = momenta
    logp = log_correlation_prefactor(momenta, params)
    pref = np.array([math.exp(logp - a1 * a2 * math.log(abs(z)) - a2 * a3 * math.log(abs(1 - z))) for z in zs])
    mean = raw.mean(axis=0) * pref
    se = raw.std(axis=0, ddof=1) / math.sqrt(raw.shape[0]) * pref
    return mean, se


# ---------------------------------------------------------------------------
# negative moments of W_t on a common t grid


def wt_lattice(t_max: float, n_theta: int = 32, buffer: float = 10.0) -> CylinderLattice:
    return CylinderLattice.window(t_max, n_theta=n_theta, buffer=buffer)


def wt_negative_moments(momenta, kappa: float, params: LiouvilleParams, t_grid, mc: MCConfig, phi: float = 0.0,
                        tilt: float = 0.0, lattice: CylinderLattice | None = None, label: str = "wt_moments"):
    """Samples of W_t^-kappa for every t of the grid on shared field realisations.

    With ``tilt`` = theta != 0 the samples are e^{theta B_t - theta^2 t/2} Z_t^-kappa,
    Z_t being W_t with B_s replaced by B_s - theta (s ^ t); both have mean E[W_t^-kappa].
    Returns an (n, len(t_grid)) array.
    """
    ts = np.asarray(sorted(float(t) for t in t_grid))
    if ts[0] <= 0:
        raise DomainError("t grid must be positive")
    lat = lattice or wt_lattice(ts[-1])
    if ts[-1] > lat.s_max - 1.0:
        raise DomainError("largest t too close to the lattice edge")
    profs = [InsertionProfile.four_point(momenta, t, phi, params.q) for t in ts]

    def fn(rng, size):
        b = sample_batch(lat, rng, size, extra=ts)
        out = np.empty((size, ts.size))
        for j, (t, p) in enumerate(zip(ts, profs)):
            lw = profile_log_mass(b, params, p, tilt=tilt, tilt_t=t)
            lv = -kappa * lw
            if tilt:
                lv = lv + tilt_log_weight(b.extra[:, j], tilt, t)
            out[:, j] = np.exp(lv)
        return out

    return run_chunked(fn, mc, label), ts


def cameron_martin_check(z_modulus: float, momenta, kappa: float, params: LiouvilleParams, mc: MCConfig,
                         theta: float | None = None, phi: float = 0.0, lattice: CylinderLattice | None = None) -> dict:
    """Direct and Cameron-Martin tilted estimates of E[W_t^-kappa] with their standardized difference.

    The two estimators use independent streams; with theta = 0 they run the
    same code path on the same stream and agree exactly.
    """
    if not 0 < z_modulus < 1:
        raise DomainError("need 0 < |z| < 1")
    t = -math.log(z_modulus)
    if theta is None:
        theta = momenta[0] + momenta[1] - params.q
    lat = lattice or wt_lattice(t)
    direct, _ = wt_negative_moments(momenta, kappa, params, [t], mc, phi, 0.0, lat, label="cm_direct")
    tilted, _ = wt_negative_moments(momenta, kappa, params, [t], mc, phi, theta, lat,
                                    label="cm_direct" if theta == 0 else "cm_tilted")
    d = mean_estimate(direct[:, 0], mc.seed)
    w = mean_estimate(tilted[:, 0], mc.seed)
    return {"t": t, "theta": theta, "kappa": kappa, "direct": d.as_dict(), "tilted": w.as_dict(),
            "z_score": combined_z(d, w), "tilted_rel_sd": float(np.std(tilted[:, 0]) / max(w.value, 1e-300))}


# ---------------------------------------------------------------------------
# direct limit constant


def _linear_fit(X, y, cov):
    """Weighted least squares with weights from diag(cov); parameter covariance from the full cov."""
    w = 1.0 / np.maximum(np.diag(cov), 1e-300)
    A = np.linalg.solve(X.T @ (X * w[:, None]), (X * w[:, None]).T)
    beta = A @ y
    return beta, np.sqrt(np.maximum(np.diag(A @ cov @ A.T), 0.0))


def plateau_fits(ts, means, cov) -> dict:
    """Trend and extrapolation fits of per-t estimates E_t (shared samples, covariance ``cov``).

    slope: log E_t = c + beta t^{-1/2} + m t (m = 0 on a converged plateau; the
    t^{-1/2} term is the leading finite-t correction of the barrier estimates).
    extrapolated: E_t = E_inf + b t^{-1/2} + c t^{-1}.
    Also reported: the plain slope of log E_t against t.
    """
    ts = np.asarray(ts, float)
    k = ts.size
    one = np.ones(k)
    logm = np.log(means)
    cov_log = cov / np.outer(means, means)
    out = {}
    X = np.vstack([one, ts ** -0.5, ts]).T if k >= 4 else np.vstack([one, ts]).T
    beta, se = _linear_fit(X, logm, cov_log)
    out["slope"], out["slope_stderr"] = float(beta[-1]), float(se[-1])
    beta, se = _linear_fit(np.vstack([one, ts]).T, logm, cov_log)
    out["plain_slope"], out["plain_slope_stderr"] = float(beta[1]), float(se[1])
    X = np.vstack([one, ts ** -0.5, 1.0 / ts]).T if k >= 4 else np.vstack([one, ts ** -0.5]).T
    beta, se = _linear_fit(X, means, cov)
    out["extrapolated"], out["extrapolated_stderr"] = float(beta[0]), float(se[0])
    return out


def limit_constant_direct(momenta, kappa: float, params: LiouvilleParams, t_grid=(2.0, 4.0, 8.0, 16.0),
                          mc: MCConfig | None = None, phi: float = 0.0, tilt: float | str | None = "auto",
                          lattice: CylinderLattice | None = None, convention: str = "corrected") -> MomentEstimate:
    """E_kappa from E[W_t^-kappa] / I(e^-t) over a t grid, with trend diagnostics.

    ``tilt="auto"`` uses the Cameron-Martin tilt theta = a1 + a2 - Q when that is
    positive (it removes the exponentially rare event that dominates the raw
    moment); the estimates are unbiased either way.  ``convention`` selects the
    log power of the rate function (see :func:`kernels.rate_function`).
    The returned value is the raw plateau at the largest t; the extrapolated
    plateau and fits are in ``extra``.
    """
    if mc is None:
        raise ValidationError("limit_constant_direct needs a Monte Carlo configuration")
    momenta = tuple(float(a) for a in momenta)
    if len(momenta) != 4:
        raise DomainError("limit_constant_direct needs four momenta")
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    for a in momenta:
        if not 0 <= a < params.q:
            raise SeibergError(f"momentum {a} outside [0, Q)")
    lam = momenta[0] + momenta[1] - params.q
    theta = (lam if lam > 0 else 0.0) if tilt == "auto" else float(tilt or 0.0)
    spec = RateSpec(momenta[0] + momenta[1], kappa, params.gamma)
    samples, ts = wt_negative_moments(momenta, kappa, params, t_grid, mc, phi, theta, lattice)
    logI = np.array([log_rate_function(spec, params, t, convention) for t in ts])
    scaled = samples * np.exp(-logI)[None, :]
    n = samples.shape[0]
    means = scaled.mean(axis=0)
    cov = np.atleast_2d(np.cov(scaled, rowvar=False)) / n
    ses = np.sqrt(np.diag(cov))
    per_t = [{"t": float(t), "value": float(m), "stderr": float(e), "log_rate": float(li)}
             for t, m, e, li in zip(ts, means, ses, logI)]
    extra = {"branch": spec.branch.value, "per_t": per_t, "tilt": theta, "convention": convention,
             "cauchy": _cauchy_diagnostic(scaled)}
    if ts.size >= 2:
        extra.update(plateau_fits(ts, means, cov))
        # literal reading: slope of log E[W_t] + (exponential rate) t, no log power;
        # the two conventions carry opposite log powers, so their mean is the linear part
        lin = np.array([0.5 * (log_rate_function(spec, params, t, "printed")
                               + log_rate_function(spec, params, t, "corrected")) for t in ts])
        raw = samples.mean(axis=0)
        extra["literal_slope"] = float(np.polyfit(ts, np.log(raw) - lin, 1)[0])
    cfg = {"op": "limit_constant_direct", "momenta": momenta, "kappa": kappa, "gamma": params.gamma,
           "mu": params.mu, "t_grid": ts.tolist(), "phi": phi, "tilt": theta, "convention": convention,
           "mc": mc.describe()}
    return MomentEstimate(float(means[-1]), float(ses[-1]), n, mc.seed, config_digest(cfg), extra)


def _cauchy_diagnostic(scaled) -> dict:
    """|E(t_k) - E(t_{k-1})| vs |E(t_{k-1}) - E(t_{k-2})| on the last three grid points."""
    if scaled.shape[1] < 3:
        return {"available": False}
    d_early = scaled[:, -2] - scaled[:, -3]
    d_late = scaled[:, -1] - scaled[:, -2]
    n = scaled.shape[0]
    de, dl = float(d_early.mean()), float(d_late.mean())
    se_e, se_l = float(d_early.std(ddof=1) / math.sqrt(n)), float(d_late.std(ddof=1) / math.sqrt(n))
    return {"available": True, "d_early": de, "d_early_stderr": se_e, "d_late": dl, "d_late_stderr": se_l,
            "decreasing": bool(abs(dl) < abs(de)), "consistent": bool(abs(dl) <= max(abs(de), 3.0 * se_l))}


def profile_negative_moment(profile: InsertionProfile, kappa: float, params: LiouvilleParams, mc: MCConfig,
                            lattice: CylinderLattice, label: str = "profile_moment", tails: bool = True):
    """E[M^-kappa] for the cylinder chaos mass M under a fixed insertion profile."""

    def fn(rng, size):
        return np.exp(-kappa * profile_log_mass(sample_batch(lattice, rng, size), params, profile, tails=tails))

    return mean_estimate(run_chunked(fn, mc, label), mc.seed)


def subcritical_limit_mc(momenta, kappa: float, params: LiouvilleParams, mc: MCConfig,
                         lattice: CylinderLattice | None = None) -> MomentEstimate:
    """Subcritical limit E[(int dM / (|x|^{g(a1+a2)} |x-1|^{g a3} |x|_+^{4 - g sum a}))^-kappa].

    On the cylinder this is the chaos mass with a1 + a2 merged at +inf.
    """
    a1, a2, a3, a4 = (float(a) for a in momenta)
    if not a1 + a2 < params.q:
        raise BranchError("subcritical limit needs a1 + a2 < Q")
    lat = lattice or wt_lattice(0.0)
    est = profile_negative_moment(InsertionProfile.three_point(a1 + a2, a3, a4, params.q), kappa, params, mc, lat,
                                  label="subcritical_limit")
    est.digest = config_digest({"op": "subcritical_limit_mc", "momenta": (a1, a2, a3, a4), "kappa": kappa,
                                "gamma": params.gamma, "mc": mc.describe(), "lattice": _lattice_dict(lat)})
    return est


# ---------------------------------------------------------------------------
# the random functional F and the Bessel representation


@dataclass
class FunctionalFInput:
    """Arguments of F_{a1,a2}(u, f): f sampled on s = 0, dt, 2 dt, ..."""

    a1: float
    a2: float
    u: float
    f: object  # PathSample

    def __post_init__(self):
        if self.u < 0:
            raise DomainError("u must be nonnegative")


#: grid step of the sampled f on the lattice window
F_PATH_DT = 0.02
#: far-field Bessel paths: e^{-gamma R_r} ~ e^{-gamma sqrt(r)} is negligible past FAR_LENGTH
FAR_LENGTH = 200.0
FAR_DT = 0.05


def default_f_lattice(n_theta: int = 32, left: float = 10.0, right: float = 15.0) -> CylinderLattice:
    dth = 2 * math.pi / n_theta
    return CylinderLattice(-left, right, int(math.ceil((left + right) / dth)), n_theta)


def _interp_rows(vals, dt, s):
    x = np.asarray(s) / dt
    if x.size and x.max() > vals.shape[1] - 1 + 1e-9:
        raise DomainError("path f does not cover the lattice")
    i = np.clip(np.floor(x).astype(int), 0, vals.shape[1] - 2)
    w = x - i
    return vals[:, i] * (1.0 - w) + vals[:, i + 1] * w


def log_functional_F(batch: FieldBatch, params: LiouvilleParams, a1: float, a2: float, u, f_vals, f_dt: float,
                     far_log=None):
    """log F_{a1,a2}(u, f) for each row, on the single-cylinder form.

    Exponent gamma[(-u + B_s - (Q - a2)|s|) 1{s<=0} - f(s) 1{s>0} + a1 G(1, .)]
    against the lateral chaos, on the lattice window.  The s < s_min tail is the
    exact Dufresne law; ``far_log`` (per row) is the log mass beyond s_max,
    supplied by the caller (see :func:`far_field_log_mass`).
    """
    lat = batch.lattice
    g, q = params.gamma, params.q
    c_left = q - a2
    if not c_left > 0:
        raise DomainError("F needs a2 < Q")
    s = lat.s
    n = batch.n
    u = np.broadcast_to(np.asarray(u, dtype=float), (n,))
    f_vals = np.asarray(f_vals, dtype=float).reshape(n, -1)
    left = s <= 0
    rad = np.empty((n, s.size))
    rad[:, left] = -u[:, None] + batch.radial[:, left] - c_left * np.abs(s[left])[None, :]
    rad[:, ~left] = -_interp_rows(f_vals, f_dt, s[~left])
    S, T = np.meshgrid(s, lat.theta, indexing="ij")
    latprof = a1 * truncated_lateral_cov(S, T, lat.n_modes)
    tot = bulk_log_mass(batch, g, rad, latprof)
    tail = dufresne_log_tail_u(g * (batch.edges[:, 0] - u - c_left * abs(lat.s_min)), c_left, g, batch.tail_u[:, 0])
    tot = np.logaddexp(tot, tail)
    if far_log is not None:
        tot = np.logaddexp(tot, far_log)
    return tot


def _log_trapz_exp(logv, dt, mask=None):
    w = np.full(logv.shape[1], dt)
    w[0] = w[-1] = 0.5 * dt
    if mask is not None:
        logv = np.where(mask, logv, -np.inf)
    return sps.logsumexp(logv, b=w[None, :], axis=1)


def far_field_log_mass(y, hit, gamma: float, rng, length: float = FAR_LENGTH, dt: float = FAR_DT, level=0.0):
    """log of 2 pi int_0^inf e^{-gamma f} for the continuation of a path "BM down to ``level``, then level + BES_0(3)".

    The lateral chaos is replaced by its mean.  From a row already in its
    BES(3) phase at value y the continuation is BES_y(3).  From a row still in
    its Brownian phase at y > 0, the remaining path to 0 reversed in time is a
    BES_0(3) run until its last passage at y (Williams), followed by a fresh
    BES_0(3).  Paths are cut at ``length``, where e^{-gamma R} is negligible.
    A nonzero ``level`` shifts everything: f = level + (path above).
    """
    lev = np.broadcast_to(np.asarray(level, dtype=float), np.shape(y))
    y = np.asarray(y, dtype=float) - lev
    hit = np.asarray(hit, dtype=bool)
    n = y.size
    r1, r2 = rng.spawn(2)
    out = np.empty(n)
    fwd, _ = bes3_paths(np.where(hit, y, 0.0), length, dt, r1, n)
    la = _log_trapz_exp(-gamma * fwd, dt)
    out[:] = la
    nh = ~hit
    if nh.any():
        rev, _ = bes3_paths(0.0, length, dt, r2, n)
        above = rev > y[:, None]
        # last passage at y: everything after the final time the path is <= y is dropped
        last = rev.shape[1] - 1 - np.argmax((~above)[:, ::-1], axis=1)
        keep = np.arange(rev.shape[1])[None, :] <= last[:, None]
        lr = _log_trapz_exp(-gamma * rev, dt, keep)
        out = np.where(nh, np.logaddexp(la, lr), la)
    return math.log(2 * math.pi) + out - gamma * lev


def functional_F(inp: FunctionalFInput, params: LiouvilleParams, lattice: CylinderLattice | None, rng) -> float:
    """One realisation of F_{a1,a2}(u, f) for the given path f (fresh field noise from ``rng``).

    Beyond the lattice the supplied path is integrated against the mean
    lateral mass 2 pi; the path must cover the lattice window.
    """
    lat = lattice or default_f_lattice()
    vals = np.asarray(inp.f.values, dtype=float)
    if vals.ndim != 1:
        raise DomainError("functional_F takes a single path")
    batch = sample_batch(lat, rng, 1)
    k0 = int(math.ceil(lat.s_max / inp.f.dt - 1e-9))
    far = None
    if k0 < vals.size - 1:
        far = math.log(2 * math.pi) + _log_trapz_exp(-params.gamma * vals[None, k0:], inp.f.dt)
    lf = log_functional_F(batch, params, inp.a1, inp.a2, np.array([inp.u]), vals[None, :], inp.f.dt, far_log=far)
    return float(np.exp(lf[0]))


def sample_exp(rate: float, rng, n: int):
    """Exp(rate) by inversion."""
    if not rate > 0:
        raise DomainError("exponential rate must be positive")
    return -np.log1p(-rng.random(n)) / rate


def sample_gamma2(rate: float, rng, n: int):
    """Gamma(2, rate) as a sum of two exponentials."""
    return sample_exp(rate, rng, n) + sample_exp(rate, rng, n)


def log_F_paths(a1, a2, u, level, params, lattice, rng, path_dt=F_PATH_DT):
    """log F_{a1,a2}(u, f) with f = BM from u down to ``level``, then level + BES_0(3).

    level = 0 gives the conditioned Bessel process beta~^u; level = u * U with U
    uniform gives BES_u(3) (Williams decomposition, minimum u * U).
    """
    r_path, r_far, r_field = rng.spawn(3)
    n = np.size(u)
    end = lattice.s_max
    vals, h, tau = _bm_then_bes(u, level, end, path_dt, r_path, n)
    far = far_field_log_mass(vals[:, -1], tau <= end, params.gamma, r_far, level=level)
    batch = sample_batch(lattice, r_field, n)
    return log_functional_F(batch, params, a1, a2, u, vals, h, far_log=far)


def log_F_bessel(a1, a2, rate, params, lattice, rng, n, path_dt=F_PATH_DT, u_law: str = "exp"):
    """log F_{a1,a2}(u, beta~^u) with u ~ Exp(rate) (or Gamma(2, rate)) and beta~^u a conditioned BES(3)."""
    r_u, r_rest = rng.spawn(2)
    u = sample_exp(rate, r_u, n) if u_law == "exp" else sample_gamma2(rate, r_u, n)
    return log_F_paths(a1, a2, u, np.zeros(n), params, lattice, r_rest, path_dt)


def log_F_heavy(a1, a2, drift, params, lattice, rng, n, remark_form: bool = False):
    """log F_{a1,a2}(0, -B^{-drift}) (heavy branch), optionally through the plane rewriting."""
    batch = sample_batch(lattice, rng, n)
    if remark_form:
        return _log_heavy_remark(batch, params, a1, a2, drift)
    g, q = params.gamma, params.q
    s = lattice.s
    rad = batch.radial + np.where(s <= 0, -(q - a2) * np.abs(s), -drift * s)[None, :]
    S, T = np.meshgrid(s, lattice.theta, indexing="ij")
    tot = bulk_log_mass(batch, g, rad, a1 * truncated_lateral_cov(S, T, lattice.n_modes))
    left = dufresne_log_tail_u(g * (batch.edges[:, 0] - (q - a2) * abs(lattice.s_min)), q - a2, g, batch.tail_u[:, 0])
    right = dufresne_log_tail_u(g * (batch.edges[:, 1] - drift * lattice.s_max), drift, g, batch.tail_u[:, 1])
    return np.logaddexp(tot, np.logaddexp(left, right))


def _remark_exponent(s, g, kappa, a_sum, a_lat):
    """Deterministic part of the Remark's plane integrand in cylinder coordinates (including dM)."""
    s = np.asarray(s, dtype=float)
    return ((kappa + 1) * g * g * np.maximum(s, 0.0) + (4 - g * a_sum) * s
            - g * a_lat * np.maximum(-s, 0.0) - 0.5 * g * g * np.abs(s) - 2 * s)


def _log_heavy_remark(batch, params, a_lat, a_left, drift):
    """Heavy-branch constant as the plane integral of the Remark,

        int |x^-1|_+^{(kappa+1) g^2} dM(x) / (|x|^{4 - g(a1+a2)} |x-1|^{g a2}),

    written cell by cell with x = e^{-s - i theta}: dM = e^{g B_s - g^2|s|/2 - 2 s} dM_lateral and
    |x - 1|^{-g a2} = e^{g a2 (G(1, x) - log|x|_+)}, G(1, x) the lattice Green function.
    Arguments follow F_{a_lat, a_left}: a_lat = alpha2, a_left = alpha1.
    """
    g, q = params.gamma, params.q
    lat = batch.lattice
    s = lat.s
    a_sum = a_lat + a_left
    kappa = (a_sum - q - drift) / g  # drift = a1 + a2 - Q - kappa g
    det = _remark_exponent(s, g, kappa, a_sum, a_lat)
    S, T = np.meshgrid(s, lat.theta, indexing="ij")
    green1 = truncated_lateral_cov(S, T, lat.n_modes)  # the radial part of G(1, x) vanishes
    lw = (g * batch.radial[:, :, None] + det[None, :, None] + g * a_lat * green1[None]
          + g * batch.lateral - 0.5 * g * g * batch.var_diag + math.log(lat.cell_area))
    tot = sps.logsumexp(lw.reshape(batch.n, -1), axis=1)
    e_lo, e_hi = _remark_exponent([lat.s_min, lat.s_max], g, kappa, a_sum, a_lat)
    # decay rates (field units) of the deterministic exponent on either side
    c_left = -float(_remark_exponent(-1.0, g, kappa, a_sum, a_lat)) / g
    c_right = -float(_remark_exponent(1.0, g, kappa, a_sum, a_lat)) / g
    left = dufresne_log_tail_u(g * batch.edges[:, 0] + e_lo, c_left, g, batch.tail_u[:, 0])
    right = dufresne_log_tail_u(g * batch.edges[:, 1] + e_hi, c_right, g, batch.tail_u[:, 1])
    return np.logaddexp(tot, np.logaddexp(left, right))


def bessel_prefactors(lam: float, kappa: float, gamma: float) -> dict:
    """Deterministic prefactors of the Bessel representation.

    Branches (i)/(iii): sqrt(2/pi) / (kappa gamma).  Branch (ii):
    sqrt(2/pi) B(lam/g, kappa - lam/g) / (g lam (kappa g - lam)), whose Beta factor
    (lam/g) B(lam/g, kappa - lam/g) tends to 1 as lam -> 0 (and symmetrically as
    lam -> kappa g), so that lam^2 (kappa g - lam) * (ii) -> kappa g * (i).
    """
    c = math.sqrt(2.0 / math.pi)
    out = {"critical": c / (kappa * gamma), "boundary": c / (kappa * gamma)}
    if 0 < lam < kappa * gamma:
        a, b = lam / gamma, kappa - lam / gamma
        beta = math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
        out["intermediate"] = c * beta / (gamma * lam * (kappa * gamma - lam))
        out["beta_factor_left"] = a * beta
        out["beta_factor_right"] = b * beta
    return out


def limit_constant_bessel(momenta, kappa: float, params: LiouvilleParams, mc: MCConfig,
                          lattice: CylinderLattice | None = None, branch: str | None = None,
                          path_dt: float = F_PATH_DT,
                          heavy_form: str = "cylinder") -> MomentEstimate:
    """E_kappa from the Bessel-process representation, dispatched on the rate-function branch."""
    a1, a2, a3, a4 = (float(a) for a in momenta)
    g, q = params.gamma, params.q
    for a in (a1, a2, a3, a4):
        if not 0 <= a < q:
            raise SeibergError(f"momentum {a} outside [0, Q)")
    spec = RateSpec(a1 + a2, kappa, g)
    br = spec.branch
    if branch is not None and branch != br.value:
        raise BranchError(f"requested branch {branch!r} but parameters select {br.value!r}")
    if br is Branch.SUBCRITICAL:
        raise BranchError("the Bessel representation needs a1 + a2 >= Q")
    lam = a1 + a2 - q
    lat = lattice or default_f_lattice()
    pf = bessel_prefactors(lam, kappa, g)
    cfg = {"op": "limit_constant_bessel", "momenta": (a1, a2, a3, a4), "kappa": kappa, "gamma": g,
           "mu": params.mu, "branch": br.value, "lattice": _lattice_dict(lat), "path_dt": path_dt, "mc": mc.describe(), "heavy_form": heavy_form}
    digest = config_digest(cfg)

    def moment(a_lat, a_left, rate, order, label):
        def fn(rng, size):
            return np.exp(-order * log_F_bessel(a_lat, a_left, rate, params, lat, rng, size, path_dt))
        return mean_estimate(run_chunked(fn, mc, label), mc.seed)

    extra = {"branch": br.value, "lambda": lam, "prefactors": pf}
    if br is Branch.CRITICAL:
        m = moment(a3, a4, kappa * g, kappa, "bessel_left")
        est = m.scaled(pf["critical"])
        extra["moment"] = m.as_dict()
    elif br is Branch.BOUNDARY:
        m = moment(a2, a1, kappa * g, kappa, "bessel_right")
        est = m.scaled(pf["boundary"])
        extra["moment"] = m.as_dict()
    elif br is Branch.INTERMEDIATE:
        ml = moment(a3, a4, kappa * g - lam, kappa - lam / g, "bessel_left")
        mr = moment(a2, a1, lam, lam / g, "bessel_right")
        v = pf["intermediate"] * ml.value * mr.value
        se = pf["intermediate"] * math.hypot(ml.stderr * mr.value, mr.stderr * ml.value)
        est = MomentEstimate(v, se, ml.n)
        extra["moment_left"], extra["moment_right"] = ml.as_dict(), mr.as_dict()
    else:
        d = lam - kappa * g
        remark = heavy_form == "remark"

        def fn(rng, size):
            return np.exp(-kappa * log_F_heavy(a2, a1, d, params, lat, rng, size, remark_form=remark))

        est = mean_estimate(run_chunked(fn, mc, "bessel_heavy"), mc.seed)
        extra["drift"] = -d
    est.seed, est.digest, est.extra = mc.seed, digest, extra
    return est


# ---------------------------------------------------------------------------
# discrete-barrier series


def series_partial_sums(momenta, kappa: float, params: LiouvilleParams, h: float, N: int, mc: MCConfig,
                        lattice: CylinderLattice | None = None, mode: str = "conditioned") -> dict:
    """Partial sums of the discrete-barrier series representation of E_kappa.

    Terms n = 1..N of
      (i)   sqrt(2/pi) nh e^{-kappa g nh} E[F_{a3,a4}(nh, beta^{nh})^-kappa 1{min beta <= h}]
      (ii)  sqrt(2/pi) nh e^{-(kappa g - lam) nh} / lam^2
              E[1{min beta_L <= h} u {min beta_R <= h} (F_{a3,a4}(nh, beta_L) + F'_{a2,a1}(T, beta_R))^-kappa]
      (iii) as (i) with F_{a2,a1},
    beta^x a BES_x(3) built by the Williams decomposition, whose future minimum
    is x U with U uniform.  mode="indicator" samples U on (0, 1) and applies the
    indicator to the sampled minimum; mode="conditioned" samples U given the
    event and multiplies by its probability (same expectation, lower variance).
    In (ii), T ~ Gamma(2, lam) and the union is split by inclusion-exclusion.
    """
    if mode not in ("conditioned", "indicator"):
        raise DomainError(f"unknown mode {mode!r}")
    if not (h > 0 and N >= 1):
        raise DomainError("need h > 0 and N >= 1")
    a1, a2, a3, a4 = (float(a) for a in momenta)
    g, q = params.gamma, params.q
    lam = a1 + a2 - q
    br = RateSpec(a1 + a2, kappa, g).branch
    if br not in (Branch.CRITICAL, Branch.INTERMEDIATE, Branch.BOUNDARY):
        raise BranchError("the series representation needs 0 <= a1 + a2 - Q <= kappa gamma")
    lat = lattice or default_f_lattice()
    c = math.sqrt(2.0 / math.pi)

    def bes_min(x, rng, size, cond):
        """Minimum level x U of BES_x(3) and the weight of the event {min <= h}."""
        x = np.broadcast_to(np.asarray(x, dtype=float), (size,))
        p = np.minimum(1.0, h / x)
        if mode == "conditioned" and cond:
            return x * p * rng.random(size), p
        lev = x * rng.random(size)
        return lev, (lev <= h).astype(float)

    def side(a_lat, a_left, x, rng, size, cond):
        x = np.broadcast_to(np.asarray(x, dtype=float), (size,))
        r_min, r_f = rng.spawn(2)
        lev, w = bes_min(x, r_min, size, cond)
        return log_F_paths(a_lat, a_left, x, lev, params, lat, r_f), w

    terms, errs = [], []
    for n in range(1, N + 1):
        x = n * h
        if br is not Branch.INTERMEDIATE:
            a_lat, a_left = (a3, a4) if br is Branch.CRITICAL else (a2, a1)

            def fn(rng, size, a_lat=a_lat, a_left=a_left, x=x):
                lf, w = side(a_lat, a_left, x, rng, size, True)
                return w * np.exp(-kappa * lf)

            m = mean_estimate(run_chunked(fn, mc, f"series_{n}"))
            pref = c * x * math.exp(-kappa * g * x)
        else:

            def fn(rng, size, x=x):
                r_t, r_a, r_b, r_ab = rng.spawn(4)
                big_t = sample_gamma2(lam, r_t, size)
                parts = []
                for r, cond_l, cond_r in ((r_a, True, False), (r_b, False, True), (r_ab, True, True)):
                    r1, r2 = r.spawn(2)
                    lf_l, w_l = side(a3, a4, x, r1, size, cond_l)
                    lf_r, w_r = side(a2, a1, big_t, r2, size, cond_r)
                    ind_l = w_l if cond_l else 1.0
                    ind_r = w_r if cond_r else 1.0
                    parts.append(ind_l * ind_r * np.exp(-kappa * np.logaddexp(lf_l, lf_r)))
                return parts[0] + parts[1] - parts[2]

            m = mean_estimate(run_chunked(fn, mc, f"series_{n}"))
            pref = c * x * math.exp(-(kappa * g - lam) * x) / lam**2
        terms.append(pref * m.value)
        errs.append(pref * m.stderr)
    terms = np.array(terms)
    errs = np.array(errs)
    partial = np.cumsum(terms)
    return {"branch": br.value, "h": h, "N": N, "mode": mode, "terms": terms.tolist(), "term_stderr": errs.tolist(),
            "partial_sums": partial.tolist(), "stderr": float(np.sqrt(np.sum(errs**2))),
            "decay_rate": (kappa * g - lam) * h if br is Branch.INTERMEDIATE else kappa * g * h}


# ---------------------------------------------------------------------------
# mass splitting


def split_mass(weights, s, t: float, eta: float, tails=(0.0, 0.0)) -> tuple:
    """(L, C, R): chaos mass on s < t^{1/2-eta}, the central band, and s > t - t^{1/2-eta}.

    ``weights`` are cell masses with the s axis first; ``tails`` the masses beyond
    the lattice on the left and right (added to L and R).  When the two windows
    overlap (small t) the overlap is counted in L.
    """
    if not 0 < eta < 0.5:
        raise DomainError("eta must lie in (0, 1/2)")
    w = np.asarray(weights, dtype=float)
    by_s = w.reshape(w.shape[0], -1).sum(axis=1)
    s = np.asarray(s, dtype=float)
    width = t ** (0.5 - eta)
    in_l = s < width
    in_r = (s > t - width) & ~in_l
    L = float(by_s[in_l].sum() + tails[0])
    R = float(by_s[in_r].sum() + tails[1])
    C = float(by_s[~in_l & ~in_r].sum())
    return L, C, R


def split_mass_trend(momenta, params: LiouvilleParams, t_grid=(4.0, 9.0, 16.0, 25.0), eta: float = 0.1,
                     barrier: float = 1.0, mc: MCConfig | None = None, n_theta: int = 32) -> dict:
    """Mean of C/total for the bridge-conditioned mass Z~_t over a t grid.

    Z~_t is Z_t with the radial path on [0, t] replaced by a Brownian bridge
    conditioned to stay below ``barrier`` (rejection on the lattice points).
    """
    if mc is None:
        raise ValidationError("split_mass_trend needs a Monte Carlo configuration")
    a1, a2 = momenta[0], momenta[1]
    lam = a1 + a2 - params.q
    out = []
    for t in t_grid:
        lat = wt_lattice(t, n_theta)
        prof = InsertionProfile.four_point(momenta, t, 0.0, params.q)
        s = lat.s
        inside = (s > 0) & (s < t)

        def fn(rng, size, t=t, lat=lat, prof=prof, s=s, inside=inside):
            b = sample_batch(lat, rng, size, extra=[t])
            bt = b.extra[:, :1]
            rad = b.radial.copy()
            rad[:, inside] -= (s[inside] / t)[None, :] * bt
            rad[:, s >= t] -= bt
            edges = b.edges.copy()
            edges[:, 1] -= bt[:, 0]
            ok = (rad[:, inside] <= barrier).all(axis=1)
            bb = FieldBatch(lat, rad, edges, b.extra, b.lateral, b.var_diag, b.tail_u)
            tot, by_s = profile_log_mass(bb, params, prof, tilt=lam, tilt_t=t, per_s=True)
            ratio = np.empty(size)
            for i in range(size):
                L, C, R = split_mass(np.exp(by_s[i]), s, t, eta)
                ratio[i] = C / np.exp(tot[i])
            return np.where(ok, ratio, np.nan)

        r = run_chunked(fn, mc, f"split_{t}")
        r = r[~np.isnan(r)]
        e = mean_estimate(r)
        out.append({"t": float(t), "c_fraction": e.value, "stderr": e.stderr, "accepted": int(r.size)})
    return {"eta": eta, "barrier": barrier, "per_t": out}


# ---------------------------------------------------------------------------
# beta-moment identity


def _neg_moment_closed(dist, p: float) -> float:
    kind = dist[0]
    if kind == "one":
        return 1.0
    if kind == "lognormal":
        mu, sig = dist[1], dist[2]
        return math.exp(-p * mu + 0.5 * p * p * sig * sig)
    raise DomainError(f"unknown distribution {dist!r}")


def _draw(dist, rng, n):
    if dist[0] == "one":
        return np.ones(n)
    if dist[0] == "lognormal":
        return np.exp(dist[1] + dist[2] * rng.standard_normal(n))
    raise DomainError(f"unknown distribution {dist!r}")


def _parse_dist(d):
    if isinstance(d, str):
        d = (d,)
    d = tuple(d)
    if d[0] not in ("one", "lognormal") or (d[0] == "lognormal" and len(d) != 3):
        raise DomainError(f"distribution must be 'one' or ('lognormal', mu, sigma), got {d!r}")
    return d


def beta_moment_identity_check(dist_x, dist_y, lam: float, kappa: float, params: LiouvilleParams,
                               mc: MCConfig | None = None) -> dict:
    """Compare E[(X + e^{-g T} Y)^-kappa], T ~ Exp(lam), with (lam/g) B(lam/g, kappa - lam/g) E[X^-(kappa-lam/g)] E[Y^-lam/g].

    Deterministic X = Y = 1 uses 1-D quadrature for the left side.  Also
    reported is the two-sided form, which adds (a/b) E[(e^{-g tau} X + Y)^-kappa]
    with tau ~ Exp(kappa g - lam), a = lam/g, b = kappa - a: the substitution
    u = e^{-g T} maps T ~ Exp(lam) onto u in (0, 1) only, and the second term
    supplies u in (1, inf).
    """
    g = params.gamma
    if not 0 < lam < kappa * g:
        raise DomainError("need 0 < lambda < kappa * gamma")
    dx, dy = _parse_dist(dist_x), _parse_dist(dist_y)
    a, b = lam / g, kappa - lam / g
    beta = math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    rhs = a * beta * _neg_moment_closed(dx, b) * _neg_moment_closed(dy, a)
    rep = {"lambda": lam, "kappa": kappa, "gamma": g, "rhs": rhs}
    if dx[0] == "one" and dy[0] == "one":
        lhs = integrate.quad(lambda t: (1 + math.exp(-g * t)) ** -kappa * lam * math.exp(-lam * t), 0, math.inf)[0]
        comp = integrate.quad(lambda t: (math.exp(-g * t) + 1) ** -kappa * (kappa * g - lam)
                              * math.exp(-(kappa * g - lam) * t), 0, math.inf)[0]
        rep.update({"method": "quadrature", "lhs": lhs, "lhs_stderr": 0.0, "rel_diff": abs(lhs - rhs) / rhs,
                    "two_sided_lhs": lhs + a / b * comp})
        rep["two_sided_rel_diff"] = abs(rep["two_sided_lhs"] - rhs) / rhs
        return rep
    if mc is None:
        raise ValidationError("random X or Y needs a Monte Carlo configuration")

    def fn(rng, size):
        rx, ry, rt, rx2, ry2, rt2 = rng.spawn(6)
        x, y = _draw(dx, rx, size), _draw(dy, ry, size)
        t = sample_exp(lam, rt, size)
        x2, y2 = _draw(dx, rx2, size), _draw(dy, ry2, size)
        tau = sample_exp(kappa * g - lam, rt2, size)
        return np.stack([(x + np.exp(-g * t) * y) ** -kappa, (np.exp(-g * tau) * x2 + y2) ** -kappa], axis=1)

    v = run_chunked(fn, mc, "beta_moment")
    lhs = mean_estimate(v[:, 0], mc.seed)
    two = mean_estimate(v[:, 0] + a / b * v[:, 1], mc.seed)
    rep.update({"method": "monte_carlo", "lhs": lhs.value, "lhs_stderr": lhs.stderr,
                "z_score": (lhs.value - rhs) / lhs.stderr if lhs.stderr > 0 else math.inf,
                "rel_diff": abs(lhs.value - rhs) / rhs, "two_sided_lhs": two.value,
                "two_sided_stderr": two.stderr,
                "two_sided_z": (two.value - rhs) / two.stderr if two.stderr > 0 else math.inf})
    return rep


# ---------------------------------------------------------------------------
# DOZZ oracle for the limit constant


def dozz_limit_constant(momenta, params: LiouvilleParams) -> dict:
    """E_kappa at the Liouville value kappa = Q sigma / gamma from the four-point asymptotics.

    Supercritical: d3C(a1, a2, Q) d1C(Q, a3, a4) / (4 sqrt(2 pi) P);
    critical: -d1C(Q, a3, a4) / (sqrt(2 pi) P), P = 2/g mu^-kappa Gamma(kappa),
    with the rate function carrying t^{-3/2} resp. t^{-1/2}.
    """
    a1, a2, a3, a4 = (float(a) for a in momenta)
    q = params.q
    kappa = correlation_kappa(momenta, params)
    if not kappa > 0:
        raise SeibergError("need sum of momenta > 2Q")
    pref = math.exp(log_correlation_prefactor(momenta, params))
    lam = a1 + a2 - q
    if abs(lam) < 1e-12:
        val = -d_dozz_at_q(a3, a4, params) / (math.sqrt(2 * math.pi) * pref)
        br = "critical"
    elif lam > 0:
        val = d_dozz_at_q(a1, a2, params) * d_dozz_at_q(a3, a4, params) / (4 * math.sqrt(2 * math.pi) * pref)
        br = "intermediate"
    else:
        raise BranchError("the DOZZ limit constant applies to a1 + a2 >= Q")
    return {"value": val, "kappa": kappa, "branch": br, "prefactor": pref}


# ---------------------------------------------------------------------------
# chaos normalisation


def region_chaos_mass(params: LiouvilleParams, mc: MCConfig, s_range=(0.0, 2.0), lattice: CylinderLattice | None = None,
                      label: str = "region_mass") -> MomentEstimate:
    """Mass of the unweighted chaos e^{gamma X - gamma^2 E[X^2]/2} ds dtheta over s_range x [0, 2 pi).

    Its mean is the area of the region for any lattice.
    """
    lo, hi = (float(v) for v in s_range)
    lat = lattice or CylinderLattice.window(max(abs(lo), abs(hi)), n_theta=32, buffer=1.0)
    s = lat.s
    mask = (s >= lo) & (s < hi)
    if not mask.any():
        raise DomainError("region contains no lattice cells")
    g = params.gamma
    area = float(mask.sum()) * lat.cell_area * lat.n_theta
    zero = np.zeros((lat.n_s, lat.n_theta))
    cfg = {"op": "region_chaos_mass", "gamma": g, "s_range": [lo, hi], "lattice": _lattice_dict(lat), "mc": mc.describe()}

    def fn(rng, size):
        b = sample_batch(lat, rng, size)
        rad = b.radial - 0.5 * g * np.abs(s)[None, :]
        return np.exp(bulk_log_mass(b, g, rad, zero, mask=mask))

    est = mean_estimate(run_chunked(fn, mc, label), mc.seed, config_digest(cfg))
    est.extra = {"area": area, "cells": int(mask.sum()) * lat.n_theta, "lattice": _lattice_dict(lat)}
    return est
