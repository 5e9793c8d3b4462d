"""Quadrature-side checks: bootstrap limit, the P -> 0 DOZZ product, KPZ
density and disc mass, and the normalisation identity.

Blocks are fixed to 1.  DOZZ factors with an argument on the strip edge go
through the quadratic small-argument Upsilon expansion (the evaluator's
default boundary method); the exact shift relation is used only to report the
expansion error.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate
from scipy import special as sps

from .estimators import BranchError, correlation_kappa, four_point_grid_mc
from .kernels import BRANCH_TOL, DomainError, LiouvilleParams, RateSpec, log_rate_function
from .montecarlo import MCConfig, config_digest
from .special import d_dozz_at_q, d_dozz_at_q_third, dozz, dozz_reduced

SQRT_2PI = math.sqrt(2.0 * math.pi)


def gauss_hermite(n: int):
    """Nodes and weights for int f(P) e^{-P^2/2} dP."""
    if n < 2 or n % 2:
        raise DomainError("use an even number of Gauss-Hermite nodes (P = 0 is a pole in the critical case)")
    return hermite_e.hermegauss(n)


def gaussian_moment(k: int, n: int = 40) -> float:
    """int P^{2k} e^{-P^2/2} dP by the quadrature rule; equals sqrt(2 pi) (2k-1)!!."""
    x, w = gauss_hermite(n)
    return float(np.sum(w * x ** (2 * k)))


# ---------------------------------------------------------------------------
# bootstrap integral


def _bootstrap_case(momenta, q, tol=BRANCH_TOL):
    a1, a2, a3, a4 = momenta
    if not a3 + a4 > q:
        raise BranchError("need a3 + a4 > Q")
    d = a1 + a2 - q
    if abs(d) < tol:
        return "critical"
    if d > 0:
        return "supercritical"
    raise BranchError("a1 + a2 < Q: the bootstrap equation needs discrete corrections there")


def bootstrap_integrand(momenta, params: LiouvilleParams, eps, boundary: str = "expansion"):
    """C(a1, a2, Q - i eps) C(Q + i eps, a3, a4) for an array of eps."""
    a1, a2, a3, a4 = momenta
    q = params.q
    out = np.empty(np.shape(eps), dtype=complex)
    for i, e in np.ndenumerate(np.asarray(eps, dtype=float)):
        out[i] = complex(dozz(a1, a2, q - 1j * e, params, boundary)) * complex(dozz(q + 1j * e, a3, a4, params, boundary))
    return out


def bootstrap_integral(momenta, params: LiouvilleParams, t: float, n_nodes: int = 48, boundary: str = "expansion"):
    """t^{-1/2} int e^{-P^2/2} C(a1,a2,Q-iP/sqrt t) C(Q+iP/sqrt t,a3,a4) dP with t = log 1/|z|.

    Only P >= 0 nodes are evaluated; the -P values are the complex conjugates.
    """
    x, w = gauss_hermite(n_nodes)
    pos = x > 0
    vals = bootstrap_integrand(momenta, params, x[pos] / math.sqrt(t), boundary)
    return float(2.0 * np.sum(w[pos] * vals.real)) / math.sqrt(t)


def bootstrap_target(momenta, params: LiouvilleParams, case: str) -> float:
    a1, a2, a3, a4 = momenta
    d1 = d_dozz_at_q(a3, a4, params)
    if case == "supercritical":
        return SQRT_2PI * d_dozz_at_q_third(a1, a2, params) * d1
    return -4.0 * SQRT_2PI * d1


def bootstrap_limit_quadrature(momenta, params: LiouvilleParams, z_moduli, n_nodes: int = 48) -> dict:
    """Rescaled bootstrap integral along a |z| ladder and its ratio to the derivative-DOZZ limit.

    Supercritical: t^{3/2} I(t) -> sqrt(2 pi) d3C(a1,a2,Q) d1C(Q,a3,a4).
    Critical: t^{1/2} I(t) -> -4 sqrt(2 pi) d1C(Q,a3,a4).
    """
    momenta = tuple(float(a) for a in momenta)
    case = _bootstrap_case(momenta, params.q)
    power = 1.5 if case == "supercritical" else 0.5
    target = bootstrap_target(momenta, params, case)
    rows = []
    for r in z_moduli:
        if not 0 < r < 1:
            raise DomainError("|z| must lie in (0, 1)")
        t = -math.log(r)
        val = bootstrap_integral(momenta, params, t, n_nodes)
        alt = bootstrap_integral(momenta, params, t, n_nodes, boundary="shift")
        scaled = t**power * val
        rows.append({"z_modulus": r, "t": t, "integral": val, "scaled": scaled, "ratio": scaled / target,
                     "expansion_error": abs(t**power * (val - alt) / target)})
    dev = [abs(row["ratio"] - 1.0) for row in rows]
    return {"case": case, "power": power, "target": target, "rows": rows,
            "monotone": bool(all(b <= a for a, b in zip(dev, dev[1:]))), "n_nodes": n_nodes}


# ---------------------------------------------------------------------------
# P -> 0 product (critical case)


def dozz_product_limit(a1, a3, a4, params: LiouvilleParams, p_ladder=(1e-2, 3e-3, 1e-3), p_cap: float = 0.05) -> dict:
    """Reduced product Cbar(a1, Q-a1, Q-iP) Cbar(Q+iP, a3, a4) along a P ladder.

    The modulus is compared with 4 |d1 Cbar(Q, a3, a4)|; the sign relative to
    d1 Cbar is reported separately since the two displays of the limit differ.
    """
    q = params.q
    if not 0 < a1 < q:
        raise DomainError("need 0 < a1 < Q so that a2 = Q - a1 is a valid momentum")
    ps = [float(p) for p in p_ladder]
    if any(not 0 < abs(p) <= p_cap for p in ps):
        raise DomainError(f"P ladder must satisfy 0 < |P| <= {p_cap} (expansion error budget)")
    d1 = d_dozz_at_q(a3, a4, params, reduced=True)
    target = 4.0 * abs(d1)
    ev_d = {}
    rows = []
    for p in ps:
        left = complex(dozz_reduced(a1, q - a1, q - 1j * p, params))
        right = complex(dozz_reduced(q + 1j * p, a3, a4, params))
        val = left * right
        left_m = complex(dozz_reduced(a1, q - a1, q + 1j * p, params))
        right_m = complex(dozz_reduced(q - 1j * p, a3, a4, params))
        val_m = left_m * right_m
        full = complex(dozz(a1, q - a1, q - 1j * p, params)) * complex(dozz(q + 1j * p, a3, a4, params))
        rows.append({
            "P": p,
            "value": [val.real, val.imag],
            "modulus": abs(val),
            "rel_err": abs(abs(val) / target - 1.0),
            "pole_ratio": [(p * left / 4j).real, (p * left / 4j).imag],
            "conjugation_gap": abs(val_m - val.conjugate()),
            "signed_ratio": val.real / (4.0 * d1),
            "full_modulus": abs(full),
        })
    ev_d["d1_reduced"] = d1
    ev_d["d1_full"] = d_dozz_at_q(a3, a4, params)
    ordered = sorted(rows, key=lambda r: -r["P"])
    lp = np.log([r["P"] for r in ordered])
    le = np.log([max(r["rel_err"], 1e-300) for r in ordered])
    slope = float(np.polyfit(lp, le, 1)[0]) if len(ordered) >= 2 else math.nan
    sign = int(np.sign(rows[-1]["signed_ratio"]))
    return {"a1": a1, "a2": q - a1, "a3": a3, "a4": a4, "target_modulus": target, "rows": rows,
            "rate_slope": slope, "observed_sign": sign,
            "sign_note": "limit equals %s4 d1C; the two printed forms disagree on this sign" % ("-" if sign < 0 else "+"),
            **ev_d}


# ---------------------------------------------------------------------------
# KPZ


def kpz_exponent(gamma_squared) -> Fraction:
    """Q^2/2 - 2 = gamma^2/8 + 2/gamma^2 - 1 in exact rational arithmetic."""
    g2 = Fraction(gamma_squared)
    if not 0 < g2 < 4:
        raise DomainError("need 0 < gamma^2 < 4")
    return g2 / 8 + 2 / g2 - 1


def _kpz_check(params: LiouvilleParams):
    g = params.gamma
    if not g > math.sqrt(2.0):
        raise DomainError(f"gamma = {g:.6g} <= sqrt 2: (gamma, gamma, gamma) violates the Seiberg bound and 3 gamma - 2Q <= 0")


def _kpz_constant(params: LiouvilleParams) -> float:
    """mu gamma / (3 gamma - 2Q) (d3C(gamma, gamma, Q))^2 / C(gamma, gamma, gamma)."""
    g, q = params.gamma, params.q
    d3 = d_dozz_at_q_third(g, g, params)
    return params.mu * g / (3 * g - 2 * q) * d3 * d3 / dozz(g, g, g, params)


def kpz_density(z, params: LiouvilleParams, mc: MCConfig | None = None, form: str = "mc"):
    """f(z) = mu gamma/(3 gamma - 2Q) <V_g(0) V_g(z) V_g(1) V_g(inf)> / C(g, g, g).

    ``form="mc"`` estimates the four-point function (returns (value, stderr));
    ``form="asymptotic"`` uses the small-z display with the log^{-3/2} law.
    """
    _kpz_check(params)
    g, q = params.gamma, params.q
    z = complex(z)
    if form == "asymptotic":
        r = abs(z)
        if not 0 < r < 1:
            raise DomainError("asymptotic density needs 0 < |z| < 1")
        L = -math.log(r)
        return _kpz_constant(params) / (2 * SQRT_2PI) * r ** (q * q / 2 - 4) * L**-1.5
    if form != "mc":
        raise DomainError(f"unknown form {form!r}")
    if mc is None:
        raise DomainError("form='mc' needs an MC configuration")
    val, se = four_point_grid_mc([z], (g, g, g, g), params, mc, label="kpz_density")
    norm = params.mu * g / (3 * g - 2 * q) / dozz(g, g, g, params)
    return float(val[0] * norm), float(se[0] * norm)


def radial_integral(eps: float, a: float) -> float:
    """int_0^eps r^{a-1} log^{-3/2}(1/r) dr = a^{1/2} Gamma(-1/2, a log 1/eps), in closed form."""
    if not (0 < eps < 1 and a > 0):
        raise DomainError("need 0 < eps < 1 and a > 0")
    x = a * -math.log(eps)
    # Gamma(-1/2, x) = 2 (e^{-x}/sqrt x - sqrt(pi) erfc(sqrt x))
    g = 2.0 * (math.exp(-x) / math.sqrt(x) - math.sqrt(math.pi) * sps.erfc(math.sqrt(x)))
    return math.sqrt(a) * g


def radial_integral_quad(eps: float, a: float) -> float:
    """Same integral by adaptive quadrature in u = log 1/r."""
    L = -math.log(eps)
    val, _ = integrate.quad(lambda u: math.exp(-a * u) * u**-1.5, L, math.inf, epsabs=0, epsrel=1e-12, limit=200)
    return val


def radial_integral_check(eps: float, params: LiouvilleParams) -> dict:
    a = params.q**2 / 2 - 2
    L = -math.log(eps)
    quad = radial_integral_quad(eps, a)
    display = 2.0 * eps**a / math.sqrt(L)
    large_x = eps**a / (a * L**1.5)
    return {"eps": eps, "a": a, "a_log": a * L, "quadrature": quad, "closed_form": radial_integral(eps, a),
            "display_asymptotic": display, "display_rel_err": abs(display / quad - 1.0),
            "large_argument_asymptotic": large_x, "large_argument_rel_err": abs(large_x / quad - 1.0)}


def disc_mass(eps: float, params: LiouvilleParams, form: str = "display") -> float:
    """Expected mass fraction of the disc |z| <= eps under the asymptotic density.

    ``display`` is sqrt(2 pi) K eps^{Q^2/2-2} / sqrt(log 1/eps); ``exact``
    integrates the asymptotic density over the disc.
    """
    _kpz_check(params)
    if not 0 < eps < 0.5:
        raise DomainError("need 0 < eps < 1/2")
    k = _kpz_constant(params)
    a = params.q**2 / 2 - 2
    if form == "display":
        return SQRT_2PI * k * eps**a / math.sqrt(-math.log(eps))
    if form == "exact":
        # 2 pi int_0^eps r f(r) dr with f the asymptotic density
        return 2 * math.pi * k / (2 * SQRT_2PI) * radial_integral(eps, a)
    raise DomainError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# normalisation identity


def mu_derivative_identity(momenta, params: LiouvilleParams, h: float = 0.5) -> dict:
    """Check C(mu) = mu^{-Q sigma/gamma} C(1) on the implementation, hence -dC/dmu = Q sigma/(gamma mu) C."""
    a1, a2, a3 = momenta
    q, g = params.q, params.gamma
    qs = sum(momenta) - 2 * q
    c = dozz(a1, a2, a3, params)
    c1 = dozz(a1, a2, a3, LiouvilleParams(g, 1.0))
    c2 = dozz(a1, a2, a3, LiouvilleParams(g, params.mu * (1 + h)))
    scale_err = abs(c / (c1 * params.mu ** (-qs / g)) - 1.0)
    law_err = abs(c2 / (c * (1 + h) ** (-qs / g)) - 1.0)
    return {"q_sigma": qs, "derivative": qs / (g * params.mu) * c, "scaling_error": max(scale_err, law_err)}


def _local_log_model_u(u, alpha_i, momenta4, params):
    """log of |z - z_i|^{-gamma alpha_i} I(|z - z_i|) at |z - z_i| = e^{-u}, fused rate of (alpha_i, gamma)."""
    g = params.gamma
    spec = RateSpec(alpha_i + g, correlation_kappa(momenta4, params), g)
    return g * alpha_i * u + log_rate_function(spec, params, u, "corrected")


def _model_integral(rho, alpha_i, momenta4, params, near_one: bool):
    """int of the local model over |z - z_i| < rho inside the unit disc.

    Around 0 the whole disc counts; around 1 the circle of radius r meets the
    unit disc in an arc of angle 2 arccos(r/2).
    """
    def f(u):  # u = log 1/r
        ang = 2.0 * math.acos(math.exp(-u) / 2.0) if near_one else 2.0 * math.pi
        return ang * math.exp(_local_log_model_u(u, alpha_i, momenta4, params) - 2.0 * u)
    val, _ = integrate.quad(f, -math.log(rho), math.inf, limit=400)
    return val


def _outside_fraction(r_edges, p_edges, rho1, n_sub=16):
    """Area fraction of each polar cell lying outside |z - 1| < rho1."""
    out = np.empty((len(r_edges) - 1, len(p_edges) - 1))
    u = (np.arange(n_sub) + 0.5) / n_sub
    for i in range(len(r_edges) - 1):
        rs = r_edges[i] + (r_edges[i + 1] - r_edges[i]) * u
        for j in range(len(p_edges) - 1):
            ps = p_edges[j] + (p_edges[j + 1] - p_edges[j]) * u
            R, P = np.meshgrid(rs, ps, indexing="ij")
            inside = np.abs(R * np.exp(1j * P) - 1.0) < rho1
            out[i, j] = np.sum(R * ~inside) / np.sum(R)
    return out


def normalization_identity_check(momenta, params: LiouvilleParams, mc: MCConfig, n_r: int = 8, n_phi: int = 10,
                                 rho0: float = 0.1, rho1: float = 0.15, n_ring: int = 4) -> dict:
    """int <V_gamma(z) V_a1(0) V_a2(1) V_a3(inf)> d^2z against (Q sigma/(gamma mu)) C(a1, a2, a3).

    The region |z| > 1 is folded into the unit disc by z -> 1/z (V_gamma has
    weight one, so the Jacobian cancels and a1, a3 swap).  On each half the
    integrand is sampled at polar midpoints of [rho0, 1] x [0, pi]
    (conjugation symmetry doubles it), with cell areas cut down to the part
    outside |z - 1| < rho1.  The disc |z| < rho0 and the region
    |z - 1| < rho1 use the local model |z - z_i|^{-gamma a_i} I(|z - z_i|),
    with the amplitude averaged over a ring of points at distance rho.
    """
    a1, a2, a3 = (float(a) for a in momenta)
    g = params.gamma
    ident = mu_derivative_identity((a1, a2, a3), params)
    rhs = ident["derivative"]
    r_edges = np.linspace(rho0, 1.0, n_r + 1)
    p_edges = np.linspace(0.0, math.pi, n_phi + 1)
    rc = 0.5 * (r_edges[1:] + r_edges[:-1])
    pc = 0.5 * (p_edges[1:] + p_edges[:-1])
    R, P = np.meshgrid(rc, pc, indexing="ij")
    area = 2.0 * (0.5 * (r_edges[1:] ** 2 - r_edges[:-1] ** 2))[:, None] * np.diff(p_edges)[None, :]
    area = (area * _outside_fraction(r_edges, p_edges, rho1)).ravel()
    grid = list((R * np.exp(1j * P)).ravel())
    ang = (np.arange(n_ring) + 0.5) / n_ring
    ring0 = list(rho0 * np.exp(1j * math.pi * ang))
    psi_max = math.acos(rho1 / 2.0)
    ring1 = list(1.0 - rho1 * np.exp(-1j * psi_max * ang))
    zs = grid + ring0 + ring1
    ng = len(grid)
    halves = {}
    for name, m4 in (("inner", (a1, g, a2, a3)), ("outer", (a3, g, a2, a1))):
        vals, ses = four_point_grid_mc(zs, m4, params, mc, label=f"normalization_{name}")
        regular = float(np.sum(area * vals[:ng]))
        regular_se = float(math.sqrt(np.sum((area * ses[:ng]) ** 2)))
        parts = {}
        for key, sl, ai, d, near_one in (("singular_0", slice(ng, ng + n_ring), m4[0], rho0, False),
                                        ("singular_1", slice(ng + n_ring, None), a2, rho1, True)):
            m_ref = math.exp(_local_log_model_u(-math.log(d), ai, m4, params))
            amp = float(np.mean(vals[sl])) / m_ref
            amp_se = float(math.sqrt(np.sum(ses[sl] ** 2))) / len(ses[sl]) / m_ref
            mi = _model_integral(d, ai, m4, params, near_one)
            parts[key] = (amp * mi, amp_se * mi)
        halves[name] = {"regular": regular, "regular_stderr": regular_se,
                        "singular_0": parts["singular_0"][0], "singular_1": parts["singular_1"][0],
                        "singular_stderr": math.hypot(parts["singular_0"][1], parts["singular_1"][1])}
    lhs = sum(h["regular"] + h["singular_0"] + h["singular_1"] for h in halves.values())
    lhs_se = math.sqrt(sum(h["regular_stderr"] ** 2 + h["singular_stderr"] ** 2 for h in halves.values()))
    singular = sum(h["singular_0"] + h["singular_1"] for h in halves.values())
    cfg = {"op": "normalization_identity_check", "momenta": [a1, a2, a3], "gamma": g, "mu": params.mu,
           "grid": [n_r, n_phi, rho0, rho1, n_ring], "mc": mc.describe()}
    return {"lhs": lhs, "lhs_stderr": lhs_se, "rhs": rhs, "rel_diff": lhs / rhs - 1.0,
            "singular_fraction": singular / lhs, "halves": halves, "q_sigma": ident["q_sigma"],
            "scaling_error": ident["scaling_error"], "digest": config_digest(cfg), "seed": mc.seed}


__all__ = [
    "bootstrap_integral", "bootstrap_integrand", "bootstrap_limit_quadrature", "bootstrap_target", "disc_mass",
    "dozz_product_limit", "gauss_hermite", "gaussian_moment", "kpz_density", "kpz_exponent", "mu_derivative_identity",
    "normalization_identity_check", "radial_integral", "radial_integral_check", "radial_integral_quad",
]
