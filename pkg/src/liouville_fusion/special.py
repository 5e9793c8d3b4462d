"""Zamolodchikov's Upsilon function and the DOZZ structure constant.

log Upsilon is evaluated from its integral representation on the strip
0 < Re z < Q,

    log Y(z) = int_0^inf [a^2 e^{-t} - sinh^2(a t/2) / (sinh(gamma t/4) sinh(t/gamma))] dt/t,
    a = Q/2 - z,

split as [0, eps_t] (Taylor series, Gauss-Legendre), [eps_t, T] (adaptive
Gauss-Kronrod via ``scipy.integrate.quad_vec``) and [T, inf) (closed form: the
sinh ratio is a convergent sum of exponentials there, each integrating to an
exponential integral E1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special as sps
from scipy.integrate import quad_vec

from .kernels import DomainError, LiouvilleParams, background_charge


class ConvergenceError(ArithmeticError):
    """An extrapolation or quadrature failed to reach its tolerance."""


# Gauss-Legendre nodes on [0, 1] for the small-t panel
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _log_sinhc(x):
    # log(sinh(x)/x) for small |x|
    x2 = x * x
    return x2 / 6.0 - x2 * x2 / 180.0 + x2 * x2 * x2 / 2835.0 - x2**4 / 37800.0


@dataclass(frozen=True)
class UpsilonEvaluator:
    """Upsilon_gamma with cached derivatives at 0.

    Immutable after construction and safe to share between threads.
    """

    gamma: float
    eps_t: float = 1e-3
    t_split: float = 6.0
    tol: float = 1e-13
    exp_cut: float = 40.0
    ladder: tuple = field(default=tuple(1e-2 * 2.0**-k for k in range(8)), repr=False)
    d1: float = field(init=False, default=math.nan)
    d2: float = field(init=False, default=math.nan)
    d1_err: float = field(init=False, default=math.nan)
    d2_err: float = field(init=False, default=math.nan)
    converged: bool = field(init=False, default=False)

    def __post_init__(self):
        background_charge(self.gamma)
        d1, d2, e1, e2 = self._extrapolate_derivatives()
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)
        object.__setattr__(self, "d1_err", e1)
        object.__setattr__(self, "d2_err", e2)
        object.__setattr__(self, "converged", bool(np.isfinite(d1) and e1 <= 1e-6))

    @property
    def q(self) -> float:
        return background_charge(self.gamma)

    # -- integral representation -------------------------------------------------

    def _integrand(self, t, a):
        g = self.gamma
        ratio = np.sinh(a * t / 2.0) ** 2 / (math.sinh(g * t / 4.0) * math.sinh(t / g))
        return (a * a * math.exp(-t) - ratio) / t

    def _small_t(self, a):
        g = self.gamma
        t = self.eps_t * _GL_X[:, None]
        L = 2.0 * _log_sinhc(a[None, :] * t / 2.0) - _log_sinhc(g * t / 4.0) - _log_sinhc(t / g)
        vals = a[None, :] ** 2 * (np.expm1(-t) - np.expm1(L)) / t
        return self.eps_t * np.sum(_GL_W[:, None] * vals, axis=0)

    def _tail(self, a):
        g, q, T = self.gamma, self.q, self.t_split
        out = a * a * sps.exp1(T)
        mmax = int(self.exp_cut / (g / 2.0 * T)) + 1
        nmax = int(self.exp_cut / (2.0 / g * T)) + 1
        for m in range(mmax + 1):
            for n in range(nmax + 1):
                dmn = g * m / 2.0 + 2.0 * n / g
                if dmn * T > self.exp_cut:
                    continue
                c0 = q / 2.0 + dmn
                # exponents c0 - a, c0 + a, c0 with real parts > 0 inside the strip
                out = out - (sps.exp1((c0 - a) * T) + sps.exp1((c0 + a) * T) - 2.0 * sps.exp1(c0 * T))
        return out

    def log_upsilon(self, z):
        """log Upsilon(z) for 0 < Re z < Q; scalar or array, complex allowed."""
        zarr = np.atleast_1d(np.asarray(z, dtype=complex))
        q = self.q
        if np.any(zarr.real <= 0) or np.any(zarr.real >= q) or not np.all(np.isfinite(zarr)):
            raise DomainError(f"log_upsilon needs 0 < Re z < Q = {q:.6g}")
        a = q / 2.0 - zarr.ravel()
        n = a.size

        def f(t):
            v = self._integrand(t, a)
            return np.concatenate([v.real, v.imag])

        mid, err = quad_vec(f, self.eps_t, self.t_split, epsabs=self.tol, epsrel=self.tol, limit=4000)
        if err > 1e-11:
            raise ConvergenceError(f"log_upsilon quadrature error {err:.3g}")
        val = mid[:n] + 1j * mid[n:] + self._small_t(a) + self._tail(a)
        val = val.reshape(zarr.shape)
        real_input = np.isrealobj(z) or np.all(np.imag(z) == 0)
        if real_input:
            val = val.real
        if np.ndim(z) == 0:
            return val.item() if real_input else complex(val.item())
        return val

    # -- Upsilon itself ----------------------------------------------------------

    def upsilon(self, z, boundary: str = "expansion", edge_tol: float = 1e-14):
        """Upsilon(z) on the closed strip 0 <= Re z <= Q.

        On the edges the integral diverges; ``boundary="expansion"`` uses
        Y'(0) z + Y''(0) z^2 / 2 (and its mirror at Q), ``boundary="shift"``
        uses the exact shift relation Y(x + g/2) = gam(g x/2) (g/2)^{1 - g x} Y(x).
        """
        q = self.q
        zz = np.asarray(z, dtype=complex)
        flat = np.atleast_1d(zz).ravel()
        out = np.empty(flat.shape, dtype=complex)
        inner = (flat.real > edge_tol) & (flat.real < q - edge_tol)
        if np.any(inner):
            out[inner] = np.exp(np.atleast_1d(self.log_upsilon(flat[inner])))
        for i in np.flatnonzero(~inner):
            w = flat[i]
            if w.real > q / 2:
                w = q - w
            if abs(w.real) > edge_tol:
                raise DomainError(f"Upsilon argument {flat[i]!r} outside the closed strip")
            if boundary == "expansion":
                out[i] = self.d1 * w + 0.5 * self.d2 * w * w
            elif boundary == "shift":
                out[i] = self._shift_down(w)
            else:
                raise ValueError(f"unknown boundary method {boundary!r}")
        out = out.reshape(np.shape(zz))
        if np.isrealobj(z) or np.all(np.imag(zz) == 0):
            out = out.real
        return out.item() if np.ndim(z) == 0 else out

    def _shift_down(self, x):
        if x == 0:
            return 0.0
        b = self.gamma / 2.0
        bx = b * x
        log_gam = sps.loggamma(bx) - sps.loggamma(1.0 - bx)
        return np.exp(self.log_upsilon(x + b) - log_gam - (1.0 - 2.0 * bx) * math.log(b))

    # -- derivatives at 0 --------------------------------------------------------

    def _extrapolate_derivatives(self):
        h = np.asarray(self.ladder, dtype=float)
        g = np.exp(np.asarray(self.log_upsilon(h))) / h  # Y(h)/h = Y'(0) + Y''(0) h / 2 + ...
        # Neville table for the h -> 0 limit, ratio 2 between steps
        table = [g.copy()]
        for j in range(1, len(h)):
            prev = table[-1]
            table.append((2.0**j * prev[1:] - prev[:-1]) / (2.0**j - 1.0))
        best = table[-1][0]
        err = abs(table[-1][0] - table[-2][-1])
        # second derivative: polynomial fit of Y(h)/h on the ladder
        c4 = np.polynomial.polynomial.polyfit(h, g, 4)
        c5 = np.polynomial.polynomial.polyfit(h, g, 5)
        d2 = 2.0 * c5[1]
        d2_err = 2.0 * abs(c5[1] - c4[1])
        return float(best), float(d2), float(err), float(d2_err)

    def derivatives_at_zero(self) -> dict:
        if not self.converged:
            raise ConvergenceError(f"Upsilon'(0) extrapolation residual {self.d1_err:.3g} exceeds 1e-6")
        return {"d1": self.d1, "d1_err": self.d1_err, "d2": self.d2, "d2_err": self.d2_err}


@lru_cache(maxsize=32)
def get_evaluator(gamma: float) -> UpsilonEvaluator:
    return UpsilonEvaluator(float(gamma))


def log_upsilon(z, gamma: float):
    return get_evaluator(gamma).log_upsilon(z)


def upsilon(z, gamma: float, boundary: str = "expansion"):
    return get_evaluator(gamma).upsilon(z, boundary=boundary)


def upsilon_derivatives_at_zero(gamma: float) -> dict:
    """Upsilon'(0), Upsilon''(0) and their extrapolation errors."""
    return get_evaluator(gamma).derivatives_at_zero()


# ---------------------------------------------------------------------------
# DOZZ


def dozz_prefactor_base(params: LiouvilleParams) -> float:
    g = params.gamma
    g2 = g * g / 4.0
    return math.pi * params.mu * (g / 2.0) ** (2.0 - g * g / 2.0) * math.gamma(g2) / math.gamma(1.0 - g2)


@dataclass
class DozzValue:
    value: complex
    arguments: tuple
    prefactor_exponent: complex
    reduced: complex

    def as_dict(self) -> dict:
        def enc(x):
            x = complex(x)
            return x.real if x.imag == 0 else [x.real, x.imag]

        return {
            "arguments": [enc(a) for a in self.arguments],
            "value": enc(self.value),
            "reduced": enc(self.reduced),
            "prefactor_exponent": enc(self.prefactor_exponent),
        }


def _is_real(*xs) -> bool:
    return all(complex(x).imag == 0 for x in xs)


def _dozz_args(a1, a2, a3, q):
    ab = a1 + a2 + a3
    return ab, [(ab - 2 * q) / 2, ab / 2 - a1, ab / 2 - a2, ab / 2 - a3]


def dozz_value(a1, a2, a3, params: LiouvilleParams, boundary: str = "expansion") -> DozzValue:
    """Full DOZZ constant with its reduced part (no mu-dependent prefactor).

    Momenta may be complex (for the bootstrap integrand); arguments on the
    strip edge use ``boundary`` as in :meth:`UpsilonEvaluator.upsilon`.
    """
    ev = get_evaluator(params.gamma)
    q = params.q
    ab, den = _dozz_args(a1, a2, a3, q)
    args = [complex(a) for a in (a1, a2, a3)] + [complex(w) for w in den]
    for w in args:
        if not (0.0 <= w.real <= q):
            raise DomainError(f"DOZZ argument {w!r} outside the strip [0, {q:.6g}]")
    vals = np.asarray(ev.upsilon(np.array(args), boundary=boundary), dtype=complex)
    if np.any(vals[3:] == 0):
        raise DomainError("DOZZ denominator vanishes (Upsilon argument at 0 or Q)")
    reduced = ev.d1 * np.prod(vals[:3]) / np.prod(vals[3:])
    expo = -(ab - 2 * q) / params.gamma
    value = reduced * np.exp(expo * math.log(dozz_prefactor_base(params)))
    return DozzValue(value=value, arguments=(a1, a2, a3), prefactor_exponent=expo, reduced=reduced)


def dozz(a1, a2, a3, params: LiouvilleParams, boundary: str = "expansion"):
    """C_gamma(a1, a2, a3) including the mu-dependent prefactor."""
    v = dozz_value(a1, a2, a3, params, boundary=boundary)
    return float(v.value.real) if _is_real(a1, a2, a3) else complex(v.value)


def dozz_reduced(a1, a2, a3, params: LiouvilleParams, boundary: str = "expansion"):
    """Reduced constant: Y'(0) prod Y(a_i) / [Y((abar-2Q)/2) prod Y(abar/2 - a_i)]."""
    v = dozz_value(a1, a2, a3, params, boundary=boundary)
    return float(v.reduced.real) if _is_real(a1, a2, a3) else complex(v.reduced)


def d_dozz_at_q(a3, a4, params: LiouvilleParams, reduced: bool = False) -> float:
    """Derivative of C_gamma in its first slot at Q.

    The vanishing factor Y(a1) is replaced by Y'(Q) = -Y'(0) and the rest is
    evaluated at a1 = Q.  With ``reduced=True`` the mu prefactor is dropped.
    """
    q = params.q
    if not (a3 < q and a4 < q and a3 + a4 > q):
        raise DomainError("d_dozz_at_q needs a3, a4 < Q and a3 + a4 > Q")
    ev = get_evaluator(params.gamma)
    u = ev.upsilon
    lu = ev.log_upsilon
    s = (a3 + a4 - q) / 2.0
    val = -ev.d1**2 * u(a3) * u(a4) * math.exp(
        -2.0 * lu(s) - lu((q + a4 - a3) / 2.0) - lu((q + a3 - a4) / 2.0)
    )
    if reduced:
        return float(val)
    expo = -(a3 + a4 - q) / params.gamma
    return float(val * dozz_prefactor_base(params) ** expo)


def d_dozz_at_q_third(a1, a2, params: LiouvilleParams, reduced: bool = False) -> float:
    """Derivative of C_gamma(a1, a2, .) in its third slot at Q (by symmetry)."""
    return d_dozz_at_q(a1, a2, params, reduced=reduced)
