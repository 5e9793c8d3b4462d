"""Parameter records, Seiberg bounds, Green's functions and the fusion rate function.

Points of the extended plane are plain Python numbers (real or complex) or the
:data:`INFINITY` marker.  Cylinder coordinates are related to the plane through
``x = exp(-s - i*theta)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

#: exact-equality tolerance used when selecting the critical / boundary branches
BRANCH_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain of definition of a kernel or formula."""


class SingularityError(DomainError):
    """Kernel evaluated on its diagonal singularity."""


class _PointAtInfinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_PointAtInfinity, ())


INFINITY = _PointAtInfinity()


def is_infinity(x) -> bool:
    return x is INFINITY


def background_charge(gamma: float) -> float:
    """Q = gamma/2 + 2/gamma for gamma in (0, 2)."""
    if not (0.0 < gamma < 2.0):
        raise DomainError(f"gamma must lie in (0, 2), got {gamma!r}")
    return gamma / 2.0 + 2.0 / gamma


@dataclass(frozen=True)
class LiouvilleParams:
    gamma: float
    mu: float = 1.0

    def __post_init__(self):
        background_charge(self.gamma)
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu!r}")

    @property
    def q(self) -> float:
        return background_charge(self.gamma)


@dataclass(frozen=True)
class Insertion:
    location: object
    momentum: float

    def __post_init__(self):
        if self.momentum < 0:
            raise DomainError(f"momentum must be nonnegative, got {self.momentum!r}")


@dataclass(frozen=True)
class InsertionSet:
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        locs = [it.location for it in self.items]
        for i in range(len(locs)):
            for j in range(i + 1, len(locs)):
                if _same_point(locs[i], locs[j]):
                    raise DomainError(f"insertion locations must be distinct: {locs[i]!r}")

    @classmethod
    def from_pairs(cls, locations: Sequence, momenta: Sequence[float]) -> "InsertionSet":
        if len(locations) != len(momenta):
            raise DomainError("locations and momenta differ in length")
        return cls(tuple(Insertion(z, float(a)) for z, a in zip(locations, momenta)))

    @property
    def momenta(self) -> tuple:
        return tuple(it.momentum for it in self.items)

    def sigma(self, q: float) -> float:
        return sum(self.momenta) / q - 2.0


def _same_point(x, y) -> bool:
    if is_infinity(x) or is_infinity(y):
        return is_infinity(x) and is_infinity(y)
    return complex(x) == complex(y)


@dataclass
class SeibergReport:
    sigma: float
    below_q: list
    valid: bool
    kappa: float | None = None
    extended_valid: bool | None = None
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "below_q": list(self.below_q),
            "valid": self.valid,
            "kappa": self.kappa,
            "extended_valid": self.extended_valid,
            "notes": list(self.notes),
        }


def check_seiberg(insertions: InsertionSet, params: LiouvilleParams, kappa: float | None = None) -> SeibergReport:
    """Validate the Seiberg bounds; never raises.

    ``kappa`` is the negative-moment order.  The extended bound is evaluated
    as printed, ``-kappa < 4/gamma**2 ∧ min(Q - alpha_i)`` with all ``alpha_i < Q``,
    where for a correlation function ``kappa = Q*sigma/gamma``.
    """
    q = params.q
    sigma = insertions.sigma(q)
    below = [a < q for a in insertions.momenta]
    valid = sigma > 0 and all(below) and len(insertions.items) >= 3
    notes = []
    if len(insertions.items) < 3:
        notes.append("fewer than three insertions: the correlation function does not exist")
    ext = None
    if kappa is not None:
        bound = min([4.0 / params.gamma**2] + [q - a for a in insertions.momenta])
        ext = (-kappa < bound) and all(below)
        notes.append("extended bound evaluated literally: -kappa < 4/gamma^2 ∧ min(Q - alpha_i)")
    return SeibergReport(sigma=sigma, below_q=below, valid=valid, kappa=kappa, extended_valid=ext, notes=notes)


def log_plus(x) -> float:
    """log |x|_+ = log max(|x|, 1)."""
    return max(math.log(abs(x)), 0.0) if x != 0 else 0.0


def green_sphere(x, y) -> float:
    """Green's function log 1/|x-y| + log|x|_+ + log|y|_+ on the extended plane.

    ``green_sphere(INFINITY, y)`` is the limit ``log|y|_+`` obtained after
    cancelling ``log|x|_+ - log|x - y|`` as ``x -> infinity``.
    """
    if is_infinity(x) and is_infinity(y):
        raise SingularityError("both points at infinity")
    if is_infinity(x):
        return log_plus(complex(y))
    if is_infinity(y):
        return log_plus(complex(x))
    x, y = complex(x), complex(y)
    d = abs(x - y)
    if d == 0.0:
        raise SingularityError(f"green_sphere evaluated on the diagonal at {x!r}")
    return -math.log(d) + log_plus(x) + log_plus(y)


def lateral_cov(ds: float, dtheta: float) -> float:
    """Covariance of the lateral noise, log 1/|1 - exp(-|ds| - i dtheta)|."""
    w = 1.0 - cmath.exp(complex(-abs(ds), -dtheta))
    m = abs(w)
    if m == 0.0:
        raise SingularityError("lateral_cov evaluated at zero offset")
    return -math.log(m)


def green_cylinder(s: float, theta: float, s2: float, theta2: float) -> float:
    radial = min(abs(s), abs(s2)) if s * s2 >= 0 else 0.0
    return radial + lateral_cov(s2 - s, theta2 - theta)


def cylinder_to_plane(s: float, theta: float) -> complex:
    return cmath.exp(complex(-s, -theta))


def plane_to_cylinder(x) -> tuple:
    w = -cmath.log(complex(x))
    return w.real, w.imag


class Branch(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    INTERMEDIATE = "intermediate"
    BOUNDARY = "boundary"
    HEAVY = "heavy"


def select_branch(alpha: float, q: float, kappa: float, gamma: float, tol: float = BRANCH_TOL) -> Branch:
    d = alpha - q
    kg = kappa * gamma
    if abs(d) < tol:
        return Branch.CRITICAL
    if abs(d - kg) < tol:
        return Branch.BOUNDARY
    if d < 0:
        return Branch.SUBCRITICAL
    if d < kg:
        return Branch.INTERMEDIATE
    return Branch.HEAVY


@dataclass(frozen=True)
class RateSpec:
    """Fused momentum ``alpha = alpha1 + alpha2`` and moment order ``kappa``."""

    alpha: float
    kappa: float
    gamma: float
    tol: float = BRANCH_TOL

    def __post_init__(self):
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")

    @property
    def branch(self) -> Branch:
        return select_branch(self.alpha, background_charge(self.gamma), self.kappa, self.gamma, self.tol)


#: power of log(1/|z|) per branch in the printed table; the "corrected"
#: convention flips its sign (t^{-3/2}, t^{-1/2}), matching the four-point
#: asymptotics and the barrier probabilities of the proofs.
_LOG_POWER = {
    Branch.SUBCRITICAL: 0.0,
    Branch.CRITICAL: 0.5,
    Branch.INTERMEDIATE: 1.5,
    Branch.BOUNDARY: 0.5,
    Branch.HEAVY: 0.0,
}
CONVENTIONS = ("printed", "corrected")


def _log_rate(spec: RateSpec, q: float, gamma: float, t: float, convention: str) -> float:
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown rate convention {convention!r}")
    d = spec.alpha - q
    kg = spec.kappa * gamma
    branch = select_branch(spec.alpha, q, spec.kappa, gamma, spec.tol)
    sign = 1.0 if convention == "printed" else -1.0
    if branch is Branch.SUBCRITICAL:
        lin = 0.0
    elif branch is Branch.CRITICAL:
        lin = 0.0
    elif branch is Branch.HEAVY:
        lin = -t * (d * d / 2.0 - (kg - d) ** 2 / 2.0)
    else:
        lin = -t * d * d / 2.0
    return lin + sign * _LOG_POWER[branch] * math.log(t)


def rate_function(spec: RateSpec, params: LiouvilleParams, z_modulus: float, convention: str = "printed") -> float:
    """Decay profile I_alpha^{gamma,kappa}(z) of the negative moment under fusion."""
    if not (0.0 < z_modulus < 1.0):
        raise DomainError(f"|z| must lie in (0, 1), got {z_modulus!r}")
    return math.exp(_log_rate(spec, params.q, params.gamma, -math.log(z_modulus), convention))


def log_rate_function(spec: RateSpec, params: LiouvilleParams, t: float, convention: str = "printed") -> float:
    """log I at |z| = exp(-t); usable for t beyond float range of |z|."""
    if not t > 0:
        raise DomainError("t must be positive")
    return _log_rate(spec, params.q, params.gamma, t, convention)
