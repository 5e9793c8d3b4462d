"""Liouville CFT fusion: DOZZ and Upsilon, GMC on the cylinder, negative-moment and Bessel estimators."""
from importlib.metadata import PackageNotFoundError, version

from .bootstrap import bootstrap_limit_quadrature, disc_mass, dozz_product_limit, kpz_density, kpz_exponent
from .estimators import (
    BranchError,
    SeibergError,
    four_point_mc,
    limit_constant_bessel,
    limit_constant_direct,
    negative_moment,
    three_point_mc,
)
from .field import CylinderLattice, sample_field, total_mass_Wt
from .kernels import DomainError, LiouvilleParams, RateSpec, background_charge, check_seiberg, rate_function
from .montecarlo import MCConfig, ValidationError
from .special import d_dozz_at_q, dozz, log_upsilon, upsilon

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # source checkout
    __version__ = "0+unknown"

__all__ = [
    "BranchError", "CylinderLattice", "DomainError", "LiouvilleParams", "MCConfig", "RateSpec", "SeibergError",
    "ValidationError", "background_charge", "bootstrap_limit_quadrature", "check_seiberg", "d_dozz_at_q",
    "disc_mass", "dozz", "dozz_product_limit", "four_point_mc", "kpz_density", "kpz_exponent", "limit_constant_bessel",
    "limit_constant_direct", "log_upsilon", "negative_moment", "rate_function", "sample_field", "three_point_mc",
    "total_mass_Wt", "upsilon",
]
