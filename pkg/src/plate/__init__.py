"""
板模型：幾何、形式與徑向離散
"""

from .femrad import ModeSpace, build_mode_space, interpolate_profile, l2_error, reconstruct_field
from .forms import (
    PlateConfig,
    PolarModeField,
    PolynomialField,
    a_form_quadrature,
    boundary_operator_oracle,
    energy_densities,
    energy_density_quadrature,
)
from .geometry import Annulus, MgcReport, angular_factor, mgc_check

__all__ = [
    "Annulus",
    "MgcReport",
    "angular_factor",
    "mgc_check",
    "PlateConfig",
    "PolynomialField",
    "PolarModeField",
    "a_form_quadrature",
    "energy_densities",
    "energy_density_quadrature",
    "boundary_operator_oracle",
    "ModeSpace",
    "build_mode_space",
    "reconstruct_field",
    "interpolate_profile",
    "l2_error",
]
