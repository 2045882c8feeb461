"""Localized training of quasi-optimal approximation spaces for Friedrichs' systems.

The mixed convection-diffusion-reaction operator is discretized with
lowest-order Raviart-Thomas fluxes and bilinear scalars on structured
quadrilateral grids and solved in least-squares (FOSLS) form.
"""

from friedrichs_mor.exceptions import (
    CapExceeded,
    ConfigError,
    EmptyBasis,
    InsufficientData,
    MaxBasisReached,
    NegativeDefinite,
    NonConformingResolution,
    NonPositiveMargin,
    NotPositiveDefinite,
    SpaceMismatch,
    ZeroSample,
)
from friedrichs_mor.grid import Rect, StructuredGrid, SubdomainPair, build_grid, build_pair

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "ConfigError",
    "EmptyBasis",
    "InsufficientData",
    "MaxBasisReached",
    "NegativeDefinite",
    "NonConformingResolution",
    "NonPositiveMargin",
    "NotPositiveDefinite",
    "Rect",
    "SpaceMismatch",
    "StructuredGrid",
    "SubdomainPair",
    "ZeroSample",
    "build_grid",
    "build_pair",
]
