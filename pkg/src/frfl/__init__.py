"""Pseudospectral solver and diagnostics for fractional-dissipation alignment hydrodynamics on the torus."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CflViolation,
    ConfigurationError,
    DensityPositivityError,
    DomainError,
    FrflError,
)
from .spectral import (  # noqa: F401
    Grid,
    ScalarField,
    VectorField,
    dealias,
    dealiased_product,
    divergence,
    fractional_laplacian,
    gradient,
    make_grid,
    to_physical,
    to_spectral,
)
