"""Numerical laboratory for the homogeneous Ricci flow and its collapsed ancient solutions."""

from .algebra import (
    HomogeneousSpaceSpec,
    InvariantBasis,
    LieAlgebraSpec,
    NumericalError,
    bracket,
    invariant_sym_basis,
    triple_coefficients,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "HomogeneousSpaceSpec",
    "InvariantBasis",
    "LieAlgebraSpec",
    "NumericalError",
    "bracket",
    "invariant_sym_basis",
    "triple_coefficients",
    "validate",
]
