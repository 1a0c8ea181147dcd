"""Nonlocal H-convergence laboratory on voxel de Rham complexes."""

from .errors import (AdmissibilityError, CoercivityError, DataError, DegenerateDomainError, MembershipError,
                     NlhError, SolveError, StructuralError)

__version__ = "0.1.0"

__all__ = [
    "NlhError", "StructuralError", "MembershipError", "DegenerateDomainError", "CoercivityError",
    "AdmissibilityError", "SolveError", "DataError", "__version__",
]
