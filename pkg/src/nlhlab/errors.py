"""Exception types shared by the nlhlab modules."""


class NlhError(Exception):
    """Base class for all library errors."""


class StructuralError(NlhError, ValueError):
    """Shapes or spaces of the operands do not fit together."""


class MembershipError(NlhError):
    """Operator is not in M(H0, H1): a00 (or a Schur complement) is not invertible."""


class DegenerateDomainError(NlhError):
    """Voxel domain has no interior degrees of freedom."""


class CoercivityError(NlhError, ValueError):
    """Coefficient data violates the requested lower bound."""


class AdmissibilityError(NlhError):
    """Coefficient fails one of the admissibility conditions (a1)-(a3)."""


class SolveError(NlhError):
    """Linear solver broke down or missed its residual contract."""


class DataError(NlhError, ValueError):
    """Right-hand side data is outside the space it must live in."""
