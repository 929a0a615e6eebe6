"""Exception types shared across the package."""


class EhsenselError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(EhsenselError):
    """A symmetric factorization hit a nonpositive pivot."""


class InvalidK(EhsenselError):
    """Selection budget outside [0, M]."""


class InvalidParams(EhsenselError):
    """Scenario or generator parameters out of range."""


class ShapeMismatch(EhsenselError):
    """Array arguments with inconsistent dimensions."""


class NonConvergence(EhsenselError):
    """An iterative solver exhausted its budget above tolerance.

    Carries the final residual and, when available, the partial result so
    callers can still inspect or persist it.
    """

    def __init__(self, message, residual=None, result=None):
        super().__init__(message)
        self.residual = residual
        self.result = result


class InfeasibleAnchor(EhsenselError):
    """A majorization anchor violates its own linearized constraint."""


class TooLarge(EhsenselError):
    """Exhaustive enumeration refused: candidate count above the cap."""


class SchemaError(EhsenselError):
    """A scenario file is missing a field or fails validation."""


class NegativeResidual(EhsenselError):
    """Energy bookkeeping produced a negative unspent balance."""
