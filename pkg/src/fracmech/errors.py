"""Exception hierarchy shared by every fracmech module."""


class FracMechError(Exception):
    """Base class for all library errors."""


class DomainError(FracMechError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(FracMechError, ValueError):
    """Inputs are individually valid but do not fit together (e.g. grid mismatch)."""


class AccuracyError(FracMechError, ArithmeticError):
    """A refinement procedure failed to reach the requested tolerance.

    The best estimate and its error bound are kept so callers can still
    decide whether the value is usable.
    """

    def __init__(self, message, estimate, error_bound):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class ConditioningError(FracMechError, ArithmeticError):
    """A linear system was numerically singular."""
