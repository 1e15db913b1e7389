"""Exception hierarchy shared by the numerics, bounds, protocols and CLI layers."""

from typing import Optional


class FiniteKeyError(Exception):
    """Base class for every error raised by the package."""


class DomainError(FiniteKeyError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(FiniteKeyError, ArithmeticError):
    """An iterative solver failed to converge within its iteration cap."""


class ConfigurationError(FiniteKeyError, ValueError):
    """A protocol or run configuration violates one of its invariants."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DegenerateChannelError(ConfigurationError):
    """The channel model produces no detections (sum of p_k D_k is zero)."""


class InfeasibleError(FiniteKeyError):
    """A construction has an empty feasible set."""


class SlopeConditionError(ConfigurationError):
    """The threshold is decreasing at p_th, so the test p_hat <= p_th is not sound."""
