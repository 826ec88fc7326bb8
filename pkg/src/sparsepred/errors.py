"""Exception types shared across the package."""

from __future__ import annotations


class SparsePredError(Exception):
    """Base class for all package errors."""


class DomainError(SparsePredError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(SparsePredError, ValueError):
    """An operation was called in a way it does not support."""


class CapabilityError(SparsePredError, RuntimeError):
    """A request exceeds what the implementation can compute (size caps)."""


class EvaluationError(SparsePredError, FloatingPointError):
    """An integrand or density produced a non-finite value.

    The offending abscissa is kept on ``self.node`` when known.
    """

    def __init__(self, message: str, node: float | None = None):
        super().__init__(message)
        self.node = node


class IntegrationError(EvaluationError):
    """A quadrature over a density support hit an infinite log value."""
