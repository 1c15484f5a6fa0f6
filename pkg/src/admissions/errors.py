"""Shared exception types."""

from __future__ import annotations


class DomainError(ValueError):
    """A parameter lies outside the admissible domain of a family."""


class InputError(ValueError):
    """Malformed numerical input (out of range, non-finite, wrong shape)."""


class CapabilityError(RuntimeError):
    """The requested operation is not supported by this family or dimension."""


class ConstructionError(ValueError):
    """Inconsistent specification caught at object build time."""


class SolverError(RuntimeError):
    """Market clearing did not converge within the iteration budget."""

    def __init__(self, message: str, residual: float, theta: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.theta = theta


class ConfigError(ValueError):
    """Run configuration failed schema validation."""
