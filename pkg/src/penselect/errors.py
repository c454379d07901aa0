"""Semantic exceptions shared across the package."""


class PenselectError(Exception):
    """Base class for all package errors."""


class DomainError(PenselectError, ValueError):
    """An argument violates a documented precondition."""


class SolverError(PenselectError, RuntimeError):
    """An iterative solver failed to converge.

    Carries the last bracket / iterate so callers can diagnose.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class FeasibilityError(PenselectError, ValueError):
    """A requested enumeration or computation exceeds its safety guard."""


class ConfigError(PenselectError, ValueError):
    """Invalid or inconsistent run configuration."""
