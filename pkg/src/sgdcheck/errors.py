"""Exception types shared across the package."""
from __future__ import annotations


class SgdCheckError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SgdCheckError):
    """A problem, schedule, or experiment description is malformed."""


class CertificationError(SgdCheckError):
    """Constants required by the convergence guarantees cannot be certified."""


class UsageError(SgdCheckError):
    """An operation was called outside its documented domain."""


class DomainError(SgdCheckError):
    """A numeric argument leaves the range where a formula is valid."""


class DivergenceError(SgdCheckError):
    """An iterate left the representable floating-point range during a run."""

    def __init__(self, step_index: int, message: str | None = None):
        self.step_index = step_index
        super().__init__(message or f"non-finite iterate at step {step_index}")
