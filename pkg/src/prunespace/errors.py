"""Exception hierarchy shared across the package.

CLI exit codes: ValidationError family -> 3, FeasibilityError -> 4,
TrainingDiverged -> 5.
"""
from __future__ import annotations


class PruneSpaceError(Exception):
    """Base class for all package errors."""


class ValidationError(PruneSpaceError, ValueError):
    """Bad input: schema violations, out-of-range values, malformed documents."""


class SchemaError(ValidationError):
    """A structured document does not match its schema."""


class LogError(ValidationError):
    """A trial log is corrupt or inconsistent."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FeasibilityError(PruneSpaceError, RuntimeError):
    """A constrained search (bisection target, rejection sampling) cannot be satisfied."""

    def __init__(self, message: str, attempts: int | None = None):
        super().__init__(message)
        self.attempts = attempts


class TrainingDiverged(PruneSpaceError, RuntimeError):
    """Training produced a non-finite loss; carries the partial accuracy trace."""

    def __init__(self, message: str, trace: tuple[float, ...] = ()):
        super().__init__(message)
        self.trace = tuple(trace)
