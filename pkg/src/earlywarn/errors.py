"""Exception types shared across the package."""
from __future__ import annotations


class EarlywarnError(Exception):
    """Base class for all package-specific errors."""


class ParseError(EarlywarnError, ValueError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(EarlywarnError, ValueError):
    """Invalid course configuration, cohort spec, or experiment plan."""


class SchemaError(EarlywarnError, ValueError):
    """Feature schema mismatch between a model and the data offered to it."""


class ParameterError(EarlywarnError, ValueError):
    """Hyperparameter or argument outside its documented domain."""


class FitError(EarlywarnError, RuntimeError):
    """A fitting routine failed to converge or hit a degenerate state."""


class MetricUndefinedError(EarlywarnError, ValueError):
    """A metric was requested on inputs where it has no defined value."""
