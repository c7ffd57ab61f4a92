"""Exception hierarchy shared by every stage.

The CLI maps these onto process exit codes, see :mod:`simenhance.cli`.
"""
from __future__ import annotations


class SimEnhanceError(Exception):
    """Base class for all package errors."""


class ValidationError(SimEnhanceError, ValueError):
    """Invalid argument, configuration or data shape."""


class ShapeError(ValidationError):
    """Layer shapes do not compose, or a batch does not fit the model."""

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class ParseError(ValidationError):
    """Malformed file content. Carries the 1-based line (and column when known)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class UsageError(SimEnhanceError, RuntimeError):
    """API misuse, e.g. backward() with a cache from a different model state."""


class NumericError(SimEnhanceError, ArithmeticError):
    """A NaN or Inf showed up in activations or losses."""


class NotFoundError(SimEnhanceError, FileNotFoundError):
    """Requested run or artifact does not exist."""


class ConfigurationError(SimEnhanceError):
    """Remote sink rejected the request (4xx): bad token, bad bucket, ..."""


class TransportError(SimEnhanceError, ConnectionError):
    """Remote sink unreachable after all retries."""
