"""Exception hierarchy shared by the library and the CLI exit-code mapping."""

from __future__ import annotations


class ErgoError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(ErgoError, ValueError):
    """Bad input: out-of-range values, malformed configs, unknown names."""


class ParseError(ValidationError):
    """A file could not be parsed; the message carries the line or byte offset."""


class DegenerateSampleError(ErgoError):
    """A sample has no events or its representation has no nonzero pixel."""


class NumericalError(ErgoError, RuntimeError):
    """The solver produced non-finite values.

    ``diagnostics`` holds whatever iteration state was available when the
    failure was detected.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
