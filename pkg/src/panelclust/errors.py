"""Exception types shared across the package."""


class PanelclustError(Exception):
    """Base class for all package errors."""


class ParseError(PanelclustError, ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(PanelclustError, ValueError):
    """Inputs violate a documented precondition or invariant."""


class NumericalError(PanelclustError, RuntimeError):
    """A numerical operation failed (non-PD matrix, non-finite value, ...)."""
