"""Exception hierarchy shared by every powtime module."""


class PowtimeError(Exception):
    """Base class for all package errors."""


class DomainError(PowtimeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateInputError(DomainError):
    """Input is well-formed but statistically degenerate (e.g. constant series)."""


class OrderingError(PowtimeError, ValueError):
    """Events were fed out of time order."""


class ValidationError(PowtimeError, ValueError):
    """A configuration or record failed validation.

    ``field`` names the offending field when one can be identified.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ParseError(ValidationError):
    """Malformed delimited input. ``line`` is 1-based in the source file."""

    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, field=field)
        self.line = line
