"""Exception types shared across the package."""


class CalsharpError(Exception):
    """Base class for all package errors."""


class ValidationError(CalsharpError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """A prediction dump could not be parsed.

    ``line`` is the 1-based line number in the source file, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedEstimateError(CalsharpError):
    """A kernel estimate has zero kernel mass where a value is required."""
