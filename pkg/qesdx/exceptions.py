"""Exception hierarchy shared by the algebra engine, the oracle and the
job runner."""

from typing import Any, Dict, Optional


class QESError(Exception):
    """Base class for every error raised by the package."""


class DomainError(QESError, ValueError):
    """An input lies outside the domain of the requested operation."""


class PoleError(DomainError):
    """Evaluation hit a pole.

    Attributes:
        location: The point (in x or t, as stated in the message) at which
            the denominator vanishes.
    """

    def __init__(self, message: str, location: complex):
        super().__init__(message)
        self.location = location


class TransformationFunctionError(DomainError):
    """The supplied function does not solve (H - alpha) psi = 0."""


class DegeneratePairError(DomainError):
    """The two transformation functions are proportional."""


class NumericalError(QESError, ArithmeticError):
    """A numerical procedure failed.

    Attributes:
        diagnostics: Free-form details describing the failure.
    """

    def __init__(
        self, message: str, diagnostics: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConsistencyError(QESError, RuntimeError):
    """An internally constructed object failed its own verification."""


class JobParseError(QESError, ValueError):
    """A job document could not be parsed or validated.

    Attributes:
        line: 1-based line of the offending text, when it can be located.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
