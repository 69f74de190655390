"""Exception hierarchy shared by all qthought modules."""

from __future__ import annotations


class QThoughtError(Exception):
    """Base class for every error raised by the package."""


class RegisterError(QThoughtError):
    """Duplicate or unknown register label / qubit."""


class CapacityError(QThoughtError):
    """The requested register layout exceeds the dense-simulation qubit cap."""


class PreparationError(QThoughtError):
    pass


class GateError(QThoughtError):
    pass


class UnreachableOutcome(QThoughtError):
    """A projection onto an outcome whose probability is below threshold."""

    def __init__(self, message: str, probability: float = 0.0):
        super().__init__(message)
        self.probability = probability


class InversionError(QThoughtError):
    pass


class InferenceError(QThoughtError):
    pass


class TrustDenied(QThoughtError):
    def __init__(self, truster: str, trusted: str):
        super().__init__(f"trust denied: {truster} does not trust {trusted}")
        self.truster = truster
        self.trusted = trusted


class ProtocolError(QThoughtError):
    """Parse or validation failure, carrying a 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class StepError(QThoughtError):
    """Error raised while executing a protocol step, annotated with its time tag."""

    def __init__(self, tag: str, cause: Exception):
        super().__init__(f"at {tag}: {cause}")
        self.tag = tag
        self.cause = cause
