"""Exception hierarchy shared across the package."""

from __future__ import annotations


class QBanditError(Exception):
    """Base class for every error raised by qbandit."""


class DomainError(QBanditError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class PreconditionError(QBanditError, ValueError):
    """A documented precondition of a formula does not hold."""


class UnsupportedFamilyError(QBanditError, ValueError):
    """The requested kernel family cannot provide the requested feature."""


class ConditioningError(QBanditError, ArithmeticError):
    """A factorization lost positive definiteness beyond round-off."""

    def __init__(self, message: str, **diagnostics: object) -> None:
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class CapacityError(QBanditError, ValueError):
    """A statevector would exceed the qubit budget."""


class EstimationFailure(QBanditError, RuntimeError):
    """Amplitude estimation ran out of rounds before its interval closed."""

    def __init__(self, message: str, interval: tuple[float, float], queries: int) -> None:
        super().__init__(f"{message}; last interval {interval}, {queries} queries spent")
        self.interval = interval
        self.queries = queries


class ConfigError(QBanditError, ValueError):
    """Invalid or unknown configuration."""
