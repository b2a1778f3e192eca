"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PonError(Exception):
    """Base class for domain errors raised by this package."""


class ParseError(PonError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(PonError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class InvalidArgument(PonError, ValueError):
    pass


class CapacityError(PonError):
    pass


class UnknownAddress(PonError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown address"


class Unreachable(PonError):
    pass


class Exhausted(PonError):
    pass


class Infeasible(PonError):
    def __init__(self, message: str, node_id: str | None = None, residual_us: float = 0.0):
        self.node_id = node_id
        self.residual_us = residual_us
        super().__init__(message)
