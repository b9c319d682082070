from __future__ import annotations


class ExprError(Exception):
    """Base class for expression-language failures."""


class ParseError(ExprError, ValueError):
    def __init__(self, message: str, offset: int, expected=()):
        self.message = message
        self.offset = offset
        self.expected = frozenset(expected)
        super().__init__(f"{message} at byte {offset}")


class UnboundParameterError(ExprError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"parameter {self.name!r} has no value"


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the real domain (log of non-positive, x/0, ...)."""

    def __init__(self, subexpr: str, argument: float, reason: str):
        self.subexpr = subexpr
        self.argument = argument
        self.reason = reason
        super().__init__(f"{reason} in {subexpr} (argument {argument!r})")
