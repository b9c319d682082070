"""Closed-form expressions in r, z and named parameters."""
from .diff import d, differentiate
from .errors import DomainError, ExprError, ParseError, UnboundParameterError
from .evaluate import CompiledExprs, compile_exprs, evaluate, evaluate_grid
from .hyperdual import HyperDual, evaluate_hyperdual
from .nodes import (
    PI, R, Z, Add, Const, Div, Expr, Func, Mul, NamedConst, Neg, Param, Pow, Sub, Var,
    coerce, free_symbols, parameters, size, substitute,
)
from .parser import parse
from .printer import to_text
from .simplify import simplify

__all__ = [
    "Add", "CompiledExprs", "Const", "Div", "DomainError", "Expr", "ExprError", "Func",
    "HyperDual", "Mul", "NamedConst", "Neg", "PI", "Param", "ParseError", "Pow", "R", "Sub",
    "UnboundParameterError", "Var", "Z", "coerce", "compile_exprs", "d", "differentiate",
    "evaluate", "evaluate_grid", "evaluate_hyperdual", "free_symbols", "parameters", "parse",
    "simplify", "size", "substitute", "to_text",
]
