"""Recursive-descent parser for the expression language.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | "+" unary | power
    power   := atom ("^" exponent)*
    exponent:= ["-" | "+"] INT | "(" ["-" | "+"] INT ")"
    atom    := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"

Unary minus binds looser than ``^`` (``-x^2`` is ``-(x^2)``) and tighter
than ``*``.  Exponents must be integer literals; use ``sqrt`` for roots.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Optional

from .errors import ParseError
from .nodes import CONSTANTS, FUNCTIONS, VARIABLES, Add, Const, Div, Expr, Func, Mul, NamedConst, Neg, Param, Pow, Sub, Var

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind, self.text, self.pos = kind, text, pos


def _tokenize(text: str) -> list:
    toks = []
    i = 0
    n = len(text)
    while True:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        m = _TOKEN.match(text, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {text[i]!r}", _byte_offset(text, i), {"number", "identifier", "operator"})
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        i = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


def _byte_offset(text: str, i: int) -> int:
    return len(text[:i].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, params: Optional[frozenset]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.params = params

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, expected: Iterable[str], tok: Optional[_Tok] = None):
        tok = tok or self.tok
        raise ParseError(msg, _byte_offset(self.text, tok.pos), set(expected))

    def accept(self, op: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def expect(self, op: str):
        if not self.accept(op):
            found = self.tok.text or "end of input"
            self.error(f"expected {op!r}, found {found!r}", {op})

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            if self.accept("+"):
                left = Add((left, self.term()))
            elif self.accept("-"):
                left = Sub(left, self.term())
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            if self.accept("*"):
                left = Mul((left, self.unary()))
            elif self.accept("/"):
                left = Div(left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.accept("(")
        sign = 1
        if self.accept("-"):
            sign = -1
        elif self.accept("+"):
            pass
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            self.error("non-integer exponent (exponents must be integer literals; use sqrt for roots)", {"integer"})
        self.i += 1
        if paren and not (self.tok.kind == "op" and self.tok.text == ")"):
            self.error("non-integer exponent (exponents must be integer literals; use sqrt for roots)", {")"})
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(Fraction(tok.text))
        if tok.kind == "ident":
            self.i += 1
            name = tok.text
            if name in FUNCTIONS:
                if not self.accept("("):
                    self.error(f"function {name!r} needs an argument", {"("})
                arg = self.expr()
                self.expect(")")
                return Func(name, arg)
            if self.tok.kind == "op" and self.tok.text == "(":
                self.error(f"unknown function {name!r}", set(FUNCTIONS), tok)
            if name in VARIABLES:
                return Var(name)
            if name in CONSTANTS:
                return NamedConst(name)
            if self.params is not None and name not in self.params:
                self.error(f"undeclared parameter {name!r}", set(VARIABLES) | set(CONSTANTS) | set(self.params), tok)
            return Param(name)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        self.error(f"unexpected {found!r}", {"number", "identifier", "("})


def parse(text: str, params: Optional[Iterable[str]] = None) -> Expr:
    """Parse ``text``; if ``params`` is given, any other identifier is an error."""
    allowed = None if params is None else frozenset(params)
    return _Parser(text, allowed).parse()
