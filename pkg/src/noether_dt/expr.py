"""Expression language used for Lagrangians, dynamics, transformations and gauge terms.

Grammar (lowest to highest binding)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?          # right associative
    atom  := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of sin, cos, exp, ln, sqrt, abs.  Names match
``[a-zA-Z][a-zA-Z0-9_]*``.  There is no implicit multiplication, so ``2x``
is rejected.  ``abs`` has derivative 0 at 0.

Evaluation is generic: the same tree evaluates over floats or over
:class:`~noether_dt.dual.Dual` numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from . import dual
from .errors import ExprSyntaxError, ModelError, UnboundVariableError, UnknownFunctionError

FUNCTION_NAMES = frozenset(dual.FUNCTIONS)
NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*\Z")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[a-zA-Z][a-zA-Z0-9_]*)
  | (?P<op>[-+*/^])
  | (?P<lparen>\()
  | (?P<rparen>\))
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, expected: str, tok: _Token):
        raise ExprSyntaxError(
            f"expected {expected} but found {_describe(tok)}", tok.offset, self.text
        )

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            self.error("operator or end of input", tok)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().kind == "lparen":
                if tok.text not in FUNCTION_NAMES:
                    raise UnknownFunctionError(
                        f"unknown function {tok.text!r}", tok.offset, self.text
                    )
                self.advance()
                arg = self.expr()
                close = self.advance()
                if close.kind != "rparen":
                    self.error("')'", close)
                return Call(tok.text, arg)
            if tok.text in FUNCTION_NAMES:
                self.error(f"'(' after function name {tok.text!r}", self.peek())
            return Var(tok.text)
        if tok.kind == "lparen":
            inner = self.expr()
            close = self.advance()
            if close.kind != "rparen":
                self.error("')'", close)
            return inner
        self.error("number, name or '('", tok)


def parse(text: str) -> Expr:
    """Parse expression text into a tree; raises :class:`ExprSyntaxError`."""
    return _Parser(text).parse()


# ------------------------------------------------------------------ printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _wrap(e: Expr, cond: bool) -> str:
    s = to_text(e)
    return f"({s})" if cond else s


def to_text(e: Expr) -> str:
    """Render a tree as text that parses back to the same tree."""
    if isinstance(e, Num):
        if e.value != e.value or e.value in (float("inf"), float("-inf")):
            raise ValueError(f"cannot print non-finite literal {e.value!r}")
        v = float(e.value)
        s = str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
        return f"({s})" if v < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, _prec(e.operand) < _NEG_PREC)
    p = _PREC[e.op]
    if e.op == "^":
        left = _wrap(e.left, _prec(e.left) <= p)
        right = _wrap(e.right, _prec(e.right) < _NEG_PREC)
        return f"{left}^{right}"
    left = _wrap(e.left, _prec(e.left) < p)
    right = _wrap(e.right, _prec(e.right) <= p)
    if e.op in "+-":
        return f"{left} {e.op} {right}"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------- evaluation

_BINARY = {
    "+": dual.add,
    "-": dual.sub,
    "*": dual.mul,
    "/": dual.div,
    "^": dual.power,
}


def evaluate(e: Expr, env: Mapping[str, object]):
    """Value of ``e`` with free variables looked up in ``env`` (floats or duals)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return dual.neg(evaluate(e.operand, env))
    if isinstance(e, BinOp):
        return _BINARY[e.op](evaluate(e.left, env), evaluate(e.right, env))
    return dual.FUNCTIONS[e.func](evaluate(e.arg, env))


def compile_expr(e: Expr) -> Callable[[Mapping[str, object]], object]:
    """Closure equivalent to ``lambda env: evaluate(e, env)`` without the tree walk."""
    if isinstance(e, Num):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(name) from None

        return var
    if isinstance(e, Neg):
        inner = compile_expr(e.operand)
        return lambda env: dual.neg(inner(env))
    if isinstance(e, BinOp):
        fn = _BINARY[e.op]
        left, right = compile_expr(e.left), compile_expr(e.right)
        return lambda env: fn(left(env), right(env))
    fn = dual.FUNCTIONS[e.func]
    arg = compile_expr(e.arg)
    return lambda env: fn(arg(env))


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    return free_vars(e.arg)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    return Call(e.func, substitute(e.arg, mapping))


def rename(e: Expr, names: Mapping[str, str]) -> Expr:
    return substitute(e, {old: Var(new) for old, new in names.items()})


def check_vocabulary(e: Expr, allowed, context: str) -> None:
    """Raise ModelError naming any variable of ``e`` outside ``allowed``."""
    extra = sorted(free_vars(e) - set(allowed))
    if extra:
        raise ModelError(
            f"{context}: variable(s) {', '.join(extra)} not allowed here "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def linear_combination(terms) -> Expr:
    """Tree for sum(c * basis) over ``(c, basis)`` pairs, skipping zero coefficients."""
    out = None
    for c, basis in terms:
        if c == 0:
            continue
        mag = abs(float(c))
        if isinstance(basis, Num) and basis.value == 1.0:
            term = Num(mag)
        else:
            term = basis if mag == 1.0 else BinOp("*", Num(mag), basis)
        if out is None:
            out = Neg(term) if c < 0 else term
        else:
            out = BinOp("-" if c < 0 else "+", out, term)
    return Num(0.0) if out is None else out
