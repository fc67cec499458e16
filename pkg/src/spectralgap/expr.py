"""Arithmetic expressions in one variable ``x``.

Coefficients of a diffusion problem are usually given as short formulas
(``"x^2"``, ``"-x"``, ``"1 + 0.3*sin(2*pi*x)"``).  This module turns such a
string into an immutable tree and evaluates it on floats or numpy arrays.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

so ``-a^b`` is ``-(a^b)`` and ``a^b^c`` is ``a^(b^c)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprSyntaxError",
    "ExprDomainError",
    "UnknownIdentifierError",
    "Lit",
    "Var",
    "Const",
    "Neg",
    "BinOp",
    "Call",
    "parse_expr",
    "eval_expr",
    "to_text",
    "compile_expr",
    "FUNCTION_ARITY",
]


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, expected: str = ""):
        self.offset = offset
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset)


class ExprDomainError(ArithmeticError):
    """Raised when a sub-expression is evaluated outside its domain."""

    def __init__(self, node: "Node", x):
        self.node = node
        self.x = x
        super().__init__(f"{to_text(node)!r} is undefined at x={x!r}")


@dataclass(frozen=True)
class Lit:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "x"


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Lit, Var, Const, Neg, BinOp, Call]

CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTION_ARITY = {
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "sin": 1,
    "cos": 1,
    "abs": 1,
    "pow": 2,
    "min": 2,
    "max": 2,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ExprSyntaxError(f"unexpected {found!r}", pos, repr(value))

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos, "operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Lit(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTION_ARITY:
                    raise UnknownIdentifierError(text, pos)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTION_ARITY[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTION_ARITY[text]} argument(s), got {len(args)}", pos
                    )
                return Call(text, tuple(args))
            if text == "x":
                return Var("x")
            if text in CONSTANTS:
                return Const(text)
            raise UnknownIdentifierError(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", pos, "number, name or '('")


def parse_expr(text: str) -> Node:
    """Parse ``text`` into an expression tree."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, "an expression")
    return _Parser(text).parse()


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_text(node: Node) -> str:
    """Print ``node`` with the minimal parentheses that re-parse to the same tree."""
    if isinstance(node, Lit):
        return repr(float(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        # a negated power prints as -a^b; anything looser needs parentheses
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        # exponent is parsed by `unary`, so negations and powers need no parentheses
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# -- evaluation -------------------------------------------------------------


def _fail(node, x, mask):
    xs = np.broadcast_to(np.asarray(x, dtype=float), np.shape(mask))
    bad = np.asarray(xs)[np.asarray(mask)]
    raise ExprDomainError(node, float(bad.flat[0]) if bad.size else x)


def _eval(node: Node, x):
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        with np.errstate(all="ignore"):
            if node.op == "+":
                out = np.add(a, b)
            elif node.op == "-":
                out = np.subtract(a, b)
            elif node.op == "*":
                out = np.multiply(a, b)
            elif node.op == "/":
                zero = np.equal(b, 0.0)
                if np.any(zero):
                    _fail(node, x, np.broadcast_to(zero, np.broadcast(a, b, x).shape))
                out = np.divide(a, b)
            else:
                out = np.power(a, b)
    else:
        args = [_eval(a, x) for a in node.args]
        f = node.func
        with np.errstate(all="ignore"):
            if f == "log":
                bad = np.less_equal(args[0], 0.0)
                if np.any(bad):
                    _fail(node, x, np.broadcast_to(bad, np.broadcast(args[0], x).shape))
                out = np.log(args[0])
            elif f == "sqrt":
                bad = np.less(args[0], 0.0)
                if np.any(bad):
                    _fail(node, x, np.broadcast_to(bad, np.broadcast(args[0], x).shape))
                out = np.sqrt(args[0])
            elif f == "exp":
                out = np.exp(args[0])
            elif f == "sin":
                out = np.sin(args[0])
            elif f == "cos":
                out = np.cos(args[0])
            elif f == "abs":
                out = np.abs(args[0])
            elif f == "pow":
                out = np.power(args[0], args[1])
            elif f == "min":
                out = np.minimum(args[0], args[1])
            else:
                out = np.maximum(args[0], args[1])
    nan = np.isnan(out)
    if np.any(nan):
        _fail(node, x, np.broadcast_to(nan, np.broadcast(out, x).shape))
    return out


def eval_expr(ast: Node, x):
    """Evaluate ``ast`` at ``x`` (a float or an array of floats).

    Scalars come back as ``float``; arrays keep the shape of ``x``.  Division by
    zero, ``log`` of a non-positive number, ``sqrt`` of a negative number and
    any other NaN-producing step raise :class:`ExprDomainError`.
    """
    if np.ndim(x) == 0:
        return float(_eval(ast, float(x)))
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(_eval(ast, x), x.shape).astype(float)


def compile_expr(text: str):
    """Return a vectorized callable ``f(x)`` for the expression ``text``."""
    ast = parse_expr(text)

    def f(x):
        return eval_expr(ast, x)

    f.ast = ast
    f.text = text
    return f
