"""Arithmetic expressions for model files.

Grammar (whitespace is insignificant)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | "+" unary | power
    power   := primary ("^" unary)?          # right associative
    primary := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Unary minus binds below ``^`` so ``-q1^2`` is ``-(q1^2)``.  Juxtaposition is
not multiplication.  Expressions evaluate over floats, numpy arrays or
:class:`~nhfield.hyperdual.HyperDual` scalars through the same compiled tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from . import hyperdual as hd
from .errors import EvaluationDomainError, ExprSyntaxError, UnboundVariableError

__all__ = [
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "VariableBinding",
    "parse",
    "evaluate",
    "compile_expr",
    "to_source",
    "variables",
    "FIELD_NAME",
]

FIELD_NAME = re.compile(r"^(?:q(\d+)|v(\d+)_(\d+))$")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, Neg, BinOp, Call]


# -- tokenizer -----------------------------------------------------------------

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_END = "end of input"


@dataclass
class _Token:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _byte(source, i):
    return len(source[:i].encode("utf-8"))


def _tokenize(source: str):
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        m = _NUMBER.match(source, i)
        if m and (c.isdigit() or c == "."):
            end = m.end()
            # reject hex and underscore-separated literals outright
            if end < n and (source[end].isalpha() or source[end] == "_"):
                raise ExprSyntaxError(_byte(source, end), f"invalid character {source[end]!r} in number")
            tokens.append(_Token("num", m.group(), i))
            i = end
            continue
        m = _NAME.match(source, i)
        if m:
            tokens.append(_Token("name", m.group(), i))
            i = m.end()
            continue
        if c in "+-*/^()":
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        raise ExprSyntaxError(_byte(source, i), f"unexpected character {c!r}")
    tokens.append(_Token("end", "", len(source.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def offset(self, tok):
        # byte offset, in case the source contains non-ASCII text
        return _byte(self.source, tok.offset) if tok.kind != "end" else tok.offset

    def fail(self, tok, expected):
        got = _END if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(self.offset(tok), f"expected {expected}, got {got}")

    def is_op(self, chars):
        tok = self.peek()
        return tok.kind == "op" and tok.text in chars

    def expr(self):
        node = self.term()
        while self.is_op("+-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.is_op("*/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.is_op("-"):
            self.take()
            return Neg(self.unary())
        if self.is_op("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.is_op("^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.take()
            if self.is_op("("):
                if tok.text not in hd.FUNCTIONS:
                    raise ExprSyntaxError(self.offset(tok), f"unknown function {tok.text!r}")
                self.take()
                arg = self.expr()
                self.close()
                return Call(tok.text, arg)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.expr()
            self.close()
            return node
        self.fail(tok, "expression")

    def close(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == ")":
            self.take()
            return
        self.fail(tok, "')'")


def parse(source: str) -> Node:
    """Parse ``source`` into an immutable expression tree."""
    if not source.strip():
        raise ExprSyntaxError(0, "empty input")
    p = _Parser(source)
    node = p.expr()
    tok = p.peek()
    if tok.kind != "end":
        if tok.kind == "op" and tok.text == ")":
            raise ExprSyntaxError(p.offset(tok), "unbalanced ')'")
        p.fail(tok, "operator or end of input")
    return node


# -- printing ------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _fmt(x: float) -> str:
    if x < 0:
        return f"(-{_fmt(-x)})"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _src(node, parent=0, right=False):
    if isinstance(node, Const):
        return _fmt(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_src(node.arg)})"
    if isinstance(node, Neg):
        s = "-" + _src(node.operand, _NEG_PREC)
        return f"({s})" if parent > _NEG_PREC or (parent == _NEG_PREC and right) else s
    prec = _PREC[node.op]
    if node.op == "^":
        s = f"{_src(node.left, prec + 1)}^{_src(node.right, _NEG_PREC)}"
    else:
        s = f"{_src(node.left, prec)} {node.op} {_src(node.right, prec, right=True)}"
    need = prec < parent or (prec == parent and right)
    return f"({s})" if need else s


def to_source(node: Node) -> str:
    """Canonical source text; ``parse(to_source(t)) == t`` for parsed trees."""
    return _src(node)


def variables(node: Node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.operand if isinstance(node, Neg) else node.arg)
    return variables(node.left) | variables(node.right)


# -- binding and evaluation ----------------------------------------------------


@dataclass(frozen=True)
class VariableBinding:
    """Slot index per field variable plus constant parameter values."""

    slots: Mapping[str, int]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def check(self, node: Node):
        """Raise :class:`UnboundVariableError` for the first unknown name."""
        for name in sorted(variables(node)):
            if name not in self.slots and name not in self.parameters:
                raise UnboundVariableError(name)


def _compile(node, binding):
    """Constant-folded closure tree; a float is returned for constant subtrees."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        if node.name in binding.parameters:
            return float(binding.parameters[node.name])
        try:
            k = binding.slots[node.name]
        except KeyError:
            raise UnboundVariableError(node.name) from None
        return lambda vals: vals[k]
    if isinstance(node, Neg):
        f = _compile(node.operand, binding)
        if not callable(f):
            return -f
        return lambda vals: -f(vals)
    if isinstance(node, Call):
        g = hd.FUNCTIONS[node.func]
        f = _compile(node.arg, binding)
        if not callable(f):
            return float(g(f))
        return lambda vals: g(f(vals))
    a = _compile(node.left, binding)
    b = _compile(node.right, binding)
    op = node.op
    if not callable(a) and not callable(b):
        return float(_binary(op, a, b))
    if op == "^":
        if not callable(b):
            if b == 2.0:
                return lambda vals: _square(a(vals))
            return lambda vals: hd.power(a(vals), b)
        if not callable(a):
            return lambda vals: hd.power(a, b(vals))
        return lambda vals: hd.power(a(vals), b(vals))
    if not callable(a):
        return _const_left(op, a, b)
    if not callable(b):
        return _const_right(op, a, b)
    if op == "+":
        return lambda vals: a(vals) + b(vals)
    if op == "-":
        return lambda vals: a(vals) - b(vals)
    if op == "*":
        return lambda vals: a(vals) * b(vals)
    return lambda vals: _div(a(vals), b(vals))


def _square(x):
    return x.square() if isinstance(x, hd.HyperDual) else x * x


def _div(x, y):
    if type(y) is float:
        if y == 0.0:
            raise EvaluationDomainError("division by zero", 0.0)
        return x / y
    if isinstance(y, hd.HyperDual) or isinstance(x, hd.HyperDual):
        return x / y
    if np.any(np.asarray(y) == 0):
        raise EvaluationDomainError("division by zero", 0.0)
    return x / y


def _binary(op, x, y):
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    if op == "/":
        return _div(x, y)
    return hd.power(x, y)


def _const_left(op, c, b):
    if op == "+":
        return lambda vals: c + b(vals)
    if op == "-":
        return lambda vals: c - b(vals)
    if op == "*":
        return lambda vals: c * b(vals)
    return lambda vals: _div(c, b(vals))


def _const_right(op, a, c):
    if op == "+":
        return a if c == 0.0 else (lambda vals: a(vals) + c)
    if op == "-":
        return a if c == 0.0 else (lambda vals: a(vals) - c)
    if op == "*":
        if c == 1.0:
            return a
        return lambda vals: a(vals) * c
    if c == 0.0:
        raise EvaluationDomainError("division by zero", 0.0)
    inv = 1.0 / c
    return lambda vals: a(vals) * inv


def compile_expr(node: Node, binding: VariableBinding) -> Callable:
    """Return ``f(values)`` evaluating ``node`` under ``binding``.

    Constant results are wrapped so the returned object is always callable.
    """
    binding.check(node)
    f = _compile(node, binding)
    if callable(f):
        return f
    c = float(f)
    return lambda vals: c


def evaluate(node: Node, binding: VariableBinding, values):
    return compile_expr(node, binding)(values)
