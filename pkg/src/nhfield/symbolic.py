"""Symbolic derivatives of expression trees.

The integrators evaluate the same derivatives at hundreds of thousands of
points.  Differentiating the tree once and compiling the results to float
closures is much cheaper per point than hyper-dual arithmetic, whose cost is
dominated by array overhead.  The hyper-dual engine stays the reference: the
test suite checks both against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationDomainError
from .expr import BinOp, Call, Const, Neg, Node, Var, compile_expr, variables

__all__ = ["diff", "simplify_add", "simplify_mul", "StageTape", "stage_tape"]

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(node, value):
    return isinstance(node, Const) and node.value == value


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def simplify_add(a, b):
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return BinOp("-", a, b.operand)
    return BinOp("+", a, b)


def sub(a, b):
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def simplify_mul(a, b):
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a, b):
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a, b):
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    return BinOp("^", a, b)


def diff(node: Node, name: str) -> Node:
    """``d node / d name`` as a simplified tree; parameters count as constants."""
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == name else ZERO
    if isinstance(node, Neg):
        return neg(diff(node.operand, name))
    if isinstance(node, Call):
        a = node.arg
        da = diff(a, name)
        if _is(da, 0.0):
            return ZERO
        f = node.func
        if f == "sin":
            outer = Call("cos", a)
        elif f == "cos":
            outer = neg(Call("sin", a))
        elif f == "tan":
            outer = div(ONE, power(Call("cos", a), Const(2.0)))
        elif f == "exp":
            outer = node
        elif f == "log":
            return div(da, a)
        elif f == "sqrt":
            return div(da, simplify_mul(Const(2.0), node))
        else:  # pragma: no cover - the parser rejects unknown functions
            raise ValueError(f"unknown function {f}")
        return simplify_mul(outer, da)
    a, b, op = node.left, node.right, node.op
    da, db = diff(a, name), diff(b, name)
    if op == "+":
        return simplify_add(da, db)
    if op == "-":
        return sub(da, db)
    if op == "*":
        return simplify_add(simplify_mul(da, b), simplify_mul(a, db))
    if op == "/":
        return sub(div(da, b), div(simplify_mul(a, db), power(b, Const(2.0))))
    # power
    if _is(db, 0.0):
        if _is(da, 0.0):
            return ZERO
        if isinstance(b, Const):
            reduced = power(a, Const(b.value - 1.0))
        else:
            reduced = power(a, sub(b, ONE))
        return simplify_mul(simplify_mul(b, reduced), da)
    # a^b with varying exponent: a^b (b' log a + b a' / a)
    inner = simplify_add(simplify_mul(db, Call("log", a)), div(simplify_mul(b, da), a))
    return simplify_mul(node, inner)


# -- compiled stage derivatives ---------------------------------------------------


class _Table:
    """A fixed-shape array whose entries are constants or float closures."""

    def __init__(self, nodes, shape, binding):
        self.base = np.zeros(shape)
        self.live = []
        flat = self.base.reshape(-1)
        for idx, node in enumerate(nodes):
            if isinstance(node, Const):
                flat[idx] = node.value
                continue
            f = compile_expr(node, binding)
            if variables(node) <= set(binding.parameters):
                flat[idx] = float(f(()))
            else:
                self.live.append((idx, f))

    def __call__(self, vals):
        if not self.live:
            return self.base
        out = self.base.copy()
        flat = out.reshape(-1)
        for idx, f in self.live:
            flat[idx] = f(vals)
        return out


@dataclass
class StageTape:
    """Derivatives needed by one constrained stage solve, as float closures."""

    n: int
    k: int
    m: int
    L: object
    dLdq: _Table
    dLdv: _Table
    hess_qv: _Table  # (n, nk)
    hess_vv: _Table  # (nk, nk)
    phi: _Table
    dphi: _Table  # (m, N)

    def evaluate(self, x):
        vals = x.tolist()
        try:
            out = (
                float(self.L(vals)),
                self.dLdq(vals),
                self.dLdv(vals),
                self.hess_qv(vals),
                self.hess_vv(vals),
                self.phi(vals),
                self.dphi(vals),
            )
        except (OverflowError, ZeroDivisionError, ValueError) as exc:
            raise EvaluationDomainError(f"stage derivative evaluation failed: {exc}", 0.0) from exc
        return out


def stage_tape(model) -> StageTape:
    """Differentiate the Lagrangian and constraints of ``model`` once."""
    names = model.names
    n, k, m = model.n, model.k, model.m
    qn, vn = names[:n], names[n:]
    L = model.lagrangian
    gq = [diff(L, a) for a in qn]
    gv = [diff(L, a) for a in vn]
    hqv = [diff(g, b) for g in gq for b in vn]
    hvv = [diff(g, b) for g in gv for b in vn]
    phis = list(model.constraints)
    dph = [diff(c, a) for c in phis for a in names]
    b = model.binding
    return StageTape(
        n,
        k,
        m,
        compile_expr(L, b),
        _Table(gq, (n,), b),
        _Table(gv, (n * k,), b),
        _Table(hqv, (n, n * k), b),
        _Table(hvv, (n * k, n * k), b),
        _Table(phis, (m,), b),
        _Table(dph, (m, model.dim), b),
    )
