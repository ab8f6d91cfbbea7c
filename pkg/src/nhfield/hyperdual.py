"""Hyper-dual numbers: exact first and second derivatives by forward mode.

A hyper-dual number is ``a + b e1 + c e2 + d e1 e2`` with ``e1**2 = e2**2 = 0``.
Seeding ``x_i`` with ``d1 = 1`` and ``x_j`` with ``d2 = 1`` leaves
``df/dx_i`` in ``d1``, ``df/dx_j`` in ``d2`` and ``d2f/dx_i dx_j`` in ``d12``.

The four components may be floats or equally shaped numpy arrays; the array
form evaluates many seedings (or many points) in one pass over an expression.
"""

import math

import numpy as np

from .errors import EvaluationDomainError

__all__ = [
    "HyperDual",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "FUNCTIONS",
]


def _any(x):
    return bool(np.any(x))


def _first(x, mask):
    """Offending value for error messages: a float even for array inputs."""
    if np.ndim(x) == 0:
        return float(x)
    return float(np.asarray(x)[np.asarray(mask)].flat[0])


def _z(x):
    # a plain 0.0 marks a derivative part that is structurally zero
    return type(x) is float and x == 0.0


def _mul(x, y):
    if _z(x) or _z(y):
        return 0.0
    return x * y


def _add(x, y):
    if _z(x):
        return y
    if _z(y):
        return x
    return x + y


def _sub(x, y):
    if _z(y):
        return x
    if _z(x):
        return -y
    return x - y


def _neg(x):
    return 0.0 if _z(x) else -x


class HyperDual:
    __slots__ = ("real", "d1", "d2", "d12")

    def __init__(self, real, d1=0.0, d2=0.0, d12=0.0):
        self.real = real
        self.d1 = d1
        self.d2 = d2
        self.d12 = d12

    def __repr__(self):
        return f"HyperDual({self.real!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"

    def as_tuple(self):
        return (self.real, self.d1, self.d2, self.d12)

    # chain rule through second order for a scalar function g with derivatives
    # g1 = g'(real), g2 = g''(real)
    def _apply(self, g0, g1, g2):
        return HyperDual(
            g0,
            _mul(g1, self.d1),
            _mul(g1, self.d2),
            _add(_mul(g1, self.d12), _mul(g2, _mul(self.d1, self.d2))),
        )

    def __neg__(self):
        return HyperDual(-self.real, _neg(self.d1), _neg(self.d2), _neg(self.d12))

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.real + other.real,
                _add(self.d1, other.d1),
                _add(self.d2, other.d2),
                _add(self.d12, other.d12),
            )
        return HyperDual(self.real + other, self.d1, self.d2, self.d12)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.real - other.real,
                _sub(self.d1, other.d1),
                _sub(self.d2, other.d2),
                _sub(self.d12, other.d12),
            )
        return HyperDual(self.real - other, self.d1, self.d2, self.d12)

    def __rsub__(self, other):
        return HyperDual(other - self.real, _neg(self.d1), _neg(self.d2), _neg(self.d12))

    def __mul__(self, other):
        if isinstance(other, HyperDual):
            ar, br = self.real, other.real
            a1, a2, a12 = self.d1, self.d2, self.d12
            b1, b2, b12 = other.d1, other.d2, other.d12
            z1 = type(a1) is float and a1 == 0.0
            z2 = type(a2) is float and a2 == 0.0
            w1 = type(b1) is float and b1 == 0.0
            w2 = type(b2) is float and b2 == 0.0
            if z1 and z2 and type(a12) is float and a12 == 0.0:
                # self is a plain constant
                return HyperDual(ar * br, _mul(ar, b1), _mul(ar, b2), _mul(ar, b12))
            if w1 and w2 and type(b12) is float and b12 == 0.0:
                return HyperDual(ar * br, _mul(a1, br), _mul(a2, br), _mul(a12, br))
            d1 = a1 * br if w1 else (b1 * ar if z1 else ar * b1 + a1 * br)
            d2 = a2 * br if w2 else (b2 * ar if z2 else ar * b2 + a2 * br)
            d12 = _add(_add(_mul(ar, b12), _mul(a12, br)), _add(_mul(a1, b2), _mul(a2, b1)))
            return HyperDual(ar * br, d1, d2, d12)
        return HyperDual(self.real * other, _mul(self.d1, other), _mul(self.d2, other), _mul(self.d12, other))

    __rmul__ = __mul__

    def square(self):
        r = self.real
        t = 2.0 * r
        return HyperDual(
            r * r,
            _mul(t, self.d1),
            _mul(t, self.d2),
            _add(_mul(t, self.d12), _mul(2.0, _mul(self.d1, self.d2))),
        )

    def reciprocal(self):
        r = self.real
        if _any(r == 0):
            raise EvaluationDomainError("division by zero real part", _first(r, r == 0))
        inv = 1.0 / r
        return self._apply(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, HyperDual):
            return self * other.reciprocal()
        if _any(np.asarray(other) == 0):
            raise EvaluationDomainError("division by zero real part", 0.0)
        inv = 1.0 / other
        return self * inv

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, other):
        if isinstance(other, HyperDual):
            # a**b with varying exponent: exp(b log a), needs a > 0
            return exp(other * log(self))
        return _power(self, float(other))

    def __rpow__(self, other):
        base = float(other)
        if base <= 0:
            raise EvaluationDomainError("pow with non-positive base and non-constant exponent", base)
        return exp(self * math.log(base))


def _power(a, c):
    r = a.real
    if c == 0.0:
        return HyperDual(np.ones_like(r) if np.ndim(r) else 1.0, 0.0, 0.0, 0.0)
    if c == 1.0:
        return a
    if c == 2.0:
        return a.square()
    is_int = float(c).is_integer()
    if not is_int and _any(r <= 0):
        raise EvaluationDomainError("pow with non-integer exponent needs a positive base", _first(r, r <= 0))
    if is_int and c < 0 and _any(r == 0):
        raise EvaluationDomainError("pow with negative exponent at zero base", 0.0)
    g2 = c * (c - 1.0) * r ** (c - 2.0)
    g1 = c * r ** (c - 1.0)
    return a._apply(r**c, g1, g2)


def _real_power(x, c):
    c = float(c)
    if not c.is_integer() and _any(np.asarray(x) <= 0):
        raise EvaluationDomainError("pow with non-integer exponent needs a positive base", _first(x, np.asarray(x) <= 0))
    if c < 0 and _any(np.asarray(x) == 0):
        raise EvaluationDomainError("pow with negative exponent at zero base", 0.0)
    if c.is_integer():
        return x ** int(c) if np.ndim(x) == 0 else np.power(x, c)
    return x**c


def power(a, b):
    """``a ** b`` for any mix of reals and hyper-duals, with domain checks."""
    if type(a) is float and type(b) is float:
        if b.is_integer():
            if a == 0.0 and b < 0:
                raise EvaluationDomainError("pow with negative exponent at zero base", 0.0)
            return a ** int(b)
        if a <= 0:
            raise EvaluationDomainError("pow with non-integer exponent needs a positive base", a)
        return a**b
    if isinstance(a, HyperDual) or isinstance(b, HyperDual):
        if isinstance(a, HyperDual):
            return a**b
        return b.__rpow__(a)
    if isinstance(b, np.ndarray):
        if _any(np.asarray(a) <= 0):
            raise EvaluationDomainError("pow with array exponent needs a positive base", a)
        return np.power(a, b)
    return _real_power(a, b)


def _scalar(r):
    return type(r) is float


def sin(x):
    if type(x) is float:
        return math.sin(x)
    if isinstance(x, HyperDual):
        r = x.real
        if _scalar(r):
            s = math.sin(r)
            return x._apply(s, math.cos(r), -s)
        s = np.sin(r)
        return x._apply(s, np.cos(r), -s)
    return np.sin(x)


def cos(x):
    if type(x) is float:
        return math.cos(x)
    if isinstance(x, HyperDual):
        r = x.real
        if _scalar(r):
            c = math.cos(r)
            return x._apply(c, -math.sin(r), -c)
        c = np.cos(r)
        return x._apply(c, -np.sin(r), -c)
    return np.cos(x)


def tan(x):
    if type(x) is float:
        return math.tan(x)
    if isinstance(x, HyperDual):
        r = x.real
        t = math.tan(r) if _scalar(r) else np.tan(r)
        sec2 = 1.0 + t * t
        return x._apply(t, sec2, 2.0 * t * sec2)
    return np.tan(x)


def exp(x):
    if type(x) is float:
        try:
            return math.exp(x)
        except OverflowError:
            raise EvaluationDomainError("exp overflow", x) from None
    if isinstance(x, HyperDual):
        r = x.real
        e = math.exp(r) if _scalar(r) else np.exp(r)
        return x._apply(e, e, e)
    return np.exp(x)


def log(x):
    if type(x) is float:
        if x <= 0:
            raise EvaluationDomainError("log of non-positive value", x)
        return math.log(x)
    r = x.real if isinstance(x, HyperDual) else x
    bad = np.asarray(r) <= 0
    if _any(bad):
        raise EvaluationDomainError("log of non-positive value", _first(r, bad))
    if isinstance(x, HyperDual):
        inv = 1.0 / r
        return x._apply(math.log(r) if _scalar(r) else np.log(r), inv, -inv * inv)
    return np.log(x)


def sqrt(x):
    if type(x) is float:
        if x < 0:
            raise EvaluationDomainError("sqrt of negative value", x)
        return math.sqrt(x)
    r = x.real if isinstance(x, HyperDual) else x
    if isinstance(x, HyperDual):
        bad = np.asarray(r) <= 0
        if _any(bad):
            # derivative blows up at zero, so the hyper-dual domain is open
            raise EvaluationDomainError("sqrt of non-positive value", _first(r, bad))
        s = math.sqrt(r) if _scalar(r) else np.sqrt(r)
        return x._apply(s, 0.5 / s, -0.25 / (s * r))
    bad = np.asarray(r) < 0
    if _any(bad):
        raise EvaluationDomainError("sqrt of negative value", _first(r, bad))
    return np.sqrt(x)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
}
