"""Forward-mode dual numbers and the derivative helpers built on them.

A :class:`Dual` carries a real part and an infinitesimal part with
``eps**2 == 0``.  Every derivative call draws a fresh *tag*; when two duals
with different tags meet in an operation, the one with the higher tag is
expanded and the other is treated as a constant at that level.  This lets a
derivative be taken of a function that itself takes derivatives (the Newton
matrix of the Pontryagin system needs exactly that) without perturbation
confusion.

All scalar functions in this module (:func:`sin`, :func:`ln`, :func:`power`,
...) accept plain floats and duals alike, so expression evaluation runs the
same code path for both.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

_tags = itertools.count(1)


class Dual:
    """Number ``real + infinitesimal * eps`` belonging to derivative level ``tag``."""

    __slots__ = ("real", "infinitesimal", "tag")
    # keep numpy scalars from swallowing duals into object arrays
    __array_ufunc__ = None

    def __init__(self, real, infinitesimal=0.0, tag=0):
        self.real = real
        self.infinitesimal = infinitesimal
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.real!r}, {self.infinitesimal!r}, tag={self.tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __neg__(self):
        return Dual(-self.real, -self.infinitesimal, self.tag)

    def __pos__(self):
        return self

    def __abs__(self):
        return absolute(self)

    def __float__(self):
        return float(primal(self))


def new_tag() -> int:
    return next(_tags)


def primal(v) -> float:
    """Innermost real value of a (possibly nested) dual."""
    while isinstance(v, Dual):
        v = v.real
    return v


def _is_zero(v) -> bool:
    return not isinstance(v, Dual) and v == 0


def _split(a, b):
    ta = a.tag if isinstance(a, Dual) else 0
    tb = b.tag if isinstance(b, Dual) else 0
    t = max(ta, tb)
    if ta == t:
        ar, ai = a.real, a.infinitesimal
    else:
        ar, ai = a, 0.0
    if tb == t:
        br, bi = b.real, b.infinitesimal
    else:
        br, bi = b, 0.0
    return t, ar, ai, br, bi


def add(a, b):
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return a + b
    t, ar, ai, br, bi = _split(a, b)
    return Dual(add(ar, br), add(ai, bi), t)


def sub(a, b):
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return a - b
    t, ar, ai, br, bi = _split(a, b)
    return Dual(sub(ar, br), sub(ai, bi), t)


def mul(a, b):
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return a * b
    t, ar, ai, br, bi = _split(a, b)
    return Dual(mul(ar, br), add(mul(ar, bi), mul(ai, br)), t)


def div(a, b):
    if primal(b) == 0:
        raise DomainError("division by zero")
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return a / b
    t, ar, ai, br, bi = _split(a, b)
    q = div(ar, br)
    return Dual(q, div(sub(ai, mul(q, bi)), br), t)


def neg(a):
    return -a


def _pow_float(a, b):
    if a < 0 and b != math.floor(b):
        raise DomainError(f"negative base {a!r} raised to non-integer power {b!r}")
    if a == 0 and b < 0:
        raise DomainError("division by zero (zero raised to a negative power)")
    try:
        return a**b
    except OverflowError:
        raise DomainError(f"overflow in {a!r}^{b!r}") from None


def power(a, b):
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return _pow_float(a, b)
    t, ar, ai, br, bi = _split(a, b)
    val = power(ar, br)
    d = 0.0
    if not _is_zero(ai) and not _is_zero(br):
        d = mul(mul(br, power(ar, sub(br, 1.0))), ai)
    if not _is_zero(bi):
        d = add(d, mul(mul(ln(ar), val), bi))
    return Dual(val, d, t)


def sin(v):
    if isinstance(v, Dual):
        return Dual(sin(v.real), mul(cos(v.real), v.infinitesimal), v.tag)
    return math.sin(v)


def cos(v):
    if isinstance(v, Dual):
        return Dual(cos(v.real), mul(neg(sin(v.real)), v.infinitesimal), v.tag)
    return math.cos(v)


def exp(v):
    if isinstance(v, Dual):
        e = exp(v.real)
        return Dual(e, mul(e, v.infinitesimal), v.tag)
    try:
        return math.exp(v)
    except OverflowError:
        raise DomainError(f"overflow in exp({v!r})") from None


def ln(v):
    if primal(v) <= 0:
        raise DomainError(f"ln of non-positive value {primal(v)!r}")
    if isinstance(v, Dual):
        return Dual(ln(v.real), div(v.infinitesimal, v.real), v.tag)
    return math.log(v)


def sqrt(v):
    p = primal(v)
    if p < 0:
        raise DomainError(f"sqrt of negative value {p!r}")
    if isinstance(v, Dual):
        root = sqrt(v.real)
        if _is_zero(v.infinitesimal):
            return Dual(root, 0.0, v.tag)
        if p == 0:
            raise DomainError("sqrt is not differentiable at 0")
        return Dual(root, div(v.infinitesimal, mul(2.0, root)), v.tag)
    return math.sqrt(v)


def absolute(v):
    """|v|; the derivative at 0 is taken to be 0."""
    if isinstance(v, Dual):
        p = primal(v)
        sign = 1.0 if p > 0 else (-1.0 if p < 0 else 0.0)
        return Dual(absolute(v.real), mul(sign, v.infinitesimal), v.tag)
    return abs(v)


def clamp(v, lo: float, hi: float):
    """Projection of ``v`` onto ``[lo, hi]``; constant outside the interval."""
    p = primal(v)
    if p < lo:
        return lo
    if p > hi:
        return hi
    return v


FUNCTIONS: dict[str, Callable] = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "ln": ln,
    "sqrt": sqrt,
    "abs": absolute,
}


def tangent(y, tag: int):
    """Infinitesimal part of ``y`` at level ``tag`` (0 if ``y`` does not depend on it)."""
    if isinstance(y, Dual):
        if y.tag == tag:
            return y.infinitesimal
        if y.tag > tag:
            raise ValueError("dual number escaped from an inner derivative")
    return 0.0


def _strip(y, tag: int):
    if isinstance(y, Dual) and y.tag == tag:
        return y.real
    return y


def _vector(values):
    if any(isinstance(v, Dual) for v in values):
        return list(values)
    return np.asarray(values, dtype=float)


def jvp(F: Callable, point: Sequence, direction: Sequence):
    """Value and directional derivative of a vector function in one pass.

    Returns ``(values, tangents)``.  Both are float arrays unless the inputs
    themselves carry duals of an enclosing derivative.
    """
    if len(point) != len(direction):
        raise ValueError("point and direction must have the same length")
    tag = new_tag()
    args = [Dual(p, d, tag) for p, d in zip(point, direction)]
    out = F(args)
    return _vector([_strip(y, tag) for y in out]), _vector([tangent(y, tag) for y in out])


def directional_derivative(f: Callable, point: Sequence, direction: Sequence):
    """grad f(point) . direction, computed with a single dual pass."""
    if len(point) != len(direction):
        raise ValueError("point and direction must have the same length")
    tag = new_tag()
    args = [Dual(p, d, tag) for p, d in zip(point, direction)]
    return tangent(f(args), tag)


def gradient(f: Callable, point: Sequence):
    n = len(point)
    parts = []
    for j in range(n):
        tag = new_tag()
        args = [Dual(p, 1.0 if i == j else 0.0, tag) for i, p in enumerate(point)]
        parts.append(tangent(f(args), tag))
    return _vector(parts)


def jacobian(F: Callable, point: Sequence):
    """Matrix whose row i is the gradient of component i of ``F``."""
    n = len(point)
    columns = []
    for j in range(n):
        tag = new_tag()
        args = [Dual(p, 1.0 if i == j else 0.0, tag) for i, p in enumerate(point)]
        columns.append([tangent(y, tag) for y in F(args)])
    if not columns:
        m = len(F(list(point)))
        return np.zeros((m, 0))
    rows = [list(r) for r in zip(*columns)]
    if any(isinstance(v, Dual) for r in rows for v in r):
        return rows
    return np.asarray(rows, dtype=float).reshape(len(rows), n)


def fd_derivative(f: Callable, point: Sequence, direction: Sequence, h: float = 1e-6) -> float:
    """Central-difference approximation of the directional derivative."""
    p = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    return (f(list(p + h * d)) - f(list(p - h * d))) / (2.0 * h)
