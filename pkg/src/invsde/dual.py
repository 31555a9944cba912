"""Forward-mode dual numbers that nest.

A :class:`Dual` carries a value and a single tangent.  Both parts may be
floats, numpy arrays or further duals, which gives second derivatives by
running one forward pass inside another.  No level tags are kept: callers
must wrap *every* input of a pass at the same level (see
:mod:`invsde.autodiff`), otherwise perturbations of different levels mix.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "primal",
    "sin",
    "cos",
    "sinh",
    "cosh",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "absolute",
    "power",
]


class Dual:
    __slots__ = ("val", "der")
    # make numpy defer to our reflected operators instead of building
    # object arrays
    __array_ufunc__ = None

    def __init__(self, val, der=0.0):
        self.val = val
        self.der = der

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.der!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.val * other.der + self.der * other.val)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.der - q * other.der) / other.val)
        return Dual(self.val / other, self.der / other)

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, -q * self.der / self.val)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self


def primal(x):
    """Innermost value of a (possibly nested) dual."""
    while isinstance(x, Dual):
        x = x.val
    return x


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.val), cos(x.val) * x.der)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.val), -sin(x.val) * x.der)
    return np.cos(x)


def sinh(x):
    if isinstance(x, Dual):
        return Dual(sinh(x.val), cosh(x.val) * x.der)
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Dual):
        return Dual(cosh(x.val), sinh(x.val) * x.der)
    return np.cosh(x)


def tanh(x):
    if isinstance(x, Dual):
        th = tanh(x.val)
        return Dual(th, (1.0 - th * th) * x.der)
    return np.tanh(x)


def exp(x):
    if isinstance(x, Dual):
        ex = exp(x.val)
        return Dual(ex, ex * x.der)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.val), x.der / x.val)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        return Dual(r, x.der / (2.0 * r))
    return np.sqrt(x)


def _sign(x):
    if isinstance(x, Dual):
        return np.sign(primal(x))
    return np.sign(x)


def absolute(x):
    if isinstance(x, Dual):
        return Dual(absolute(x.val), _sign(x.val) * x.der)
    return np.abs(x)


def power(x, p: float):
    """``x ** p`` for a constant real exponent ``p``."""
    if isinstance(x, Dual):
        return Dual(power(x.val, p), p * power(x.val, p - 1.0) * x.der)
    return np.power(x, p)
