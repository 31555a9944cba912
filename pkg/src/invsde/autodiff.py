"""Gradients, Jacobians and Jacobian-vector products by forward mode.

Fields are either a sequence of :class:`~invsde.expr.Expr` or a callable
``field(t, x) -> sequence`` that is itself written against generic scalars
(so it can be pushed through dual numbers).  The callable form is what lets
synthesized diffusion columns, which already contain first derivatives of
the first integral, be differentiated once more.
"""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .dual import Dual
from .expr import Expr, evaluate

__all__ = [
    "as_field",
    "gradient",
    "gradient_generic",
    "jacobian",
    "jacvec",
    "jvp_generic",
]

Field = Union[Sequence[Expr], Callable]


def as_field(F: Field) -> Callable:
    """Turn a sequence of expressions into a ``(t, x) -> list`` callable."""
    if callable(F):
        return F
    exprs = tuple(F)
    return lambda t, x: [evaluate(e, t, x) for e in exprs]


def _tangent(v):
    return v.der if isinstance(v, Dual) else 0.0 * v


def gradient_generic(f: Expr, t, x: Sequence, with_time: bool = True):
    """``(df/dt, [df/dx_i])`` for generic scalars (floats, arrays, duals).

    Every input is wrapped at the same dual level on each pass.
    """
    n = len(x)
    g0 = 0.0
    if with_time:
        xs = [Dual(xi, 0.0) for xi in x]
        g0 = _tangent(evaluate(f, Dual(t, 1.0), xs))
    tt = Dual(t, 0.0)
    G = []
    for k in range(n):
        xs = [Dual(xi, 1.0 if i == k else 0.0) for i, xi in enumerate(x)]
        G.append(_tangent(evaluate(f, tt, xs)))
    return g0, G


def gradient(f: Expr, t: float, x) -> tuple[float, np.ndarray]:
    """Partial derivatives of ``f`` at a point: ``(df/dt, grad_x f)``."""
    x = [float(v) for v in np.asarray(x, dtype=float)]
    g0, G = gradient_generic(f, float(t), x)
    return float(g0), np.array([float(g) for g in G])


def jvp_generic(F: Field, t, x: Sequence, v: Sequence) -> list:
    """``(dF/dx) v`` with one dual pass seeded by ``v``; generic scalars."""
    field = as_field(F)
    xs = [Dual(xi, vi) for xi, vi in zip(x, v)]
    out = field(Dual(t, 0.0), xs)
    return [_tangent(c) if isinstance(c, Dual) else 0.0 * c for c in out]


def jacvec(F: Field, t: float, x, v) -> np.ndarray:
    """Jacobian-vector product ``(dF/dx) v`` at a point."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape:
        raise ValueError(f"v has shape {v.shape}, expected {x.shape}")
    out = jvp_generic(F, float(t), list(x), list(v))
    return np.array([float(c) for c in out])


def jacobian(F: Field, t: float, x) -> np.ndarray:
    """Matrix with entry ``(i, j) = dF_i/dx_j``; one pass per column."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = [jacvec(F, t, x, np.eye(n)[j]) for j in range(n)]
    J = np.column_stack(cols) if cols else np.zeros((0, 0))
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entry")
    return J
