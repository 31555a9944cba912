"""Closed-form coefficient text via sympy.

Simulation never goes through this module; it exists so synthesized
systems can be printed and saved as plain expressions.  The derivation
mirrors :mod:`invsde.synthesis` but with symbolic differentiation, which
also makes it an independent check on the dual-number path.
"""

from __future__ import annotations

import sympy as sp

from . import geometry
from .expr import BinOp, Call, Const, Expr, Neg, Var, parse, pretty_print
from .synthesis import CoefficientChoice, InvariantSpec

__all__ = ["to_sympy", "from_sympy", "symbolic_coefficients", "coefficient_text", "symbols"]

_TO_SYMPY = {
    "sin": sp.sin, "cos": sp.cos, "sinh": sp.sinh, "cosh": sp.cosh, "tanh": sp.tanh,
    "exp": sp.exp, "ln": sp.log, "sqrt": sp.sqrt, "abs": sp.Abs,
}
_FROM_SYMPY = {
    sp.sin: "sin", sp.cos: "cos", sp.sinh: "sinh", sp.cosh: "cosh", sp.tanh: "tanh",
    sp.exp: "exp", sp.log: "ln", sp.Abs: "abs",
}


def symbols(n: int):
    """``(t, [x1, ..., xn])`` as real sympy symbols."""
    t = sp.Symbol("t", real=True)
    return t, [sp.Symbol(f"x{i}", real=True) for i in range(1, n + 1)]


def to_sympy(e: Expr, t, x):
    if isinstance(e, Const):
        v = e.value
        return sp.Integer(int(v)) if float(v).is_integer() else sp.Float(repr(v), 17)
    if isinstance(e, Var):
        return t if e.index == 0 else x[e.index - 1]
    if isinstance(e, Neg):
        return -to_sympy(e.operand, t, x)
    if isinstance(e, Call):
        return _TO_SYMPY[e.func](to_sympy(e.arg, t, x))
    a, b = to_sympy(e.left, t, x), to_sympy(e.right, t, x)
    return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "/": lambda: a / b, "^": lambda: a ** b}[e.op]()


def _number(v) -> Expr:
    if v.is_Rational and not v.is_Integer:
        node = BinOp("/", Const(float(abs(v.p))), Const(float(v.q)))
    else:
        node = Const(float(abs(v)))
    return Neg(node) if v < 0 else node


def _product(factors) -> Expr:
    out = factors[0]
    for f in factors[1:]:
        out = BinOp("*", out, f)
    return out


def from_sympy(v) -> Expr:
    """Convert a sympy expression to an :class:`Expr` of this grammar."""
    if v.is_Number:
        return _number(v)
    if v.is_Symbol:
        name = v.name
        return Var(0) if name == "t" else Var(int(name[1:]))
    if v.is_Add:
        terms = list(v.as_ordered_terms())
        out = from_sympy(terms[0])
        for term in terms[1:]:
            if term.could_extract_minus_sign():
                out = BinOp("-", out, from_sympy(-term))
            else:
                out = BinOp("+", out, from_sympy(term))
        return out
    if v.is_Mul:
        if v.could_extract_minus_sign():
            return Neg(from_sympy(-v))
        num, den = sp.fraction(v)
        if den != 1:
            return BinOp("/", from_sympy(num), from_sympy(den))
        return _product([from_sympy(f) for f in v.as_ordered_factors()])
    if v.is_Pow:
        base, ex = v.args
        if ex == sp.Rational(1, 2):
            return Call("sqrt", from_sympy(base))
        if ex.is_Number and ex < 0:
            return BinOp("/", Const(1.0), from_sympy(base ** -ex))
        return BinOp("^", from_sympy(base), from_sympy(ex))
    if isinstance(v, sp.sign):
        arg = from_sympy(v.args[0])
        return BinOp("/", arg, Call("abs", arg))
    func = _FROM_SYMPY.get(v.func)
    if func is None:
        raise ValueError(f"cannot express {v} in the expression grammar")
    return Call(func, from_sympy(v.args[0]))


def symbolic_coefficients(spec: InvariantSpec, choice: CoefficientChoice, simplify: bool = True) -> dict:
    """Stratonovich drift ``a``, Ito drift ``f``, correction ``Sigma`` and
    diffusion columns ``sigma`` as sympy expressions."""
    n = spec.n
    t, x = symbols(n)
    M = to_sympy(spec.M, t, x)
    g = [sp.diff(M, xi) for xi in x]
    g0 = sp.diff(M, t)
    vecs = spec.vectors(g)

    def combine(l, base=None):
        acc = list(base) if base is not None else [sp.Integer(0)] * n
        for j, e in choice.column(l):
            w = to_sympy(e, t, x)
            acc = [a + w * v for a, v in zip(acc, vecs[j - 1])]
        return acc

    sigma = [combine(l) for l in range(1, choice.s + 1)]
    base = geometry.normal_shift(g0, g, spec.pivot) if spec.time_dependent else None
    a = combine(0, base)
    Sigma = [sp.Integer(0)] * n
    for col in sigma:
        J = sp.Matrix(col).jacobian(x)
        Sigma = [S + sp.Rational(1, 2) * d for S, d in zip(Sigma, J * sp.Matrix(col))]
    f = [ai + Si for ai, Si in zip(a, Sigma)]
    out = {"a": a, "f": f, "Sigma": Sigma, "sigma": sigma}
    if simplify:
        out = {k: [_tidy(c) for c in v] if k != "sigma" else [[_tidy(c) for c in col] for col in v]
               for k, v in out.items()}
    return out


def _tidy(v):
    v = sp.nsimplify(v, rational=False) if v.has(sp.Float) else v
    return sp.simplify(v)


def coefficient_text(spec: InvariantSpec, choice: CoefficientChoice) -> dict:
    """Same as :func:`symbolic_coefficients` but rendered as expression text.

    Every string parses back with :func:`invsde.expr.parse`.
    """
    coeffs = symbolic_coefficients(spec, choice)
    text = {}
    for key, value in coeffs.items():
        if key == "sigma":
            text[key] = [[pretty_print(from_sympy(c)) for c in col] for col in value]
        else:
            text[key] = [pretty_print(from_sympy(c)) for c in value]
    for s in text["a"] + text["f"]:
        parse(s)
    return text
