"""Scalar expressions in ``t`` and ``x1 ... xn``.

The grammar is deliberately small::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 't' | 'x<i>' | FUNC '(' expr ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-x1^2`` is ``-(x1^2)``) and is
right-associative.  Evaluation is generic over the scalar kind: floats,
numpy arrays (a batch of points) and :class:`~invsde.dual.Dual` numbers all
go through the same code path.
"""

from __future__ import annotations

import contextlib
import contextvars
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import dual as dm
from .errors import BindingError, EvaluationError, LexError, ParseError

__all__ = [
    "Token",
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "FUNCTIONS",
    "tokenize",
    "parse",
    "evaluate",
    "free_variables",
    "pretty_print",
    "bind",
    "lenient",
]

FUNCTIONS = ("sin", "cos", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs")

_FUNC_IMPL = {
    "sin": dm.sin,
    "cos": dm.cos,
    "sinh": dm.sinh,
    "cosh": dm.cosh,
    "tanh": dm.tanh,
    "exp": dm.exp,
    "ln": dm.log,
    "sqrt": dm.sqrt,
    "abs": dm.absolute,
}

# exponents up to this magnitude are expanded into repeated products
MAX_UNROLLED_POWER = 8

_STRICT: contextvars.ContextVar[bool] = contextvars.ContextVar("invsde_strict", default=True)


@contextlib.contextmanager
def lenient() -> Iterator[None]:
    """Let domain violations yield NaN instead of raising.

    Used by the batch integrators so one bad trajectory is marked as aborted
    instead of taking the whole batch down.
    """
    token = _STRICT.set(False)
    try:
        with np.errstate(all="ignore"):
            yield
    finally:
        _STRICT.reset(token)


# ---------------------------------------------------------------- lexing


@dataclass(frozen=True)
class Token:
    kind: str  # 'num', 'ident', 'op', 'lparen', 'rparen', 'comma', 'end'
    text: str
    offset: int

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, @{self.offset})"


_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens; whitespace is dropped.

    Raises :class:`LexError` with the offending offset for characters that
    are not part of the grammar.
    """
    if not source or not source.strip():
        raise LexError("empty expression", 0)
    tokens = []
    pos = 0
    while pos < len(source):
        ch = source[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch.isdigit() or (ch == "." and pos + 1 < len(source) and source[pos + 1].isdigit()):
            m = _NUMBER_RE.match(source, pos)
            tokens.append(Token("num", m.group(0), pos))
            pos = m.end()
        elif ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(source, pos)
            tokens.append(Token("ident", m.group(0), pos))
            pos = m.end()
        elif ch in "+-*/^":
            tokens.append(Token("op", ch, pos))
            pos += 1
        elif ch == "(":
            tokens.append(Token("lparen", ch, pos))
            pos += 1
        elif ch == ")":
            tokens.append(Token("rparen", ch, pos))
            pos += 1
        elif ch == ",":
            tokens.append(Token("comma", ch, pos))
            pos += 1
        else:
            raise LexError(f"unexpected character {ch!r}", pos)
    return tokens


# ---------------------------------------------------------------- AST


class Expr:
    """Base class of expression nodes.  Nodes are immutable and hashable."""

    __slots__ = ()

    def _eval(self, t, x):
        raise NotImplementedError

    def __str__(self) -> str:
        return pretty_print(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def _eval(self, t, x):
        return self.value


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 0 is t, i >= 1 is x_i

    def _eval(self, t, x):
        if self.index == 0:
            return t
        return x[self.index - 1]

    @property
    def name(self) -> str:
        return "t" if self.index == 0 else f"x{self.index}"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr

    def _eval(self, t, x):
        return -self.operand._eval(t, x)


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, t, x):
        a = self.left._eval(t, x)
        if self.op == "^":
            return _power(self, a, t, x)
        b = self.right._eval(t, x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if _STRICT.get() and np.any(dm.primal(b) == 0):
            raise EvaluationError("division by zero", self)
        return a / b


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr

    def _eval(self, t, x):
        a = self.arg._eval(t, x)
        if _STRICT.get():
            p = dm.primal(a)
            if self.func == "ln" and np.any(p <= 0):
                raise EvaluationError("logarithm of a non-positive value", self)
            if self.func == "sqrt" and np.any(p < 0):
                raise EvaluationError("square root of a negative value", self)
        return _FUNC_IMPL[self.func](a)


def _power(node: BinOp, base, t, x):
    exp_node = node.right
    if isinstance(exp_node, Neg) and isinstance(exp_node.operand, Const):
        p = -exp_node.operand.value
    elif isinstance(exp_node, Const):
        p = exp_node.value
    else:
        b = exp_node._eval(t, x)
        if not isinstance(b, dm.Dual) and np.ndim(b) == 0:
            return _power(BinOp("^", node.left, Const(float(b))), base, t, x)
        # exponent varies: a^b = exp(b ln a)
        if _STRICT.get() and np.any(dm.primal(base) <= 0):
            raise EvaluationError("non-positive base with a variable exponent", node)
        return dm.exp(b * dm.log(base))
    if float(p).is_integer() and abs(p) <= MAX_UNROLLED_POWER:
        k = int(p)
        if k == 0:
            return 1.0 + 0.0 * base
        result = base
        for _ in range(abs(k) - 1):
            result = result * base
        if k < 0:
            if _STRICT.get() and np.any(dm.primal(base) == 0):
                raise EvaluationError("division by zero in negative power", node)
            result = 1.0 / result
        return result
    if _STRICT.get():
        pb = dm.primal(base)
        if float(p).is_integer():
            if p < 0 and np.any(pb == 0):
                raise EvaluationError("division by zero in negative power", node)
        elif np.any(pb < 0) or (p < 0 and np.any(pb == 0)):
            raise EvaluationError("fractional power of a negative value", node)
    return dm.power(base, p)


# ---------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.tokens.append(Token("end", "", len(source)))
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _fail(self, expected):
        tok = self.tok
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ParseError(f"unexpected {found}", tok.offset, frozenset(expected))

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._advance()
            return Const(float(tok.text))
        if tok.kind == "lparen":
            self._advance()
            node = self.expr()
            if self.tok.kind != "rparen":
                self._fail({")"})
            self._advance()
            return node
        if tok.kind == "ident":
            name = tok.text
            if name == "t":
                self._advance()
                return Var(0)
            m = re.fullmatch(r"x([1-9]\d*)", name)
            if m:
                self._advance()
                return Var(int(m.group(1)))
            if name in FUNCTIONS:
                self._advance()
                if self.tok.kind != "lparen":
                    self._fail({"("})
                self._advance()
                if self.tok.kind == "rparen":
                    self._fail({"number", "variable", "function", "(", "-"})
                arg = self.expr()
                if self.tok.kind != "rparen":
                    self._fail({")"})
                self._advance()
                return Call(name, arg)
            raise ParseError(f"unknown identifier {name!r}", tok.offset,
                             frozenset({"t", "x<i>", *FUNCTIONS}))
        self._fail({"number", "variable", "function", "(", "-"})


def parse(source: str) -> Expr:
    """Parse expression text into an immutable AST."""
    return _Parser(source).parse()


# ---------------------------------------------------------------- queries


def _walk(e: Expr):
    yield e
    if isinstance(e, Neg):
        yield from _walk(e.operand)
    elif isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)
    elif isinstance(e, Call):
        yield from _walk(e.arg)


def free_variables(e: Expr) -> tuple[frozenset[int], bool]:
    """Return ``(indices, has_t)``: the x indices present and whether t occurs."""
    indices = set()
    has_t = False
    for node in _walk(e):
        if isinstance(node, Var):
            if node.index == 0:
                has_t = True
            else:
                indices.add(node.index)
    return frozenset(indices), has_t


def bind(e: Expr, n: int) -> Expr:
    """Check that every ``x<i>`` in ``e`` satisfies ``1 <= i <= n``."""
    indices, _ = free_variables(e)
    bad = sorted(i for i in indices if i > n)
    if bad:
        raise BindingError(f"variable x{bad[0]} exceeds the system dimension n={n}")
    return e


def evaluate(e: Expr, t, x: Sequence) -> object:
    """Evaluate ``e`` at time ``t`` and state ``x``.

    ``x`` may hold floats, arrays (evaluated elementwise) or dual numbers.
    Domain errors raise :class:`EvaluationError` carrying the offending node,
    unless inside :func:`lenient`.
    """
    return e._eval(t, x)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_UNARY = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _format_number(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC_POW if e.op == "^" else _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_UNARY
    if isinstance(e, Const) and e.value < 0:
        return _PREC_UNARY
    return _PREC_ATOM


def pretty_print(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed to parse back to ``e``."""
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({pretty_print(e.arg)})"
    if isinstance(e, Neg):
        inner = pretty_print(e.operand)
        if _prec(e.operand) < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    op = e.op
    left, right = pretty_print(e.left), pretty_print(e.right)
    if op == "^":
        # the base must be atomic; the exponent may be a unary or power
        if _prec(e.left) <= _PREC_POW:
            left = f"({left})"
        if _prec(e.right) < _PREC_UNARY:
            right = f"({right})"
        return f"{left}^{right}"
    p = _PREC[op]
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    sep = " " if p == 1 else ""
    return f"{left}{sep}{op}{sep}{right}"
