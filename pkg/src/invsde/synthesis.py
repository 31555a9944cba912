"""Invariant SDE coefficients from a first integral and free functions.

Given ``M(t, x)`` and a table of functions ``u[j, l]``, the diffusion
columns are ``sigma_l = sum_j u[j, l] N_j`` and the Stratonovich drift is
``a = N_0 + sum_j u[j, 0] N_j`` where ``N_j`` span the hyperplane orthogonal
to ``grad_x M`` and ``N_0`` cancels ``dM/dt``.  The Ito drift adds the
correction ``Sigma = 1/2 sum_l (d sigma_l / dx) sigma_l``.

All coefficient functions take generic scalars, so the same closure is used
for one point, for a batch of trajectories (arrays) and under dual numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import geometry
from .autodiff import gradient, gradient_generic, jvp_generic
from .errors import DegenerateBasisError, SynthesisError
from .expr import Expr, bind, evaluate, free_variables, parse

__all__ = [
    "ITO",
    "STRATONOVICH",
    "InvariantSpec",
    "CoefficientChoice",
    "SdeSystem",
    "ResidualReport",
    "synthesize",
    "hand_entered",
    "build_diffusion",
    "build_stratonovich_drift",
    "build_ito_drift",
    "sigma_correction",
    "sigma_correction_generic",
    "convert_interpretation",
    "invariance_residuals",
    "stack_components",
]

ITO = "ito"
STRATONOVICH = "stratonovich"


def _as_expr(e) -> Expr:
    return parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class InvariantSpec:
    """First integral ``M`` of an ``n``-dimensional system and the basis to use."""

    n: int
    M: Expr
    basis_kind: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "M", bind(_as_expr(self.M), self.n))
        if self.n < 2:
            raise SynthesisError(f"need n >= 2, got {self.n}")
        indices, _ = free_variables(self.M)
        if not indices:
            raise SynthesisError("M must depend on the state (it is constant in x)")
        kind = self.basis_kind
        if kind == "auto":
            kind = geometry.default_kind(self.n)
        if kind == "general" and any(self.zero_mask):
            kind = "supplemented"
        if kind not in geometry.BASIS_KINDS or kind == "time_extended":
            raise SynthesisError(f"unknown basis kind {self.basis_kind!r}")
        if kind == "special" and self.n not in (2, 4, 8):
            raise SynthesisError(f"special basis needs n in (2, 4, 8), got n={self.n}")
        if kind == "projected" and self.n not in (3, 5, 6, 7):
            raise SynthesisError(f"projected basis needs n in (3, 5, 6, 7), got n={self.n}")
        object.__setattr__(self, "basis_kind", kind)

    @property
    def time_dependent(self) -> bool:
        return free_variables(self.M)[1]

    @property
    def zero_mask(self) -> tuple:
        indices, _ = free_variables(self.M)
        return tuple(i + 1 not in indices for i in range(self.n))

    @property
    def pivot(self) -> int:
        """Component carrying ``N_0``: the first one M depends on."""
        return self.zero_mask.index(False)

    @property
    def vector_count(self) -> int:
        """Number of tangent vectors the u table is indexed over."""
        if self.basis_kind == "projected":
            return len(geometry.projected_vectors([1.0] * self.n))
        return self.n - 1

    def vectors(self, g: Sequence) -> list[list]:
        kind = self.basis_kind
        if kind == "special":
            return geometry.special_vectors(g)
        if kind == "projected":
            return geometry.projected_vectors(g)
        if kind == "supplemented":
            return geometry.supplemented_vectors(g, self.zero_mask)
        return geometry.chain_vectors(g)


@dataclass(frozen=True)
class CoefficientChoice:
    """Free functions ``u[(j, l)]``: ``j`` indexes tangent vectors from 1,
    ``l = 0`` is the drift and ``l = 1 .. s`` the noise columns.  Missing
    entries are the zero function."""

    s: int
    u: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.s < 0:
            raise SynthesisError("noise count s must be non-negative")
        table = {}
        for key, e in dict(self.u).items():
            if isinstance(key, str):
                j, l = (int(p) for p in key.split(","))
            else:
                j, l = key
            if not 0 <= l <= self.s:
                raise SynthesisError(f"u[{j},{l}]: column index must be in 0..{self.s}")
            table[(j, l)] = _as_expr(e)
        object.__setattr__(self, "u", table)

    def validate(self, spec: InvariantSpec) -> None:
        k = spec.vector_count
        for (j, l), e in self.u.items():
            if not 1 <= j <= k:
                raise SynthesisError(f"u[{j},{l}]: vector index must be in 1..{k}")
            bind(e, spec.n)

    def column(self, l: int) -> list:
        return sorted((j, e) for (j, ll), e in self.u.items() if ll == l)

    def scaled(self, factor: float) -> "CoefficientChoice":
        from .expr import BinOp, Const

        return CoefficientChoice(self.s, {k: BinOp("*", Const(factor), e) for k, e in self.u.items()})


class SdeSystem:
    """An SDE ``dX = drift dt + sum_l diffusion_l dW_l`` in one interpretation.

    ``drift(t, x)`` returns n components, ``diffusion(t, x)`` returns s
    columns of n components; both accept generic scalars.
    """

    def __init__(self, n: int, s: int, interpretation: str, drift: Callable,
                 diffusion: Callable, M: Expr | None = None, provenance=None,
                 expressions: dict | None = None, name: str = ""):
        if interpretation not in (ITO, STRATONOVICH):
            raise SynthesisError(f"interpretation must be 'ito' or 'stratonovich', got {interpretation!r}")
        self.n = n
        self.s = s
        self.interpretation = interpretation
        self.drift = drift
        self.diffusion = diffusion
        self.M = M
        self.provenance = provenance
        self.expressions = expressions
        self.name = name

    def __repr__(self) -> str:
        origin = "synthesized" if self.provenance else "hand-entered"
        return f"SdeSystem(n={self.n}, s={self.s}, {self.interpretation}, {origin})"

    def column(self, l: int) -> Callable:
        return lambda t, x: self.diffusion(t, x)[l]

    def drift_at(self, t: float, x) -> np.ndarray:
        return np.array([float(c) for c in self.drift(float(t), [float(v) for v in x])])

    def diffusion_at(self, t: float, x) -> np.ndarray:
        """Diffusion matrix with shape ``(n, s)``."""
        cols = self.diffusion(float(t), [float(v) for v in x])
        return np.array([[float(c) for c in col] for col in cols]).reshape(self.s, self.n).T


def stack_components(components: Sequence, shape=()) -> np.ndarray:
    """Stack possibly-scalar components into an array of ``(len, *shape)``."""
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in components])


# ------------------------------------------------------------ synthesis


class _Coefficients:
    """Closures computing basis, diffusion and drift for one spec/choice."""

    def __init__(self, spec: InvariantSpec, choice: CoefficientChoice):
        self.spec = spec
        self.choice = choice
        self.drift_terms = choice.column(0)
        self.noise_terms = [choice.column(l) for l in range(1, choice.s + 1)]

    def frame(self, t, x, with_time=True):
        g0, g = gradient_generic(self.spec.M, t, x, with_time=with_time and self.spec.time_dependent)
        return g0, g, self.spec.vectors(g)

    def _combine(self, terms, vectors, t, x, base=None):
        n = self.spec.n
        acc = list(base) if base is not None else [0.0] * n
        for j, e in terms:
            w = evaluate(e, t, x)
            v = vectors[j - 1]
            acc = [a + w * vi for a, vi in zip(acc, v)]
        return acc

    def diffusion(self, t, x):
        _, _, vecs = self.frame(t, x, with_time=False)
        return [self._combine(terms, vecs, t, x) for terms in self.noise_terms]

    def stratonovich_drift(self, t, x):
        g0, g, vecs = self.frame(t, x)
        base = None
        if self.spec.time_dependent:
            base = geometry.normal_shift(g0, g, self.spec.pivot)
        return self._combine(self.drift_terms, vecs, t, x, base)


def synthesize(spec: InvariantSpec, choice: CoefficientChoice,
               interpretation: str = STRATONOVICH, name: str = "") -> SdeSystem:
    """Build the invariant system for ``spec`` and ``choice``."""
    choice.validate(spec)
    coeffs = _Coefficients(spec, choice)
    strat = SdeSystem(spec.n, choice.s, STRATONOVICH, coeffs.stratonovich_drift,
                      coeffs.diffusion, M=spec.M, provenance=(spec, choice), name=name)
    if interpretation == STRATONOVICH:
        return strat
    return convert_interpretation(strat, ITO)


def hand_entered(n: int, interpretation: str, drift: Sequence, diffusion: Sequence[Sequence],
                 M=None, name: str = "") -> SdeSystem:
    """System given directly by expressions; ``diffusion`` is a list of columns."""
    drift_e = [bind(_as_expr(e), n) for e in drift]
    cols = [[bind(_as_expr(e), n) for e in col] for col in diffusion]
    if len(drift_e) != n or any(len(c) != n for c in cols):
        raise SynthesisError(f"drift and every diffusion column need {n} components")

    def f(t, x):
        return [evaluate(e, t, x) for e in drift_e]

    def g(t, x):
        return [[evaluate(e, t, x) for e in col] for col in cols]

    M_e = bind(_as_expr(M), n) if M is not None else None
    return SdeSystem(n, len(cols), interpretation, f, g, M=M_e,
                     expressions={"drift": drift_e, "diffusion": cols}, name=name)


def _check_point(spec: InvariantSpec, t: float, x) -> None:
    g0, G = gradient(spec.M, t, x)
    kind = spec.basis_kind
    if kind in ("special", "projected"):
        (geometry.special_basis if kind == "special" else geometry.projected_special_basis)(G)
        if spec.time_dependent and abs(G[spec.pivot]) <= geometry.degeneracy_tol(G):
            raise DegenerateBasisError(f"g{spec.pivot + 1} vanishes: N0 is undefined", (spec.pivot + 1,))
        return
    if kind == "supplemented":
        b = geometry.supplement_basis(G, spec.zero_mask)
    elif spec.time_dependent:
        b = geometry.time_extended_basis(g0, G)
    else:
        b = geometry.general_basis(G)
    if b.degenerate:
        raise DegenerateBasisError(
            f"basis degenerates at x={list(np.asarray(x, float))}: g{b.degeneracy} vanish", b.degeneracy)


def build_diffusion(spec: InvariantSpec, choice: CoefficientChoice, t: float, x,
                    check: bool = True) -> np.ndarray:
    """Diffusion matrix ``(n, s)`` at one point; raises on a degenerate basis."""
    choice.validate(spec)
    if check:
        _check_point(spec, t, x)
    cols = _Coefficients(spec, choice).diffusion(float(t), [float(v) for v in x])
    return stack_components([c for col in cols for c in col]).reshape(choice.s, spec.n).T


def build_stratonovich_drift(spec: InvariantSpec, choice: CoefficientChoice, t: float, x,
                             check: bool = True) -> np.ndarray:
    choice.validate(spec)
    if check:
        _check_point(spec, t, x)
    return stack_components(_Coefficients(spec, choice).stratonovich_drift(float(t), [float(v) for v in x]))


def build_ito_drift(spec: InvariantSpec, choice: CoefficientChoice, t: float, x,
                    check: bool = True) -> np.ndarray:
    if check:
        _check_point(spec, t, x)
    system = synthesize(spec, choice, ITO)
    return system.drift_at(t, x)


def sigma_correction_generic(system: SdeSystem, t, x) -> list:
    """``1/2 sum_l (d sigma_l/dx) sigma_l`` for generic scalars."""
    cols = system.diffusion(t, x)
    total = [0.0] * system.n
    for l, col in enumerate(cols):
        jv = jvp_generic(system.column(l), t, x, col)
        total = [a + b for a, b in zip(total, jv)]
    return [0.5 * c for c in total]


def sigma_correction(system: SdeSystem, t: float, x) -> np.ndarray:
    return stack_components(sigma_correction_generic(system, float(t), [float(v) for v in x]))


def convert_interpretation(system: SdeSystem, target: str) -> SdeSystem:
    """Re-express ``system`` with the drift of the ``target`` interpretation.

    Stratonovich to Ito adds the correction term, Ito to Stratonovich
    subtracts it.  The diffusion is shared.
    """
    if target not in (ITO, STRATONOVICH):
        raise SynthesisError(f"unknown interpretation {target!r}")
    if target == system.interpretation:
        return system
    sign = 1.0 if target == ITO else -1.0
    base = system.drift

    def drift(t, x):
        corr = sigma_correction_generic(system, t, x)
        return [d + sign * c for d, c in zip(base(t, x), corr)]

    return SdeSystem(system.n, system.s, target, drift, system.diffusion, M=system.M,
                     provenance=system.provenance, expressions=None, name=system.name)


# ------------------------------------------------------------ verification


@dataclass
class ResidualReport:
    """Normalized residuals of the invariance conditions at sample points.

    ``noise[p, l]`` is ``|(sigma_l, G)| / (|sigma_l| |G|)``; ``drift[p]`` is
    ``|dM/dt + (a, G)| / ((1 + |a|) |G~|)`` with ``a`` the Stratonovich drift
    (``f - Sigma`` for Ito systems).
    """

    noise: np.ndarray
    drift: np.ndarray

    @property
    def max_noise(self) -> float:
        return float(np.max(self.noise)) if self.noise.size else 0.0

    @property
    def max_drift(self) -> float:
        return float(np.max(self.drift)) if self.drift.size else 0.0

    @property
    def max_residual(self) -> float:
        return max(self.max_noise, self.max_drift)

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_residual <= tol


def _safe_ratio(num, den):
    den = np.asarray(den, dtype=float)
    return np.where(den > 0, np.abs(num) / np.where(den > 0, den, 1.0), np.abs(num))


def invariance_residuals(system: SdeSystem, M, points, times=0.0) -> ResidualReport:
    """Evaluate the invariance conditions at ``points`` (shape ``(P, n)``)."""
    M = bind(_as_expr(M), system.n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = pts.shape[0]
    t = np.broadcast_to(np.asarray(times, dtype=float), (P,)).copy()
    x = [pts[:, i].copy() for i in range(system.n)]
    g0, g = gradient_generic(M, t, x)
    G = stack_components(g, (P,))
    g0 = np.broadcast_to(np.asarray(g0, dtype=float), (P,))
    gnorm = np.linalg.norm(G, axis=0)
    cols = system.diffusion(t, x)
    noise = np.zeros((P, system.s))
    for l, col in enumerate(cols):
        S = stack_components(col, (P,))
        noise[:, l] = _safe_ratio(np.sum(S * G, axis=0), np.linalg.norm(S, axis=0) * gnorm)
    a = stack_components(system.drift(t, x), (P,))
    if system.interpretation == ITO:
        a = a - stack_components(sigma_correction_generic(system, t, x), (P,))
    ext = np.sqrt(gnorm ** 2 + g0 ** 2)
    drift = _safe_ratio(g0 + np.sum(a * G, axis=0), (1.0 + np.linalg.norm(a, axis=0)) * ext)
    return ResidualReport(noise, drift)
