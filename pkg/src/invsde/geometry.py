"""Bases of the tangent hyperplane orthogonal to a gradient.

Two layers live here.  The ``*_vectors`` builders work on plain sequences of
generic scalars (floats, arrays, duals) and are what the synthesized
coefficient closures call at every step.  The public ``*_basis`` functions
evaluate them at one numeric point and wrap the result in a
:class:`BasisSet` with degeneracy diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateBasisError,
    DimensionError,
    ResidualError,
    SingularBasisError,
    ZeroGradientError,
)

__all__ = [
    "BASIS_KINDS",
    "BasisSet",
    "GradientPoint",
    "default_kind",
    "degeneracy_tol",
    "chain_vectors",
    "special_vectors",
    "projected_vectors",
    "supplemented_vectors",
    "normal_shift",
    "general_basis",
    "time_extended_basis",
    "special_basis",
    "projected_special_basis",
    "supplement_basis",
    "closed_form_determinant",
    "coordinates_in_basis",
    "pi_product",
]

BASIS_KINDS = ("general", "time_extended", "special", "projected", "supplemented")


def degeneracy_tol(G) -> float:
    """Scale-relative threshold below which a gradient component counts as zero."""
    return 1e-8 * max(1.0, float(np.linalg.norm(G)))


def default_kind(n: int) -> str:
    if n in (2, 4, 8):
        return "special"
    if n in (3, 5, 6, 7):
        return "projected"
    return "general"


@dataclass(frozen=True)
class GradientPoint:
    g0: float
    G: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.G))

    @property
    def extended(self) -> np.ndarray:
        return np.concatenate([[self.g0], self.G])


@dataclass(frozen=True)
class BasisSet:
    """Vectors orthogonal to ``G`` evaluated at one point.

    ``degeneracy`` lists 1-based indices of gradient components whose
    vanishing makes the set linearly dependent.  ``permutation`` (when not
    None) maps working coordinates to the user's variable order.
    """

    kind: str
    G: np.ndarray
    vectors: tuple
    g0: float = 0.0
    n0: np.ndarray | None = None
    degeneracy: tuple = ()
    permutation: tuple | None = None
    dropped: tuple = field(default=())

    @property
    def n(self) -> int:
        return len(self.G)

    @property
    def degenerate(self) -> bool:
        return bool(self.degeneracy)

    def matrix(self) -> np.ndarray:
        """Columns ``G, N_1, ...`` (or ``G~, N~_0, N~_1, ...`` for time_extended)."""
        if self.kind == "time_extended":
            g1 = self.G[0]
            top = np.concatenate([[self.g0], self.G])
            n0 = np.zeros(self.n + 1)
            n0[0] = 1.0
            n0[1] = -self.g0 / g1
            cols = [top, n0] + [np.concatenate([[0.0], v]) for v in self.vectors]
            return np.column_stack(cols)
        return np.column_stack([self.G, *self.vectors])


def pi_product(G: Sequence[float]) -> float:
    """Product of the interior components ``g_2 ... g_{n-1}`` (1 for n = 2)."""
    G = list(G)
    p = 1.0
    for g in G[1:-1]:
        p *= g
    return p


# ------------------------------------------------------------ generic builders


def chain_vectors(g: Sequence) -> list[list]:
    """``N_j = g_{j+1} E_j - g_j E_{j+1}`` for ``j = 1 .. n-1``."""
    n = len(g)
    zero = 0.0 * g[0]
    out = []
    for j in range(n - 1):
        v = [zero] * n
        v[j] = g[j + 1]
        v[j + 1] = -g[j]
        out.append(v)
    return out


# Row k of each table lists (source index, sign) so N_k[i] = sign * g[src].
_SPECIAL_TABLES = {
    2: (((1, -1), (0, 1)),),
    4: (
        ((1, -1), (0, 1), (3, 1), (2, -1)),
        ((2, -1), (3, -1), (0, 1), (1, 1)),
        ((3, -1), (2, 1), (1, -1), (0, 1)),
    ),
    8: (
        ((1, -1), (0, 1), (3, 1), (2, -1), (5, 1), (4, -1), (7, -1), (6, 1)),
        ((2, -1), (3, -1), (0, 1), (1, 1), (6, 1), (7, 1), (4, -1), (5, -1)),
        ((3, -1), (2, 1), (1, -1), (0, 1), (7, 1), (6, -1), (5, 1), (4, -1)),
        ((4, -1), (5, -1), (6, -1), (7, -1), (0, 1), (1, 1), (2, 1), (3, 1)),
        ((5, -1), (4, 1), (7, -1), (6, 1), (1, -1), (0, 1), (3, -1), (2, 1)),
        ((6, -1), (7, 1), (4, 1), (5, -1), (2, -1), (3, 1), (0, 1), (1, -1)),
        ((7, -1), (6, -1), (5, 1), (4, 1), (3, -1), (2, -1), (1, 1), (0, 1)),
    ),
}


def special_vectors(g: Sequence) -> list[list]:
    """Pair-permutation basis for n in {2, 4, 8}."""
    n = len(g)
    if n not in _SPECIAL_TABLES:
        raise DimensionError(f"special basis exists only for n in (2, 4, 8), got {n}")
    return [[sign * g[src] for src, sign in row] for row in _SPECIAL_TABLES[n]]


def projected_vectors(g: Sequence) -> list[list]:
    """Zero-pad ``g`` to 4 or 8 components, take the special basis, truncate.

    Returns the full spanning list (3 vectors for n = 3, 7 for n = 5..7);
    vectors that are identically zero after truncation are dropped.
    """
    n = len(g)
    if n not in (3, 5, 6, 7):
        raise DimensionError(f"projected basis is defined for n in (3, 5, 6, 7), got {n}")
    m = 4 if n == 3 else 8
    zero = 0.0 * g[0]
    padded = list(g) + [zero] * (m - n)
    out = []
    for row in _SPECIAL_TABLES[m]:
        if all(src >= n for src, _ in row[:n]):
            continue
        out.append([sign * padded[src] if src < n else zero for src, sign in row[:n]])
    return out


def _supplement_layout(n: int, zero_mask: Sequence[bool]):
    """Working order: non-zero block first (original order), zeros after."""
    block = [i for i in range(n) if not zero_mask[i]]
    zeros = [i for i in range(n) if zero_mask[i]]
    return block, zeros


def _supplement_is_plain(n: int, zero_mask: Sequence[bool]) -> bool:
    # zeros only at the two ends leave the chain basis valid for n > 3
    zeros = [i for i in range(n) if zero_mask[i]]
    return not zeros or (n > 3 and all(i in (0, n - 1) for i in zeros))


def supplemented_vectors(g: Sequence, zero_mask: Sequence[bool]) -> list[list]:
    """Chain vectors over the non-zero block, then unit vectors for zeros."""
    n = len(g)
    if _supplement_is_plain(n, zero_mask):
        return chain_vectors(g)
    block, zeros = _supplement_layout(n, zero_mask)
    zero = 0.0 * g[0]
    out = []
    for a, b in zip(block, block[1:]):
        v = [zero] * n
        v[a] = g[b]
        v[b] = -g[a]
        out.append(v)
    for i in zeros:
        v = [zero] * n
        v[i] = 1.0 + zero
        out.append(v)
    return out


def normal_shift(g0, g: Sequence, pivot: int = 0) -> list:
    """``N_0``: the drift part that cancels ``dM/dt``; ``-g0/g_pivot`` at ``pivot``."""
    zero = 0.0 * g[pivot]
    v = [zero] * len(g)
    v[pivot] = -g0 / g[pivot]
    return v


# ------------------------------------------------------------ public ops


def _as_gradient(G) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim != 1:
        raise DimensionError("gradient must be a vector")
    return G


def _interior_degeneracy(G: np.ndarray, first: int = 1) -> tuple:
    tol = degeneracy_tol(G)
    n = len(G)
    return tuple(i + 1 for i in range(first, n - 1) if abs(G[i]) <= tol)


def general_basis(G) -> BasisSet:
    """Chain basis; flags interior components ``g_2 .. g_{n-1}`` that vanish."""
    G = _as_gradient(G)
    if len(G) < 2:
        raise DimensionError(f"need n >= 2, got {len(G)}")
    vecs = tuple(np.array(v, dtype=float) for v in chain_vectors(list(G)))
    return BasisSet("general", G, vecs, degeneracy=_interior_degeneracy(G))


def time_extended_basis(g0: float, G) -> BasisSet:
    """Chain basis plus ``N_0 = (-g0/g1, 0, ..., 0)`` for time-dependent integrals."""
    G = _as_gradient(G)
    if len(G) < 2:
        raise DimensionError(f"need n >= 2, got {len(G)}")
    tol = degeneracy_tol(G)
    if abs(G[0]) <= tol:
        raise DegenerateBasisError("g1 vanishes: N0 is undefined", (1,))
    vecs = tuple(np.array(v, dtype=float) for v in chain_vectors(list(G)))
    n0 = np.array(normal_shift(float(g0), list(G)), dtype=float)
    degeneracy = _interior_degeneracy(G, first=1)
    return BasisSet("time_extended", G, vecs, g0=float(g0), n0=n0, degeneracy=degeneracy)


def _require_nonzero(G: np.ndarray) -> None:
    if np.linalg.norm(G) <= 1e-8:
        raise ZeroGradientError("gradient vanishes; no tangent basis at this point")


def special_basis(G) -> BasisSet:
    """Mutually orthogonal vectors of norm ``|G|`` for n in {2, 4, 8}."""
    G = _as_gradient(G)
    if len(G) not in _SPECIAL_TABLES:
        raise DimensionError(f"special basis exists only for n in (2, 4, 8), got {len(G)}")
    _require_nonzero(G)
    vecs = tuple(np.array(v, dtype=float) for v in special_vectors(list(G)))
    return BasisSet("special", G, vecs)


def _greedy_independent(vectors: Sequence[np.ndarray], threshold: float) -> list[int]:
    """Indices of a maximal independent subset, lowest index first.

    Gram-Schmidt against the vectors already accepted; a candidate is kept
    when its residual norm exceeds ``threshold``.
    """
    accepted: list[int] = []
    q: list[np.ndarray] = []
    for k, v in enumerate(vectors):
        r = np.array(v, dtype=float)
        for _ in range(2):  # re-orthogonalise once for stability
            for u in q:
                r = r - (u @ r) * u
        norm = np.linalg.norm(r)
        if norm > threshold:
            accepted.append(k)
            q.append(r / norm)
    return accepted


def projected_special_basis(G) -> BasisSet:
    """Projection of the 4- or 8-dimensional basis, pruned to n-1 vectors."""
    G = _as_gradient(G)
    _require_nonzero(G)
    all_vecs = [np.array(v, dtype=float) for v in projected_vectors(list(G))]
    keep = _greedy_independent(all_vecs, 1e-8 * np.linalg.norm(G))
    dropped = tuple(k for k in range(len(all_vecs)) if k not in keep)
    vecs = tuple(all_vecs[k] for k in keep)
    return BasisSet("projected", G, vecs, dropped=dropped)


def supplement_basis(G, zero_mask: Sequence[bool]) -> BasisSet:
    """Basis for integrals that do not depend on some variables.

    ``zero_mask[i]`` is True when ``g_{i+1}`` vanishes identically.  If the
    zeros sit only at the two ends (and n > 3) the chain basis is already
    valid and is returned unchanged.
    """
    G = _as_gradient(G)
    n = len(G)
    zero_mask = [bool(z) for z in zero_mask]
    if len(zero_mask) != n:
        raise DimensionError("zero_mask length differs from n")
    if _supplement_is_plain(n, zero_mask):
        return general_basis(G)
    block, zeros = _supplement_layout(n, zero_mask)
    vecs = tuple(np.array(v, dtype=float) for v in supplemented_vectors(list(G), zero_mask))
    tol = degeneracy_tol(G)
    degeneracy = tuple(block[k] + 1 for k in range(1, len(block) - 1) if abs(G[block[k]]) <= tol)
    return BasisSet("supplemented", G, vecs, degeneracy=degeneracy,
                    permutation=tuple(block + zeros))


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def closed_form_determinant(kind: str, g0: float, G, zero_mask=None) -> float:
    """Closed-form determinant of the matrix ``[G, N_1, ...]`` for each kind.

    * general: ``(-1)^(n-1) |G|^2 pi_n``
    * time_extended: ``(-1)^n |G~|^2 pi_n`` for ``[G~, N~_0, N~_1, ...]``
    * special: ``|G|^n``
    * supplemented: ``sign(P) (-1)^(m-1) |G|^2 pi_m`` over the non-zero block
    """
    G = _as_gradient(G)
    n = len(G)
    sq = float(G @ G)
    if kind == "general":
        return (-1) ** (n - 1) * sq * pi_product(G)
    if kind == "time_extended":
        return (-1) ** n * (sq + g0 * g0) * pi_product(G)
    if kind == "special":
        return sq ** (n / 2)
    if kind == "supplemented":
        if zero_mask is None or _supplement_is_plain(n, zero_mask):
            return (-1) ** (n - 1) * sq * pi_product(G)
        block, zeros = _supplement_layout(n, zero_mask)
        m = len(block)
        # rows and columns are written in the original order: undo the permutation
        sign = _perm_sign(block + zeros)
        if m == 1:
            return sign * float(G[block[0]])
        return sign * (-1) ** (m - 1) * sq * pi_product(G[block])
    raise ValueError(f"no closed form for basis kind {kind!r}")


def coordinates_in_basis(v, basis: BasisSet) -> np.ndarray:
    """Coefficients ``c`` with ``sum_j c_j N_j = v``.

    Raises :class:`SingularBasisError` if the vectors are dependent at this
    point and :class:`ResidualError` if ``v`` is not in their span.
    """
    v = np.asarray(v, dtype=float)
    B = np.column_stack(basis.vectors)
    tol = degeneracy_tol(basis.G)
    s = np.linalg.svd(B, compute_uv=False)
    if s.size == 0 or s[-1] <= tol * max(1.0, s[0]):
        raise SingularBasisError(f"basis vectors are linearly dependent (min singular value {s[-1]:.3g})")
    c, *_ = np.linalg.lstsq(B, v, rcond=None)
    residual = float(np.linalg.norm(B @ c - v))
    scale = float(np.linalg.norm(v))
    if residual > 1e-9 * max(scale, 1e-300):
        raise ResidualError(f"vector is not in the span of the basis (residual {residual:.3g})", residual)
    return c
