"""Time stepping for invariant systems.

All steppers act on a state of shape ``(n,)`` or ``(n, R)``; the second form
advances ``R`` trajectories at once and is what the Monte-Carlo harness
uses.  Noise for trajectory ``r`` at step ``k`` and channel ``l`` is the
normal variate at position ``k * s + l`` of substream ``r`` (see
:mod:`invsde.rng`), so results do not depend on how trajectories are
batched.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .autodiff import jvp_generic
from .errors import (
    CompatibilityError,
    ConfigError,
    NoiseCountError,
    NonFiniteStateError,
    SingularMatrixError,
)
from .expr import evaluate, lenient
from .synthesis import ITO, STRATONOVICH, SdeSystem, convert_interpretation, stack_components

__all__ = [
    "INTEGRATORS",
    "SPHERE_S",
    "SimConfig",
    "WienerPath",
    "Trajectory",
    "wiener_increments",
    "euler_step",
    "milstein_step",
    "ito_milstein_step",
    "artemiev_step",
    "sphere_matrix",
    "sphere_analytic",
    "prepare_system",
    "integrate",
    "simulate_trajectory",
    "grid_steps",
]

INTEGRATORS = ("euler", "milstein", "artemiev", "analytic_sphere")

SPHERE_S = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, 1.0, 0.0]])

# steps per block of pre-generated noise
_BLOCK = 512


def grid_steps(t0: float, T: float, h: float) -> int:
    """Number of steps ``N = (T - t0)/h``; the grid must close exactly."""
    if not h > 0:
        raise ConfigError(f"step size must be positive, got {h}")
    if not T > t0:
        raise ConfigError(f"need T > t0, got t0={t0}, T={T}")
    ratio = (T - t0) / h
    N = int(round(ratio))
    if N < 1 or abs(N - ratio) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"(T - t0)/h = {ratio!r} is not an integer")
    return N


@dataclass(frozen=True)
class SimConfig:
    t0: float
    T: float
    h: float
    x0: tuple
    integrator: str = "milstein"
    seed: int = 0
    trajectory_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.ravel(self.x0)))
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"unknown integrator {self.integrator!r}; choose from {', '.join(INTEGRATORS)}")
        grid_steps(self.t0, self.T, self.h)

    @property
    def steps(self) -> int:
        return grid_steps(self.t0, self.T, self.h)

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)


@dataclass
class WienerPath:
    """Increments ``dW`` of shape ``(N, s)`` and values ``W`` of shape ``(N+1, s)``."""

    increments: np.ndarray
    values: np.ndarray
    h: float

    @property
    def steps(self) -> int:
        return self.increments.shape[0]


def _noise(keys: np.ndarray, k0: int, steps: int, s: int) -> np.ndarray:
    """Normals for steps ``k0 .. k0+steps-1``: shape ``(steps, s, R)``."""
    z = rng.normals(keys, k0 * s, steps * s)
    return z.reshape(len(keys), steps, s).transpose(1, 2, 0)


def wiener_increments(seed: int, trajectory_index: int, N: int, s: int, h: float) -> WienerPath:
    """Wiener path with ``W(0) = 0`` and ``W(t_{k+1}) = W(t_k) + sqrt(h) xi_k``."""
    if N < 1 or s < 1 or not h > 0:
        raise ConfigError("need N >= 1, s >= 1 and h > 0")
    keys = rng.stream_key(seed, [trajectory_index])
    xi = _noise(keys, 0, N, s)[:, :, 0]
    dW = math.sqrt(h) * xi
    W = np.zeros((N + 1, s))
    # accumulate is sequential, so W[k+1] == W[k] + dW[k] exactly
    np.cumsum(dW, axis=0, out=W[1:])
    return WienerPath(dW, W, h)


# ------------------------------------------------------------ one-step maps


def _state_list(Y: np.ndarray) -> list:
    return [Y[i] for i in range(Y.shape[0])]


def _batch_shape(Y: np.ndarray) -> tuple:
    return Y.shape[1:]


def euler_step(system: SdeSystem, t: float, Y: np.ndarray, dW: np.ndarray, h: float) -> np.ndarray:
    """Euler-Maruyama: ``Y + h f + sum_l sigma_l dW_l`` (Ito drift)."""
    if system.interpretation != ITO:
        raise CompatibilityError("euler_step needs the Ito drift")
    shape = _batch_shape(Y)
    x = _state_list(Y)
    out = Y + h * stack_components(system.drift(t, x), shape)
    for l, col in enumerate(system.diffusion(t, x)):
        out = out + stack_components(col, shape) * dW[l]
    return out


def _milstein_increment(system: SdeSystem, t: float, Y: np.ndarray, xi, h: float) -> np.ndarray:
    shape = _batch_shape(Y)
    x = _state_list(Y)
    a = stack_components(system.drift(t, x), shape)
    col = system.diffusion(t, x)[0]
    sigma = stack_components(col, shape)
    dsig = stack_components(jvp_generic(system.column(0), t, x, col), shape)
    return h * a + math.sqrt(h) * sigma * xi + 0.5 * h * dsig * xi * xi


def _require_scalar_noise(system: SdeSystem, name: str) -> None:
    if system.s != 1:
        raise NoiseCountError(f"{name} supports a single Wiener process, system has s={system.s}")


def milstein_step(system: SdeSystem, t: float, Y: np.ndarray, xi, h: float) -> np.ndarray:
    """``Y + h a + sqrt(h) sigma xi + (h/2) (d sigma/dx) sigma xi^2``.

    ``a`` is the Stratonovich drift, hence ``xi^2`` rather than ``xi^2 - 1``.
    """
    _require_scalar_noise(system, "milstein")
    if system.interpretation != STRATONOVICH:
        raise CompatibilityError("milstein_step needs the Stratonovich drift")
    return Y + _milstein_increment(system, t, Y, xi, h)


def ito_milstein_step(system: SdeSystem, t: float, Y: np.ndarray, xi, h: float) -> np.ndarray:
    """Textbook Ito form ``Y + h f + sigma dW + 1/2 (d sigma/dx) sigma (dW^2 - h)``."""
    _require_scalar_noise(system, "milstein")
    if system.interpretation != ITO:
        raise CompatibilityError("ito_milstein_step needs the Ito drift")
    shape = _batch_shape(Y)
    x = _state_list(Y)
    f = stack_components(system.drift(t, x), shape)
    col = system.diffusion(t, x)[0]
    sigma = stack_components(col, shape)
    dsig = stack_components(jvp_generic(system.column(0), t, x, col), shape)
    dW = math.sqrt(h) * xi
    return Y + h * f + sigma * dW + 0.5 * dsig * (dW * dW - h)


def _drift_jacobian(system: SdeSystem, t: float, Y: np.ndarray) -> np.ndarray:
    """``(..., n, n)`` Jacobian of the drift, one dual pass per column."""
    n = system.n
    shape = _batch_shape(Y)
    x = _state_list(Y)
    cols = []
    for j in range(n):
        seed = [1.0 if i == j else 0.0 for i in range(n)]
        cols.append(stack_components(jvp_generic(system.drift, t, x, seed), shape))
    J = np.stack(cols, axis=1)  # (n, n, *shape)
    return np.moveaxis(J, (0, 1), (-2, -1))


def artemiev_step(system: SdeSystem, t: float, Y: np.ndarray, xi, h: float,
                  step: int | None = None) -> np.ndarray:
    """Rosenbrock-type step ``Y + [E - (h/2) da/dx]^{-1} (Milstein increment)``."""
    _require_scalar_noise(system, "artemiev")
    if system.interpretation != STRATONOVICH:
        raise CompatibilityError("artemiev_step needs the Stratonovich drift")
    inc = _milstein_increment(system, t, Y, xi, h)
    A = np.eye(system.n) - 0.5 * h * _drift_jacobian(system, t, Y)
    rhs = np.moveaxis(inc, 0, -1)[..., None]
    try:
        delta = np.linalg.solve(A, rhs)[..., 0]
    except np.linalg.LinAlgError:
        if A.ndim == 2:
            raise SingularMatrixError("E - (h/2) da/dx is singular", step) from None
        delta = np.full(rhs.shape[:-1], np.nan)
        for r in range(A.shape[0]):
            try:
                delta[r] = np.linalg.solve(A[r], rhs[r])[:, 0]
            except np.linalg.LinAlgError:
                pass
    return Y + np.moveaxis(delta, -1, 0)


# ------------------------------------------------------------ sphere solution


def sphere_matrix(w) -> np.ndarray:
    """``exp(S w)`` in closed form; shape ``(3, 3, *w.shape)``."""
    w = np.asarray(w, dtype=float)
    r2 = math.sqrt(2.0)
    c = np.cos(r2 * w)
    sn = 0.5 * r2 * np.sin(r2 * w)
    return np.array([
        [0.5 * (1.0 + c), sn, 0.5 * (c - 1.0)],
        [-sn, c, -sn],
        [0.5 * (c - 1.0), sn, 0.5 * (1.0 + c)],
    ])


def _apply_sphere(w, x0: np.ndarray) -> np.ndarray:
    E = sphere_matrix(w)
    if x0.ndim == 1:
        return np.einsum("ij...,j->i...", E, x0)
    return np.einsum("ij...,j...->i...", E, x0)


# ------------------------------------------------------------ trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N+1, n)
    invariant: np.ndarray  # (N+1,)
    integrator: str
    seed: int
    trajectory_index: int
    increments: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t"] + [f"x{i + 1}" for i in range(self.n)] + ["M"])
        for k, (t, y, m) in enumerate(zip(self.times, self.states, self.invariant)):
            w.writerow([k, repr(float(t))] + [repr(float(v)) for v in y] + [repr(float(m))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "integrator": self.integrator,
            "seed": self.seed,
            "trajectory_index": self.trajectory_index,
            "k": list(range(len(self.times))),
            "t": [float(v) for v in self.times],
            **{f"x{i + 1}": [float(v) for v in self.states[:, i]] for i in range(self.n)},
            "M": [float(v) for v in self.invariant],
        })


def sphere_analytic(x0, path: WienerPath, t0: float = 0.0, seed: int = 0,
                    trajectory_index: int = 0) -> Trajectory:
    """Exact solution ``X(t_k) = exp(S W(t_k)) x0`` on the path's grid."""
    x0 = np.asarray(x0, dtype=float)
    w = path.values[:, 0]
    states = _apply_sphere(w, x0).T
    times = t0 + path.h * np.arange(path.steps + 1)
    M = 0.5 * np.sum(states * states, axis=1)
    return Trajectory(times, states, M, "analytic_sphere", seed, trajectory_index, path.increments)


def _is_sphere_system(system: SdeSystem) -> bool:
    if system.n != 3 or system.s != 1:
        return False
    pts = np.random.default_rng(12345).normal(size=(4, 3))
    strat = prepare_system(system, "milstein") if system.provenance or system.interpretation == STRATONOVICH \
        else None
    for p in pts:
        if not np.allclose(system.diffusion_at(0.0, p)[:, 0], SPHERE_S @ p, atol=1e-12):
            return False
        if strat is not None and not np.allclose(strat.drift_at(0.0, p), 0.0, atol=1e-12):
            return False
    return strat is not None


def prepare_system(system: SdeSystem, integrator: str) -> SdeSystem:
    """Return ``system`` in the interpretation the integrator needs.

    Conversion happens only for synthesized systems; hand-entered ones must
    already carry the right drift.
    """
    if integrator not in INTEGRATORS:
        raise ConfigError(f"unknown integrator {integrator!r}; choose from {', '.join(INTEGRATORS)}")
    if integrator == "analytic_sphere":
        return system
    want = ITO if integrator == "euler" else STRATONOVICH
    if integrator in ("milstein", "artemiev"):
        _require_scalar_noise(system, integrator)
    if system.interpretation == want:
        return system
    if system.provenance is None:
        raise CompatibilityError(
            f"{integrator} needs the {want} drift but this hand-entered system is {system.interpretation}")
    return convert_interpretation(system, want)


def integrate(system: SdeSystem, integrator: str, x0, t0: float, T: float, h: float,
              seed: int, indices: Sequence[int], record: bool = False):
    """Advance trajectories ``indices`` from ``x0`` over ``[t0, T]``.

    Returns ``(final_states (n, R), aborted (R,), first_bad_step (R,), path)``
    where ``path`` is ``(N+1, n, R)`` when ``record`` is set, else None.
    Trajectories whose state turns non-finite are flagged, not raised.
    """
    N = grid_steps(t0, T, h)
    indices = np.asarray(indices, dtype=np.int64)
    R = indices.size
    keys = rng.stream_key(seed, indices.astype(np.uint64))
    x0 = np.asarray(x0, dtype=float)
    n = system.n
    if x0.shape != (n,):
        raise ConfigError(f"x0 has {x0.size} components, system has n={n}")

    if integrator == "analytic_sphere":
        if not _is_sphere_system(system):
            raise CompatibilityError("analytic_sphere applies only to the linear sphere system")
        W = np.zeros(R)
        path = np.empty((N + 1, n, R)) if record else None
        if record:
            path[0] = x0[:, None]
        sq = math.sqrt(h)
        for k0 in range(0, N, _BLOCK):
            steps = min(_BLOCK, N - k0)
            xi = _noise(keys, k0, steps, 1)
            for b in range(steps):
                W = W + sq * xi[b, 0]
                if record:
                    path[k0 + b + 1] = _apply_sphere(W, x0)
        Y = _apply_sphere(W, x0)
        bad = np.full(R, -1)
        return Y, np.zeros(R, dtype=bool), bad, path

    system = prepare_system(system, integrator)
    s = system.s
    Y = np.repeat(x0[:, None], R, axis=1)
    aborted = np.zeros(R, dtype=bool)
    first_bad = np.full(R, -1)
    path = np.empty((N + 1, n, R)) if record else None
    if record:
        path[0] = Y
    sq = math.sqrt(h)
    with lenient():
        for k0 in range(0, N, _BLOCK):
            steps = min(_BLOCK, N - k0)
            xi = _noise(keys, k0, steps, s)
            for b in range(steps):
                k = k0 + b
                t = t0 + k * h
                if integrator == "euler":
                    Y = euler_step(system, t, Y, sq * xi[b], h)
                elif integrator == "milstein":
                    Y = milstein_step(system, t, Y, xi[b, 0], h)
                else:
                    Y = artemiev_step(system, t, Y, xi[b, 0], h, step=k)
                finite = np.all(np.isfinite(Y), axis=0)
                newly = ~finite & ~aborted
                if newly.any():
                    first_bad[newly] = k + 1
                    aborted |= newly
                    # park aborted trajectories at their start point
                    Y[:, newly] = x0[:, None]
                if record:
                    path[k + 1] = Y
    return Y, aborted, first_bad, path


def simulate_trajectory(system: SdeSystem, config: SimConfig) -> Trajectory:
    """One trajectory with the invariant recorded at every grid point."""
    if len(config.x0) != system.n:
        raise ConfigError(f"x0 has {len(config.x0)} components, system has n={system.n}")
    _, aborted, first_bad, path = integrate(system, config.integrator, config.x0, config.t0,
                                            config.T, config.h, config.seed,
                                            [config.trajectory_index], record=True)
    if aborted[0]:
        raise NonFiniteStateError("state became non-finite", int(first_bad[0]))
    states = path[:, :, 0]
    times = config.times()
    if system.M is not None:
        M = np.array([float(evaluate(system.M, float(t), list(y))) for t, y in zip(times, states)])
    else:
        M = np.full(times.shape, np.nan)
    return Trajectory(times, states, M, config.integrator, config.seed, config.trajectory_index)
