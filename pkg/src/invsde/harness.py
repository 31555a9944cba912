"""Monte-Carlo invariant drift, convergence studies and the built-in catalog.

The drift estimate for step ``h`` is the mean over ``R`` trajectories of
``|M(t0, x0) - M(T, Y_N)|``.  Trajectory ``r`` always uses RNG substream
``r``, per-trajectory errors are assembled by index and summed exactly, so
the result does not depend on chunking or on the number of worker threads.
"""

from __future__ import annotations

import csv
import difflib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .definition import SystemDefinition, parse_definition
from .errors import ConfigError, InvsdeError, SimulationError
from .expr import bind, evaluate, lenient, parse
from .simulate import INTEGRATORS, grid_steps, integrate, prepare_system
from .synthesis import ITO, STRATONOVICH, SdeSystem, convert_interpretation, invariance_residuals

__all__ = [
    "CatalogEntry",
    "ErrorReport",
    "ConvergenceTable",
    "catalog",
    "catalog_names",
    "get_entry",
    "quaternion_definition",
    "invariant_error",
    "convergence_study",
    "export_report",
    "parse_report",
    "ABORT_LIMIT",
    "CATALOG_TOL",
]

ABORT_LIMIT = 0.01
CATALOG_TOL = 1e-10


# ------------------------------------------------------------ catalog


def quaternion_definition(omega=(0.1, 0.1, 0.1), sigma=(0.1, 0.1, 0.1),
                          interpretation: str = STRATONOVICH) -> SystemDefinition:
    """Rigid-body attitude kinematics driven by noisy angular velocity.

    ``omega`` entries may be numbers or expression text in ``t``.  The Ito
    form subtracts ``(s1^2 + s2^2 + s3^2)/8 * lambda`` from the drift.
    """
    w = [f"({_num(v)})" for v in omega]
    sg = [float(v) for v in sigma]
    # rows of Lambda(v) lambda, as (component, sign) per omega index
    rows = [
        [(2, -1), (3, -1), (4, -1)],
        [(1, 1), (4, -1), (3, 1)],
        [(4, 1), (1, 1), (2, -1)],
        [(3, -1), (2, 1), (1, 1)],
    ]

    def term(c, sign, coef):
        return f"{'-' if sign < 0 else '+'}{coef}*x{c}"

    drift = []
    for i, row in enumerate(rows):
        body = "".join(term(c, sgn, w[k]) for k, (c, sgn) in enumerate(row)).lstrip("+")
        expr = f"0.5*({body})"
        if interpretation == ITO:
            expr += f"-{_num(sum(v * v for v in sg) / 8.0)}*x{i + 1}"
        drift.append(expr)
    diffusion = []
    for k in range(3):
        col = []
        for row in rows:
            c, sgn = row[k]
            col.append(f"{'-' if sgn < 0 else ''}{_num(0.5 * sg[k])}*x{c}")
        diffusion.append(col)
    return parse_definition({
        "name": "quaternion", "n": 4, "interpretation": interpretation,
        "M": "x1^2+x2^2+x3^2+x4^2", "drift": drift, "diffusion": diffusion,
        "x0": [[1.0, 0.0, 0.0, 0.0]], "t0": 0.0, "T": 1.0, "integrator": "euler",
        "notes": "omega and sigma are declared defaults; the invariant is |lambda|^2",
    })


def _num(v) -> str:
    return v if isinstance(v, str) else repr(float(v))


_DEFINITIONS = {
    "catenoid": {
        "n": 3, "s": 1, "M": "x1^2+x2^2-cosh(x3)^2", "basis": "general",
        "u": {"1,0": "1/5", "1,1": "1/3", "2,1": "1/10"},
        "x0": [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]], "t0": 0.0, "T": 10.0,
        "integrator": "milstein",
    },
    "dynamic-parabola": {
        "n": 2, "s": 1, "M": "x1+x2^2+cos(2*t)", "basis": "general",
        "u": {"1,0": "1/10", "1,1": "1/5"},
        "x0": [[1.0, 1.0], [1.0, -1.0], [0.0, math.sqrt(2.0)]], "t0": 0.0, "T": 6.28,
        "integrator": "artemiev",
    },
    "sphere": {
        "n": 3, "s": 1, "M": "(x1^2+x2^2+x3^2)/2", "basis": "general",
        "u": {"1,1": "1", "2,1": "-1"},
        "x0": [[0.0, 1.0, 1.0]], "t0": 0.0, "T": 5.0, "integrator": "milstein",
        "matrices": {
            "F": [[-0.5, 0.0, -0.5], [0.0, -1.0, 0.0], [-0.5, 0.0, -0.5]],
            "S": [[0.0, 1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        },
    },
    "iterated-integrals": {
        "n": 4, "s": 2, "M": "x2+x4-x1*x3", "basis": "general",
        "u": {"1,1": "1", "3,2": "1"},
        "x0": [[0.0, 0.0, 0.0, 0.0]], "t0": 0.0, "T": 1.0, "integrator": "euler",
    },
}

# reference drift estimates keyed by initial state, then step size
_REFERENCES = {
    "catenoid": {
        (0.0, 1.0, 0.0): {1e-2: 3.315e-2, 1e-3: 3.295e-3, 1e-4: 3.196e-4},
        (1.0, 0.0, 0.0): {1e-2: 3.116e-2, 1e-3: 3.262e-3, 1e-4: 3.393e-4},
    },
    "dynamic-parabola": {
        (1.0, 1.0): {1e-2: 4.040e-4, 1e-3: 4.046e-5, 1e-4: 4.070e-6},
    },
}

_DESCRIPTIONS = {
    "catenoid": "state on the catenoid x1^2+x2^2 = cosh^2 x3",
    "dynamic-parabola": "time-dependent parabola x1 + x2^2 + cos 2t = const",
    "sphere": "linear system on a sphere, dX = F X dt + S X dW",
    "quaternion": "rigid-body rotation quaternion with noisy angular velocity",
    "iterated-integrals": "second-order iterated Ito integrals, X2 + X4 = X1 X3",
}


@dataclass
class CatalogEntry:
    name: str
    description: str
    definition: SystemDefinition
    system: SdeSystem
    initial_states: tuple
    t0: float
    T: float
    integrator: str
    references: dict = field(default_factory=dict)
    ito_system: SdeSystem | None = None

    @property
    def M(self):
        return self.system.M

    @property
    def spec(self):
        return self.definition.spec() if self.definition.synthesized else None

    @property
    def choice(self):
        return self.definition.choice() if self.definition.synthesized else None

    @property
    def matrices(self) -> dict:
        return self.definition.extras.get("matrices", {})

    def system_for(self, integrator: str) -> SdeSystem:
        """The system in the interpretation ``integrator`` expects."""
        if integrator == "euler" and self.ito_system is not None:
            return self.ito_system
        return prepare_system(self.system, integrator)

    def reference(self, x0, h: float) -> float | None:
        table = self.references.get(tuple(float(v) for v in x0), {})
        for key, value in table.items():
            if math.isclose(key, h, rel_tol=1e-9):
                return value
        return None

    def validate(self, points: int = 1000, seed: int = 7, tol: float = CATALOG_TOL) -> float:
        """Max invariance residual at random points near the initial states."""
        rs = np.random.default_rng(seed)
        x0 = np.array(self.initial_states)
        pts = x0[rs.integers(len(x0), size=points)] + rs.normal(scale=0.5, size=(points, x0.shape[1]))
        times = rs.uniform(self.t0, self.T, size=points)
        worst = 0.0
        for sys_ in filter(None, (self.system, self.ito_system)):
            report = invariance_residuals(sys_, self.M, pts, times)
            worst = max(worst, report.max_residual)
        if worst > tol:
            raise InvsdeError(f"catalog entry {self.name!r} fails invariance: residual {worst:.3e}")
        return worst


def _make_entry(name: str, definition: SystemDefinition, ito_definition=None) -> CatalogEntry:
    system = definition.build()
    ito = ito_definition.build() if ito_definition is not None else None
    entry = CatalogEntry(
        name=name,
        description=_DESCRIPTIONS[name],
        definition=definition,
        system=system,
        initial_states=tuple(tuple(x) for x in definition.x0),
        t0=definition.t0,
        T=definition.T,
        integrator=definition.extras.get("integrator", "milstein"),
        references=_REFERENCES.get(name, {}),
        ito_system=ito,
    )
    entry.validate()
    return entry


@lru_cache(maxsize=None)
def _build_catalog() -> tuple:
    entries = []
    for name in ("catenoid", "dynamic-parabola", "sphere"):
        entries.append(_make_entry(name, parse_definition({"name": name, **_DEFINITIONS[name]})))
    entries.append(_make_entry("quaternion", quaternion_definition(),
                               quaternion_definition(interpretation=ITO)))
    entries.append(_make_entry("iterated-integrals",
                               parse_definition({"name": "iterated-integrals",
                                                 **_DEFINITIONS["iterated-integrals"]})))
    return tuple(entries)


def catalog() -> list[CatalogEntry]:
    """The five built-in systems, each checked for invariance on first load."""
    return list(_build_catalog())


def catalog_names() -> list[str]:
    return [e.name for e in _build_catalog()]


def get_entry(name: str) -> CatalogEntry:
    for e in _build_catalog():
        if e.name == name:
            return e
    hints = difflib.get_close_matches(name, catalog_names(), n=3, cutoff=0.4)
    hint = f"; did you mean {', '.join(hints)}?" if hints else f"; known: {', '.join(catalog_names())}"
    raise KeyError(f"unknown catalog entry {name!r}{hint}")


# ------------------------------------------------------------ error estimation


@dataclass
class ErrorReport:
    h: float
    R: int
    epsilon: float
    std: float
    stderr: float
    aborts: int
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def abort_fraction(self) -> float:
        return self.aborts / self.R

    @property
    def failed(self) -> bool:
        return self.abort_fraction > ABORT_LIMIT


@dataclass
class ConvergenceTable:
    rows: list

    def __post_init__(self):
        hs = [r.h for r in self.rows]
        if len(hs) < 2:
            raise ConfigError("a convergence study needs at least two step sizes")
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("step sizes must be strictly decreasing")

    @property
    def orders(self) -> list[float]:
        """Pairwise ``log(eps_i/eps_{i+1}) / log(h_i/h_{i+1})``."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.epsilon > 0 and b.epsilon > 0:
                out.append(math.log(a.epsilon / b.epsilon) / math.log(a.h / b.h))
            else:
                out.append(float("nan"))
        return out

    @property
    def seed(self) -> int:
        return self.rows[0].seed


def _invariant_values(M, t: float, Y: np.ndarray) -> np.ndarray:
    with lenient():
        v = evaluate(M, t, [Y[i] for i in range(Y.shape[0])])
    return np.broadcast_to(np.asarray(v, dtype=float), Y.shape[1:])


def default_threads() -> int:
    return os.cpu_count() or 1


def invariant_error(system: SdeSystem, integrator: str, x0, t0: float, T: float, h: float,
                    R: int = 1000, seed: int = 0, M=None, threads: int | None = None,
                    chunk: int = 250) -> ErrorReport:
    """Mean absolute invariant drift over ``R`` trajectories at step ``h``."""
    if R < 1:
        raise ConfigError("R must be at least 1")
    if integrator not in INTEGRATORS:
        raise ConfigError(f"unknown integrator {integrator!r}; choose from {', '.join(INTEGRATORS)}")
    grid_steps(t0, T, h)
    M = system.M if M is None else bind(parse(M) if isinstance(M, str) else M, system.n)
    if M is None:
        raise ConfigError("an invariant M is required")
    x0 = np.asarray(x0, dtype=float)
    m0 = float(_invariant_values(M, t0, x0[:, None])[0])

    errors = np.empty(R)
    aborted = np.zeros(R, dtype=bool)
    starts = list(range(0, R, chunk))

    def run(start: int):
        idx = np.arange(start, min(start + chunk, R))
        Y, ab, _, _ = integrate(system, integrator, x0, t0, T, h, seed, idx)
        errors[idx] = np.abs(m0 - _invariant_values(M, T, Y))
        aborted[idx] = ab

    workers = max(1, min(threads or default_threads(), len(starts)))
    if workers == 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))

    bad = aborted | ~np.isfinite(errors)
    good = errors[~bad]
    count = good.size
    eps = math.fsum(good) / count if count else float("nan")
    std = math.sqrt(math.fsum((good - eps) ** 2) / (count - 1)) if count > 1 else 0.0
    stderr = std / math.sqrt(count) if count else float("nan")
    config = {
        "system": system.name, "integrator": integrator, "x0": [float(v) for v in x0],
        "t0": float(t0), "T": float(T),
    }
    return ErrorReport(float(h), int(R), eps, std, stderr, int(bad.sum()), int(seed), config)


def convergence_study(system: SdeSystem, integrator: str, x0, t0: float, T: float,
                      hs: Sequence[float], R: int = 1000, seed: int = 0, M=None,
                      threads: int | None = None) -> ConvergenceTable:
    hs = [float(h) for h in hs]
    if len(hs) < 2:
        raise ConfigError("a convergence study needs at least two step sizes")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("step sizes must be strictly decreasing")
    rows = [invariant_error(system, integrator, x0, t0, T, h, R, seed, M, threads) for h in hs]
    return ConvergenceTable(rows)


# ------------------------------------------------------------ export

_CSV_FIELDS = ("h", "R", "epsilon", "stderr", "aborts")


def export_report(report, fmt: str = "csv") -> str:
    """Serialize an ErrorReport or ConvergenceTable without loss.

    CSV carries the fixed columns, followed by ``#`` comment lines holding
    the remaining fields as JSON.
    """
    rows = report.rows if isinstance(report, ConvergenceTable) else [report]
    kind = "table" if isinstance(report, ConvergenceTable) else "report"
    if fmt == "json":
        doc = {"kind": kind, "seed": rows[0].seed, "rows": [asdict(r) for r in rows]}
        if kind == "table":
            doc["orders"] = report.orders
        return json.dumps(doc, indent=2)
    if fmt != "csv":
        raise ConfigError(f"unknown report format {fmt!r}; use csv or json")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for r in rows:
        w.writerow([repr(r.h), r.R, repr(r.epsilon), repr(r.stderr), r.aborts])
    meta = {"kind": kind, "seed": rows[0].seed,
            "rows": [{"std": r.std, "seed": r.seed, "config": r.config} for r in rows]}
    buf.write("# " + json.dumps(meta) + "\n")
    return buf.getvalue()


def parse_report(text: str, fmt: str = "csv"):
    """Inverse of :func:`export_report`."""
    if fmt == "json":
        doc = json.loads(text)
        rows = [ErrorReport(**r) for r in doc["rows"]]
        kind = doc.get("kind", "report")
    elif fmt == "csv":
        lines = text.splitlines()
        meta = next((json.loads(l[2:]) for l in lines if l.startswith("# ")), None)
        body = [l for l in lines if not l.startswith("#")]
        reader = csv.DictReader(body)
        if tuple(reader.fieldnames or ()) != _CSV_FIELDS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rows = []
        for i, rec in enumerate(reader):
            extra = meta["rows"][i] if meta else {"std": float("nan"), "seed": 0, "config": {}}
            rows.append(ErrorReport(float(rec["h"]), int(rec["R"]), float(rec["epsilon"]),
                                    extra["std"], float(rec["stderr"]), int(rec["aborts"]),
                                    extra["seed"], extra["config"]))
        kind = meta["kind"] if meta else ("table" if len(rows) > 1 else "report")
    else:
        raise ConfigError(f"unknown report format {fmt!r}; use csv or json")
    return ConvergenceTable(rows) if kind == "table" else rows[0]
