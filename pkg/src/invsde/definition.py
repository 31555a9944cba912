"""JSON system definitions shared by the catalog and the command line.

A definition is either *synthesized* (``M`` plus a ``u`` table) or
*hand-entered* (``drift`` plus ``diffusion`` columns, with an optional
``M``)::

    {"n": 3, "s": 1, "M": "x1^2+x2^2-cosh(x3)^2",
     "u": {"1,0": "1/5", "1,1": "1/3", "2,1": "1/10"},
     "x0": [0, 1, 0], "t0": 0, "T": 10}

    {"n": 3, "interpretation": "stratonovich", "M": "(x1^2+x2^2+x3^2)/2",
     "drift": ["0", "0", "0"], "diffusion": [["x2", "-x1-x3", "x2"]]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DefinitionError, ExprError, InvsdeError
from .expr import parse
from .synthesis import (
    ITO,
    STRATONOVICH,
    CoefficientChoice,
    InvariantSpec,
    SdeSystem,
    hand_entered,
    synthesize,
)

__all__ = ["SystemDefinition", "load_definition", "parse_definition"]

_KNOWN = {"name", "n", "s", "M", "u", "basis", "interpretation", "drift", "diffusion",
          "x0", "t0", "T", "h", "integrator", "notes", "matrices"}


def _text(v) -> str:
    if isinstance(v, bool) or not isinstance(v, (str, int, float)):
        raise TypeError(type(v).__name__)
    return v if isinstance(v, str) else repr(v)


@dataclass
class SystemDefinition:
    n: int
    s: int
    M: str | None = None
    u: dict = field(default_factory=dict)
    basis: str = "auto"
    interpretation: str = STRATONOVICH
    drift: list | None = None
    diffusion: list | None = None
    x0: list = field(default_factory=list)
    t0: float = 0.0
    T: float = 1.0
    name: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def synthesized(self) -> bool:
        return self.drift is None

    @property
    def initial_states(self) -> list[list[float]]:
        return self.x0

    def spec(self) -> InvariantSpec:
        return InvariantSpec(self.n, self.M, self.basis)

    def choice(self) -> CoefficientChoice:
        return CoefficientChoice(self.s, self.u)

    def build(self) -> SdeSystem:
        """The system in its native interpretation."""
        try:
            if self.synthesized:
                return synthesize(self.spec(), self.choice(), self.interpretation, name=self.name)
            return hand_entered(self.n, self.interpretation, self.drift, self.diffusion,
                                M=self.M, name=self.name)
        except ExprError as exc:
            raise DefinitionError(f"{self.name or 'definition'}: {exc}") from exc
        except InvsdeError as exc:
            if isinstance(exc, DefinitionError):
                raise
            raise DefinitionError(f"{self.name or 'definition'}: {exc}") from exc

    def to_dict(self) -> dict:
        d = {"name": self.name, "n": self.n, "s": self.s}
        if self.M is not None:
            d["M"] = self.M
        if self.synthesized:
            d["u"] = dict(self.u)
            d["basis"] = self.basis
        else:
            d["interpretation"] = self.interpretation
            d["drift"] = list(self.drift)
            d["diffusion"] = [list(c) for c in self.diffusion]
        d["x0"] = [list(x) for x in self.x0]
        d["t0"] = self.t0
        d["T"] = self.T
        d.update(self.extras)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_expr(where: str, text: str) -> str:
    try:
        parse(text)
    except ExprError as exc:
        raise DefinitionError(f"{where}: {exc}") from exc
    return text


def parse_definition(doc: dict, name: str = "") -> SystemDefinition:
    """Validate a decoded JSON document; errors name the offending key."""
    if not isinstance(doc, dict):
        raise DefinitionError("definition must be a JSON object")
    unknown = set(doc) - _KNOWN
    if unknown:
        raise DefinitionError(f"unknown keys: {', '.join(sorted(unknown))}")
    n = doc.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        raise DefinitionError("'n' must be an integer >= 2")
    has_u = "u" in doc
    has_hand = "drift" in doc or "diffusion" in doc
    if has_u and has_hand:
        raise DefinitionError("give either 'M' with 'u' or 'drift' with 'diffusion', not both")
    if not has_u and not has_hand:
        if "M" in doc:
            raise DefinitionError("missing 'u' (coefficient table for M)")
        raise DefinitionError("missing 'M' with 'u' or 'drift' with 'diffusion'")
    M = doc.get("M")
    if M is not None:
        try:
            M = _check_expr("M", _text(M))
        except TypeError:
            raise DefinitionError("'M' must be expression text") from None
    interp = doc.get("interpretation", STRATONOVICH)
    if interp not in (ITO, STRATONOVICH):
        raise DefinitionError(f"'interpretation' must be 'ito' or 'stratonovich', got {interp!r}")

    d = SystemDefinition(n=n, s=0, M=M, interpretation=interp, name=doc.get("name", name))
    if has_u:
        if M is None:
            raise DefinitionError("'u' needs 'M'")
        s = doc.get("s")
        if not isinstance(s, int) or isinstance(s, bool) or s < 0:
            raise DefinitionError("'s' must be a non-negative integer")
        u = doc["u"]
        if not isinstance(u, dict):
            raise DefinitionError("'u' must map \"j,l\" to expression text")
        table = {}
        for key, v in u.items():
            parts = key.split(",")
            if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
                raise DefinitionError(f"u key {key!r} must look like \"j,l\"")
            try:
                table[f"{int(parts[0])},{int(parts[1])}"] = _check_expr(f"u[{key}]", _text(v))
            except TypeError:
                raise DefinitionError(f"u[{key}] must be expression text") from None
        d.s, d.u = s, table
        d.basis = doc.get("basis", "auto")
    else:
        drift, diffusion = doc.get("drift"), doc.get("diffusion")
        if not isinstance(drift, list) or len(drift) != n:
            raise DefinitionError(f"'drift' must be a list of {n} expressions")
        if not isinstance(diffusion, list) or not diffusion:
            raise DefinitionError("'diffusion' must be a non-empty list of columns")
        try:
            d.drift = [_check_expr(f"drift[{i}]", _text(e)) for i, e in enumerate(drift)]
            cols = []
            for l, col in enumerate(diffusion):
                if not isinstance(col, list) or len(col) != n:
                    raise DefinitionError(f"diffusion[{l}] must be a list of {n} expressions")
                cols.append([_check_expr(f"diffusion[{l}][{i}]", _text(e)) for i, e in enumerate(col)])
        except TypeError:
            raise DefinitionError("drift and diffusion entries must be expression text") from None
        if "s" in doc and doc["s"] != len(cols):
            raise DefinitionError(f"'s' is {doc['s']} but 'diffusion' has {len(cols)} columns")
        d.diffusion, d.s = cols, len(cols)

    x0 = doc.get("x0", [])
    if x0 and not isinstance(x0[0], list):
        x0 = [x0]
    for i, x in enumerate(x0):
        if len(x) != n or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
            raise DefinitionError(f"x0[{i}] must be {n} numbers")
    d.x0 = [[float(v) for v in x] for x in x0]
    for key in ("t0", "T"):
        if key in doc and (not isinstance(doc[key], (int, float)) or isinstance(doc[key], bool)):
            raise DefinitionError(f"'{key}' must be a number")
    d.t0 = float(doc.get("t0", 0.0))
    d.T = float(doc.get("T", 1.0))
    if not d.T > d.t0:
        raise DefinitionError("need T > t0")
    d.extras = {k: doc[k] for k in ("h", "integrator", "notes", "matrices") if k in doc}
    return d


def load_definition(path) -> SystemDefinition:
    """Read and validate a definition file; JSON errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DefinitionError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DefinitionError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_definition(doc, name=path.stem)
    except DefinitionError as exc:
        raise DefinitionError(f"{path}: {exc}") from exc
