"""Command-line front end.

Exit codes: 0 success, 1 verification failure (or aborted trajectories),
2 usage or validation error.  Screen output uses 6 significant digits;
files keep full precision.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .definition import SystemDefinition, load_definition
from .errors import InvsdeError, NonFiniteStateError, SingularMatrixError
from .harness import (
    catalog,
    convergence_study,
    export_report,
    get_entry,
)
from .simulate import INTEGRATORS, SimConfig, simulate_trajectory
from .synthesis import ITO, invariance_residuals

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
VERIFY_TOL = 1e-8


class UsageError(Exception):
    pass


def _g(v: float) -> str:
    return f"{v:.6g}"


def _default_seed() -> int:
    raw = os.environ.get("INVSDE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"INVSDE_SEED must be an integer, got {raw!r}") from None


def _resolve(target: str):
    """``(definition, system, ito_system, name)`` from a file path or catalog name."""
    path = Path(target)
    if path.suffix == ".json" or path.exists():
        d = load_definition(path)
        return d, d.build(), None, d.name or path.stem
    try:
        entry = get_entry(target)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    return entry.definition, entry.system, entry.ito_system, entry.name


def _system_for(system, ito, integrator):
    if integrator == "euler" and ito is not None:
        return ito
    return system


def _initial_state(d: SystemDefinition, args) -> list[float]:
    if args.x0 is not None:
        x0 = [float(v) for v in args.x0.split(",")]
        if len(x0) != d.n:
            raise UsageError(f"--x0 needs {d.n} components, got {len(x0)}")
        return x0
    if not d.x0:
        raise UsageError("definition has no x0; pass --x0")
    if not 0 <= args.x0_index < len(d.x0):
        raise UsageError(f"--x0-index must be in 0..{len(d.x0) - 1}")
    return d.x0[args.x0_index]


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _ladder(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad step ladder {text!r}") from None


# ------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    from .symbolic import coefficient_text

    d = load_definition(args.file)
    if not d.synthesized:
        raise UsageError("synth needs a definition with 'M' and 'u'")
    spec, choice = d.spec(), d.choice()
    d.build()
    text = coefficient_text(spec, choice)
    print(f"M = {d.M}    (n={d.n}, s={d.s}, basis={spec.basis_kind})")
    print("Stratonovich drift a:")
    for i, c in enumerate(text["a"], 1):
        print(f"  a{i} = {c}")
    print("Ito drift f = a + Sigma:")
    for i, c in enumerate(text["f"], 1):
        print(f"  f{i} = {c}")
    print("Correction Sigma:")
    for i, c in enumerate(text["Sigma"], 1):
        print(f"  Sigma{i} = {c}")
    print("Diffusion columns sigma_l (shared by both forms):")
    for l, col in enumerate(text["sigma"], 1):
        print(f"  sigma_{l} = [{', '.join(col)}]")
    if args.out:
        doc = {
            "name": d.name, "n": d.n, "interpretation": "stratonovich", "M": d.M,
            "drift": text["a"], "diffusion": text["sigma"],
            "x0": d.x0, "t0": d.t0, "T": d.T,
        }
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    d, system, ito, name = _resolve(args.target)
    x0 = _initial_state(d, args)
    system = _system_for(system, ito, args.integrator)
    T = args.T if args.T is not None else d.T
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for k in range(args.traj):
        cfg = SimConfig(d.t0, T, args.h, x0, args.integrator, args.seed, k)
        try:
            traj = simulate_trajectory(system, cfg)
        except (NonFiniteStateError, SingularMatrixError) as exc:
            print(f"trajectory {k}: aborted: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        path = out / f"{name}_traj{k}.{args.format}"
        path.write_text(traj.to_csv() if args.format == "csv" else traj.to_json())
        drift = abs(traj.invariant[-1] - traj.invariant[0])
        print(f"trajectory {k}: {path}  M0={_g(traj.invariant[0])}  |M(T)-M0|={_g(drift)}")
    return status


def _sample_points(d: SystemDefinition, P: int, seed: int):
    rs = np.random.default_rng(seed)
    if d.x0:
        x0 = np.array(d.x0)
        pts = x0[rs.integers(len(x0), size=P)] + rs.normal(scale=0.5, size=(P, d.n))
    else:
        pts = rs.normal(size=(P, d.n))
    return pts, rs.uniform(d.t0, d.T, size=P)


def cmd_verify(args) -> int:
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    d, system, ito, name = _resolve(args.target)
    if system.M is None:
        raise UsageError("verify needs an invariant 'M'")
    pts, times = _sample_points(d, args.points, args.seed)
    worst = 0.0
    for sys_ in filter(None, (system, ito)):
        r = invariance_residuals(sys_, system.M, pts, times)
        label = "ito" if sys_.interpretation == ITO else "stratonovich"
        print(f"{name} [{label}]: points={args.points} max noise residual={_g(r.max_noise)} "
              f"max drift residual={_g(r.max_drift)}")
        worst = max(worst, r.max_residual)
    ok = worst <= VERIFY_TOL
    print(f"{'PASS' if ok else 'FAIL'}: max residual {_g(worst)} (tolerance {_g(VERIFY_TOL)})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_converge(args) -> int:
    if len(args.h_ladder) < 2:
        raise UsageError("--h-ladder needs at least two step sizes")
    if any(h <= 0 for h in args.h_ladder):
        raise UsageError("step sizes must be positive")
    if args.R < 1:
        raise UsageError("--R must be at least 1")
    d, system, ito, name = _resolve(args.target)
    x0 = _initial_state(d, args)
    integrator = args.integrator or d.extras.get("integrator", "milstein")
    system = _system_for(system, ito, integrator)
    T = args.T if args.T is not None else d.T
    table = convergence_study(system, integrator, x0, d.t0, T, args.h_ladder, args.R,
                              args.seed, threads=args.threads)
    print(f"{name}: integrator={integrator} x0={[_g(v) for v in x0]} T={_g(T)} "
          f"R={args.R} seed={args.seed}")
    print(f"{'h':>12} {'epsilon':>12} {'stderr':>12} {'aborts':>7} {'order':>8}")
    orders = [""] + [_g(p) for p in table.orders]
    for row, p in zip(table.rows, orders):
        print(f"{_g(row.h):>12} {_g(row.epsilon):>12} {_g(row.stderr):>12} {row.aborts:>7} {p:>8}")
    if args.out:
        Path(args.out).write_text(export_report(table, args.format))
        print(f"wrote {args.out}")
    failed = [r for r in table.rows if r.failed]
    for r in failed:
        print(f"h={_g(r.h)}: {r.aborts} of {r.R} trajectories aborted (over 1%)", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _matrix_lines(M) -> list[str]:
    return ["  [" + "  ".join(f"{v:>6g}" for v in row) + "]" for row in M]


def cmd_catalog(args) -> int:
    if args.action == "list":
        for e in catalog():
            print(f"{e.name:<20} n={e.definition.n} s={e.definition.s}  {e.description}")
        return EXIT_OK
    if not args.name:
        raise UsageError("catalog show needs a name")
    try:
        e = get_entry(args.name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    print(f"{e.name}: {e.description}")
    print(e.definition.to_json())
    for label, M in e.matrices.items():
        print(f"{label} =")
        print("\n".join(_matrix_lines(M)))
    for x0, refs in e.references.items():
        vals = ", ".join(f"h={_g(h)}: {_g(v)}" for h, v in refs.items())
        print(f"reference drift for x0={list(x0)}: {vals}")
    return EXIT_OK


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invsde", description="Synthesize and simulate invariant SDE systems.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="print coefficients for a definition with M and u")
    s.add_argument("file")
    s.add_argument("--out", help="write a hand-entered definition here")
    s.set_defaults(func=cmd_synth)

    def target_opts(q):
        q.add_argument("target", help="definition file or catalog name")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--x0", help="comma-separated initial state")
        q.add_argument("--x0-index", type=int, default=0)
        q.add_argument("--T", type=float, default=None, help="override the final time")

    s = sub.add_parser("simulate", help="write trajectories to files")
    target_opts(s)
    s.add_argument("--integrator", choices=INTEGRATORS, default="milstein")
    s.add_argument("--h", type=_positive_float, default=0.01)
    s.add_argument("--traj", type=int, default=1)
    s.add_argument("--out", default=".")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", help="check the invariance conditions at random points")
    s.add_argument("target", help="definition file or catalog name")
    s.add_argument("--points", type=int, default=1000)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("converge", help="invariant drift over a ladder of step sizes")
    target_opts(s)
    s.add_argument("--integrator", choices=INTEGRATORS, default=None)
    s.add_argument("--h-ladder", type=_ladder, default=[1e-2, 1e-3])
    s.add_argument("--R", type=int, default=1000)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", help="write the table here")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("catalog", help="list or show built-in systems")
    s.add_argument("action", choices=("list", "show"))
    s.add_argument("name", nargs="?")
    s.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        if getattr(args, "traj", 1) < 1:
            raise UsageError("--traj must be at least 1")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args)
    except (UsageError, InvsdeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
