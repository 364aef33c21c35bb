"""``ubw1`` command-line front end.

Exit codes: 0 on success, 2 when an input violates a precondition, 1 when a
numerical routine fails (the error is printed as one JSON line on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dirac import DiracInstance, phase_diagram, solve_dirac
from .dynamic import (
    DEFAULT_STEPS,
    assemble_dynamic,
    continuity_residual,
    semicoupling_cost,
)
from .errors import NumericalError, UbwError, ValidationError
from .flow import dynamic_catalog, flow
from .io import (
    IoError,
    emit_table,
    format_real,
    load_model,
    read_json,
    solution_from_json,
    solution_to_json,
    write_json,
)
from .measures import load_measure
from .reconstruction import DEFAULT_MAX_ITER, DEFAULT_TOL, decide_dynamic, emit_profile, reconstruct
from .transport import solve_static

_NEG_VALUE = re.compile(r"^-[\d.]")


def parse_grid(text: str) -> np.ndarray:
    """``a:b:n`` to ``n`` evenly spaced values."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"grid must look like a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValidationError(f"grid must look like a:b:n, got {text!r}") from exc
    if n < 1 or not (math.isfinite(a) and math.isfinite(b)):
        raise ValidationError("grid needs finite ends and at least one point")
    return np.linspace(a, b, n)


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")


def _provenance(args: argparse.Namespace, **extra) -> dict:
    out = {"ubw1": __version__, "command": args.command}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command") or value is None:
            continue
        out[key] = value
    out.update(extra)
    return out


def _model(args) -> object:
    return load_model(getattr(args, "model", None), getattr(args, "model_file", None))


def _model_record(args) -> dict:
    if getattr(args, "model_file", None):
        return read_json(args.model_file)
    return {"model": args.model}


# -- subcommands -------------------------------------------------------------------

def cmd_disc(args) -> int:
    disc = _model(args)
    if args.action == "eval":
        if args.m0 is None or args.m1 is None:
            raise ValidationError("disc eval needs --m0 and --m1")
        _emit(format_real(disc.c_s(args.m0, args.m1)))
        return 0
    z = parse_grid(args.grid)
    rows = [(float(v), float(disc.h_s(v)), float(disc.h_bar_s(v))) for v in z]
    if args.out:
        emit_table(rows, ["z", "h_s", "h_bar_s"], args.out, _provenance(args))
    else:
        for r in rows:
            _emit(",".join(format_real(v) for v in r))
    return 0


def cmd_flow(args) -> int:
    dp = dynamic_catalog(args.hd)
    times = args.t or [1.0]
    if args.action == "eval":
        if args.z is None:
            raise ValidationError("flow needs --z")
        for t in times:
            _emit(format_real(flow(dp, t, args.z).value))
        return 0
    z = parse_grid(args.grid)
    rows = [[float(v)] + [flow(dp, t, float(v)).value for t in times] for v in z]
    schema = ["z"] + [f"F_{format_real(float(t))}" for t in times]
    if args.out:
        emit_table(rows, schema, args.out, _provenance(args))
    else:
        for r in rows:
            _emit(",".join(format_real(v) for v in r))
    return 0


def cmd_reconstruct(args) -> int:
    disc = _model(args)
    grid = parse_grid(args.grid) if args.grid else None
    report = reconstruct(disc, grid, tol=args.tol, max_iter=args.max_iter)
    rows = emit_profile(report)
    _emit(f"model={disc.name} points={len(rows)} converged={report.converged_fraction:.4f} "
          f"d_lo={format_real(report.d_lo)} d_hi={format_real(report.d_hi)} "
          f"zeta_lo={format_real(report.zeta_lo)} zeta_hi={format_real(report.zeta_hi)}")
    if args.out:
        emit_table(rows, ["z", "q", "cd"], args.out, _provenance(args, tol=args.tol, max_iter=args.max_iter))
    return 0


def cmd_decide(args) -> int:
    disc = _model(args)
    report = reconstruct(disc)
    exists, _ = decide_dynamic(report)
    if exists:
        _emit("YES (q[h_S] concave)")
    else:
        _emit("NO (q[h_S] not concave)")
    _emit(f"necessary_ok={report.necessary_ok} sufficient_ok={report.sufficient_ok}")
    _emit(f"details: {report.details}")
    return 0


def cmd_solve(args) -> int:
    rho0 = load_measure(args.rho0)
    rho1 = load_measure(args.rho1, rho0.space)
    disc = _model(args)
    sol = solve_static(rho0, rho1, disc, k_cuts=args.cuts)
    _emit(f"value in [{format_real(sol.dual_value)}, {format_real(sol.primal_value)}] gap={format_real(sol.gap)}")
    _emit("partition=" + "".join(sol.partition))
    if args.out:
        write_json(solution_to_json(sol, _model_record(args)), args.out)
    return 0


def cmd_dirac(args) -> int:
    disc = _model(args)
    if args.action == "phase":
        rows = phase_diagram(disc, parse_grid(args.Lgrid), parse_grid(args.ratiogrid))
        if args.out:
            emit_table(rows, ["L", "ratio", "regime"], args.out, _provenance(args))
        else:
            for r in rows:
                _emit(",".join(format_real(v) for v in r))
        return 0
    if args.L is None:
        raise ValidationError("dirac needs --L")
    sol = solve_dirac(DiracInstance(args.L, args.m00, args.m0L, args.m10, args.m1L, disc))
    for key in ("a", "b", "alpha", "beta", "s", "regime", "value", "unique", "flipped", "l_min", "l_max"):
        v = getattr(sol, key)
        _emit(f"{key}={format_real(v) if v is not None else 'none'}")
    return 0


def cmd_dynamic(args) -> int:
    sol, disc = solution_from_json(read_json(args.from_solution))
    dp = dynamic_catalog(args.hd)
    opt = assemble_dynamic(sol, dp, args.steps, disc=disc)
    _emit(f"total_cost={format_real(opt.total_cost)} excess={format_real(opt.excess)} "
          f"residual={format_real(continuity_residual(opt))}")
    if args.out:
        rows = []
        for point, tr in zip(opt.points, opt.trajectories):
            rates = np.append(tr.rates, tr.rates[-1])
            rows.extend((float(t), point, float(m), float(r)) for t, m, r in zip(tr.times, tr.masses, rates))
        emit_table(rows, ["t", "point", "m", "zeta"], args.out, _provenance(args))
    return 0


def cmd_sc(args) -> int:
    disc = _model(args)
    primal, dual = semicoupling_cost(disc, args.dx, args.m0, args.m1)
    _emit(f"primal={format_real(primal)} dual={format_real(dual)}")
    return 0


def cmd_selftest(args) -> int:
    target = Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"
    if not target.exists():
        raise ValidationError(f"acceptance suite not found at {target}; run from a source checkout")
    try:
        import pytest
    except ImportError as exc:
        raise ValidationError("selftest needs pytest installed") from exc
    if args.seed is not None:
        os.environ["UBW1_SEED"] = str(args.seed)
    code = pytest.main([str(target), "-q", "-s"])
    return 0 if code == 0 else 1


# -- parser ------------------------------------------------------------------------

def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="catalog name, e.g. hellinger or pwl(-2,-1,2,1,2,0.5)")
    p.add_argument("--model-file", dest="model_file", help='JSON with {"h_s": {"breakpoints": [...], "values": [...]}}')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ubw1", description="Unbalanced W1 transport: static, dynamic and two-Dirac tools.")
    parser.add_argument("--version", action="version", version=f"ubw1 {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("disc", help="evaluate mass-change costs and profiles")
    p.add_argument("action", nargs="?", choices=["eval", "table"], default="eval")
    _add_model(p)
    p.add_argument("--m0", type=float)
    p.add_argument("--m1", type=float)
    p.add_argument("--grid", default="-3:3:61")
    p.add_argument("--out")
    p.set_defaults(func=cmd_disc)

    p = sub.add_parser("flow", help="flow of the growth ODE")
    p.add_argument("action", nargs="?", choices=["eval", "table"], default="eval")
    p.add_argument("--hd", required=True)
    p.add_argument("--t", type=float, action="append")
    p.add_argument("--z", type=float)
    p.add_argument("--grid", default="-2:2:41")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("reconstruct", help="recover the growth profile from a static model")
    _add_model(p)
    p.add_argument("--grid")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("decide", help="does the static model have a dynamic counterpart?")
    _add_model(p)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("solve", help="static transport between two measures")
    p.add_argument("--rho0", required=True)
    p.add_argument("--rho1", required=True)
    _add_model(p)
    p.add_argument("--cuts", type=int, default=65)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dirac", help="two-site closed-form solver and phase diagrams")
    p.add_argument("action", nargs="?", choices=["solve", "phase"], default="solve")
    _add_model(p)
    p.add_argument("--L", type=float)
    p.add_argument("--m00", type=float, default=1.0)
    p.add_argument("--m0L", type=float, default=0.0)
    p.add_argument("--m10", type=float, default=0.0)
    p.add_argument("--m1L", type=float, default=1.0)
    p.add_argument("--Lgrid", default="0.1:5:50")
    p.add_argument("--ratiogrid", default="0.05:20:80")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dirac)

    p = sub.add_parser("dynamic", help="assemble a dynamic optimizer from a saved solution")
    p.add_argument("--from-solution", dest="from_solution", required=True)
    p.add_argument("--hd", required=True)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dynamic)

    p = sub.add_parser("sc", help="semi-coupling cost between two sites")
    _add_model(p)
    p.add_argument("--dx", type=float, required=True)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--m1", type=float, default=1.0)
    p.set_defaults(func=cmd_sc)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_selftest)
    return parser


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let ``--grid -0.99:2.99:257`` through argparse by gluing it to its flag."""
    out: list[str] = []
    for tok in argv:
        if out and _NEG_VALUE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_negative_values(argv))
    try:
        return int(args.func(args))
    except (ValidationError, IoError) as exc:
        sys.stderr.write(f"ubw1: {type(exc).__name__}: {exc}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    except UbwError as exc:
        sys.stderr.write(f"ubw1: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
