"""Command-line front end: solve, sweep, and verify scenario files.

Exit codes: 0 optimal (or verification pass), 2 certified infeasible,
3 numerical failure or iteration limit, 4 bad input, 1 verification fail.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .scenario import (
    InfeasibleScenarioError,
    RunSettings,
    ScenarioError,
    SolverFailureError,
    assemble_scenario,
    load_scenario,
    profile_from_json_dict,
    run,
    sweep,
)
from .solver import SolverSettings
from .transcription import build_grid
from .verification import verification_ledger

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER_FAILURE = 3
EXIT_INPUT = 4


def _solver_settings(args) -> SolverSettings:
    if args.tol is None:
        return SolverSettings()
    return SolverSettings(tol_feas=args.tol, tol_gap=args.tol, tol_infeas=args.tol)


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, scenario.name)

    if args.dump_program:
        grid = None if args.grid is None else build_grid(args.grid)
        program = assemble_scenario(scenario, grid)
        with open(f"{stem}.program.json", "w") as fh:
            json.dump(program.to_json_dict(), fh)
        print(f"wrote {stem}.program.json")

    settings = RunSettings(grid_override=args.grid, solver=_solver_settings(args))
    try:
        out = run(scenario, settings)
    except InfeasibleScenarioError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.report.certificate is not None:
            print(f"certificate: {exc.report.certificate['kind']}, residual {exc.report.certificate['residual']:.3e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE

    csv_path = f"{stem}.trajectory.csv"
    json_path = f"{stem}.trajectory.json"
    out.write_csv(csv_path)
    with open(json_path, "w") as fh:
        json.dump(out.to_json_dict(), fh)
    print(
        f"{scenario.name}: {out.status}, T = {out.total_time:.6f} s, "
        f"{out.meta['iterations']} iterations, {out.meta['wall_time']:.2f} s wall"
    )
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise ScenarioError("--values is empty")
    points = sweep(
        scenario,
        args.param,
        values,
        grid=args.grid,
        solver=_solver_settings(args),
        threads=args.threads,
    )
    print(f"{'value':>12}  {'status':<16}  {'T [s]':>12}")
    for pt in points:
        t_str = f"{pt.total_time:.6f}" if pt.total_time is not None else "-"
        print(f"{pt.value:>12.6g}  {pt.status:<16}  {t_str:>12}")
    if args.out:
        payload = {
            "scenario": scenario.name,
            "param": args.param,
            "points": [
                {"value": p.value, "status": p.status, "total_time": p.total_time, "objective": p.objective}
                for p in points
            ],
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"wrote {args.out}")
    if any(p.status in ("MaxIterations", "NumericalFailure") for p in points):
        return EXIT_SOLVER_FAILURE
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        with open(args.output) as fh:
            dump = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"trajectory file {args.output!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"trajectory file {args.output!r} is not valid JSON: {exc}") from exc
    profile, _, _ = profile_from_json_dict(dump)
    ledger = verification_ledger(scenario, profile, tolerance=args.tolerance)
    text = json.dumps(ledger, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK if ledger["passed"] else EXIT_VERIFY_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topp",
        description="Time-optimal path timing through contact-consistent conic optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one scenario and write trajectory outputs")
    p_solve.add_argument("scenario", help="scenario JSON file")
    p_solve.add_argument("--grid", type=int, default=None, help="override the grid interval count")
    p_solve.add_argument("--out", default=None, help="output directory (default: current)")
    p_solve.add_argument("--dump-program", action="store_true", help="also write the assembled conic program")
    p_solve.add_argument("--tol", type=float, default=None, help="solver feasibility/gap tolerance")
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="re-solve over a list of parameter values")
    p_sweep.add_argument("scenario", help="scenario JSON file")
    p_sweep.add_argument(
        "--param",
        action="append",
        required=True,
        help="dotted path into the scenario ('objects.box.mass'); repeat to set several fields",
    )
    p_sweep.add_argument("--values", required=True, help="comma-separated parameter values")
    p_sweep.add_argument("--grid", type=int, default=None)
    p_sweep.add_argument("--tol", type=float, default=None)
    p_sweep.add_argument("--threads", type=int, default=None, help="worker processes (default: TOPP_THREADS or CPU count)")
    p_sweep.add_argument("--out", default=None, help="write sweep results to a JSON file")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="audit a trajectory output against its scenario")
    p_verify.add_argument("scenario", help="scenario JSON file")
    p_verify.add_argument("output", help="trajectory JSON written by 'topp solve'")
    p_verify.add_argument("--tolerance", type=float, default=1e-6, help="audit tolerance")
    p_verify.add_argument("--out", default=None, help="write the ledger to a file instead of stdout")
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
