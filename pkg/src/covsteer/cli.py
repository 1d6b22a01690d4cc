"""Command-line front end.

Thin client over the service handler layer: loads scenario and solution
documents, dispatches solves, writes solution documents and plot-ready CSV,
and returns the stable exit codes
{0 ok, 1 I/O, 2 validation, 3 non-convergence, 4 infeasible,
 5 statistical fail, 6 verification fail}.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import documents
from .errors import Infeasible
from .service import handlers

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _configure_logging() -> None:
    level = os.environ.get("COVSTEER_LOG", "error").lower()
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("covsteer").setLevel(
        _LOG_LEVELS.get(level, logging.ERROR))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covsteer",
        description="Incentive synthesis for zero-sum covariance steering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    steer = sub.add_parser("steer", help="solve the finite-horizon problem")
    steer.add_argument("scenario")
    steer.add_argument("--out", help="write the solution document here")
    steer.add_argument("--method", choices=("shooting", "minimax"),
                       default="shooting")
    steer.add_argument("--tol", type=float)
    steer.add_argument("--max-iters", type=int)
    steer.add_argument("--grid-steps", type=int)

    stat = sub.add_parser("stationary", help="solve the stationary problem")
    stat.add_argument("scenario")
    stat.add_argument("--out")

    simulate = sub.add_parser("simulate",
                              help="Monte Carlo check of a solution")
    simulate.add_argument("scenario")
    simulate.add_argument("solution")
    simulate.add_argument("--paths", type=int, default=10_000)
    simulate.add_argument("--dt", type=float, default=1e-3)
    simulate.add_argument("--seed", type=int, default=42)
    simulate.add_argument("--csv", help="write trajectory rows here")

    verify = sub.add_parser("verify", help="residual suite for a solution")
    verify.add_argument("scenario")
    verify.add_argument("solution")
    return parser


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _matrix_str(rows) -> str:
    return "[" + "; ".join(" ".join(f"{v:.8g}" for v in row)
                           for row in rows) + "]"


def cmd_steer(args) -> int:
    scenario = _load_json(args.scenario)
    overrides = {}
    if args.tol is not None:
        overrides["newton_tol"] = args.tol
    if args.max_iters is not None:
        overrides["max_newton_iters"] = args.max_iters
    if args.grid_steps is not None:
        scenario.setdefault("horizon", {})["steps"] = args.grid_steps
    result = handlers.run_steer(scenario, method=args.method,
                                overrides=overrides or None)
    summary = result["summary"]
    print(f"F = {_matrix_str(summary['F'])}")
    print(f"terminal_residual = {summary['terminal_residual']:.6e}")
    if args.out:
        documents.write_document(args.out, result["document"])
        print(f"solution written to {args.out}")
    return handlers.EXIT_OK


def cmd_stationary(args) -> int:
    scenario = _load_json(args.scenario)
    result = handlers.run_stationary(scenario)
    summary = result["summary"]
    print(f"Q_out = {_matrix_str(summary['Q_out'])}")
    print(f"K1 = {_matrix_str(summary['K1'])}")
    print(f"K2 = {_matrix_str(summary['K2'])}")
    print(f"hurwitz_margin = {summary['hurwitz_margin']:.6e}")
    print(f"epsilon_used = {summary['epsilon_used']:g}")
    if args.out:
        documents.write_document(args.out, result["document"])
        print(f"solution written to {args.out}")
    return handlers.EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load_json(args.scenario)
    solution = _load_json(args.solution)
    result = handlers.run_simulate(scenario, solution, paths=args.paths,
                                   dt=args.dt, seed=args.seed)
    for t, d in zip(result["times"], result["distances"]):
        print(f"t = {t:.6g}: covariance_distance = {d:.6f}")
    print(f"threshold = {result['threshold']:.6f} "
          f"({'pass' if result['passed'] else 'FAIL'})")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["t", "i", "j", "empirical", "model", "target"])
            writer.writeheader()
            writer.writerows(result["rows"])
        print(f"trajectory rows written to {args.csv}")
    return handlers.EXIT_OK if result["passed"] else handlers.EXIT_STATISTICAL


def cmd_verify(args) -> int:
    scenario = _load_json(args.scenario)
    solution = _load_json(args.solution)
    result = handlers.run_verify(scenario, solution)
    for check in result["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        details = ", ".join(f"{k}={v:.3e}" if isinstance(v, float)
                            else f"{k}={v}"
                            for k, v in check["evidence"].items())
        print(f"[{status}] {check['name']}: {details}")
    for note in result["notes"]:
        print(note)
    return handlers.EXIT_OK if result["passed"] else handlers.EXIT_VERIFICATION


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    dispatch = {"steer": cmd_steer, "stationary": cmd_stationary,
                "simulate": cmd_simulate, "verify": cmd_verify}
    try:
        return dispatch[args.command](args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return handlers.EXIT_INFEASIBLE
    except Exception as exc:  # map every failure to the exit-code contract
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return handlers.exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
