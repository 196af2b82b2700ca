"""Command-line front end.

    dualsched run SCENARIO.ini --out DIR [--jobs N]
    dualsched oracle SCENARIO.ini [--out FILE] [--x-tol TOL]
    dualsched summarize DIR
    dualsched check DIR

Exit codes: 0 on success (for `check`: every validation passed and for
`oracle`: the optimum certified), 1 when a validation or certification
failed, 2 on bad usage or an invalid scenario file.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import load_scenario
from .experiment import check_artifacts, emit_summary, run_scenario
from .oracle import fluid_oracle
from .problem import ConfigError, ContractViolation

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualsched",
        description="Run, certify, and audit perturbed dual-ascent "
                    "scheduling scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser(
        "run", help="run every (step size, seed) job of a scenario")
    run_p.add_argument("scenario", help="scenario INI file")
    run_p.add_argument("--out", required=True,
                       help="output directory (must be empty or absent)")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default 1)")

    oracle_p = sub.add_parser(
        "oracle", help="solve the fluid problem and store the optimum")
    oracle_p.add_argument("scenario", help="scenario INI file")
    oracle_p.add_argument("--out", default=None,
                          help="where to store the oracle JSON "
                               "(default: oracle.json in the working "
                               "directory)")
    oracle_p.add_argument("--x-tol", type=float, default=1e-6,
                          help="grid refinement target (default 1e-6)")

    sum_p = sub.add_parser(
        "summarize", help="aggregate a finished scenario directory")
    sum_p.add_argument("dir", help="scenario output directory")

    check_p = sub.add_parser(
        "check", help="re-validate hashes, CSV shapes, ledger rows, and "
                      "stored certificates")
    check_p.add_argument("dir", help="scenario output directory")
    return parser


def _print_summary(rows) -> None:
    if not rows:
        print("(no summary rows)")
        return
    header = ("alpha", "k", "runs", "f_gap_mean", "f_gap_std", "slope_mean",
              "max_cont_ratio", "bounds_pass", "bounds_fail")
    table = [header]
    for row in rows:
        table.append((repr(row["alpha"]), str(row["k"]), str(row["runs"]),
                      f"{row['f_gap_mean']:.6g}", f"{row['f_gap_std']:.6g}",
                      f"{row['slope_mean']:.6g}",
                      f"{row['max_continuity_ratio']:.6g}",
                      str(row["bounds_pass"]), str(row["bounds_fail"])))
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for r in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    out = run_scenario(config, args.out, jobs=args.jobs)
    print(f"scenario '{config.name}': "
          f"{len(config.alphas) * len(config.seeds)} jobs -> {out}")
    _print_summary(emit_summary(out, write=False))
    return 0


def _cmd_oracle(args) -> int:
    config = load_scenario(args.scenario)
    result = fluid_oracle(config.spec, x_tol=args.x_tol,
                          reference_dual=config.reference_dual)
    out = args.out if args.out is not None else "oracle.json"
    result.save(out)
    print(f"x*      = {np.asarray(result.x_star).tolist()}")
    print(f"f*      = {result.f_star!r}")
    print(f"lambda* = {np.asarray(result.lambda_star).tolist()}")
    print(f"h*      = {result.h_star!r}  (duality gap {result.duality_gap:.3g})")
    print(f"stationarity    {result.stationarity:.3g}")
    print(f"complementarity {result.complementarity:.3g}")
    print(f"feasibility     {result.feasibility:.3g}")
    print(f"active rows     {list(result.active)}")
    print(f"levels          {result.levels} "
          f"(hull diameter {result.hull_diameter:.3g})")
    for note in result.notes:
        print(f"note: {note}")
    print(f"stored -> {out}")
    print("certified" if result.certified else "NOT certified")
    return 0 if result.certified else 1


def _cmd_summarize(args) -> int:
    rows = emit_summary(args.dir, write=True)
    _print_summary(rows)
    return 0


def _cmd_check(args) -> int:
    report = check_artifacts(args.dir)
    for item in report.items:
        print(f"{'ok  ' if item.ok else 'FAIL'}  {item.name}: {item.detail}")
    n_bad = len(report.failures())
    print(f"{len(report.items) - n_bad}/{len(report.items)} checks passed")
    return 0 if report.ok else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "oracle": _cmd_oracle,
               "summarize": _cmd_summarize, "check": _cmd_check}
    try:
        return handler[args.command](args)
    except (ConfigError, ContractViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
