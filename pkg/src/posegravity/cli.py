"""Command line entry point: ``solve``, ``bench`` and ``oracle-check``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bench import CONFIGURATIONS, CSV_COLUMNS, SceneConfig, oracle_check, run_experiment
from .errors import PoseGravityError
from .objective import LineCorrespondence, PointCorrespondence, SolverOptions
from .solver import estimate_pose


def load_problem(data: dict):
    """(points, lines, gravity) from the JSON problem layout."""
    if "gravity" not in data:
        raise ValueError("problem is missing 'gravity'")
    points = [PointCorrespondence(p["image"], p["world"]) for p in data.get("points", [])]
    lines = [LineCorrespondence(ln["normal"], ln["point"], ln["direction"]) for ln in data.get("lines", [])]
    return points, lines, data["gravity"]


def solutions_to_json(result) -> dict:
    return {
        "case": result.case.value,
        "solutions": [
            {
                "rotation": s.pose.rotation.tolist(),
                "translation": s.pose.translation.tolist(),
                "loss": s.loss,
            }
            for s in result.solutions
        ],
    }


def _cmd_solve(args) -> int:
    text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text()
    try:
        points, lines, gravity = load_problem(json.loads(text))
        options = SolverOptions(delta=args.delta, allow_recovery=not args.no_recovery)
        result = estimate_pose(points, lines, gravity, options)
    except (PoseGravityError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    # json writes floats with repr, i.e. shortest round-trip decimal
    out = json.dumps(solutions_to_json(result), indent=2)
    if args.output:
        Path(args.output).write_text(out + "\n")
    else:
        print(out)
    return 0


def _cmd_bench(args) -> int:
    cfg = SceneConfig(
        configuration=args.config,
        n_points=args.points,
        m_lines=args.lines,
        epsilon_noise=args.eps,
        gravity_noise_deg=args.grav_noise_deg,
        trials=args.trials,
        seed=args.seed,
        renormalize_bearings=args.renormalize_bearings,
    )
    options = SolverOptions(delta=args.delta, allow_recovery=not args.no_recovery)
    summary, _ = run_experiment(cfg, options, workers=args.workers)
    row = summary.csv_row()
    writer = csv.DictWriter(sys.stdout, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)
    if args.csv:
        path = Path(args.csv)
        fresh = not path.exists() or path.stat().st_size == 0
        with path.open("a", newline="") as fh:
            out = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            if fresh:
                out.writeheader()
            out.writerow(row)
    return 0


def _cmd_oracle_check(args) -> int:
    configurations = tuple(args.config) if args.config else CONFIGURATIONS
    report = oracle_check(args.trials, args.seed, configurations, samples=args.samples)
    print(json.dumps(report.as_dict(), indent=2))
    if not report.ok:
        print(f"oracle-check FAILED: {report.violations} loss violations, "
              f"{report.general_fallbacks} general-case fallbacks, "
              f"{report.residual_mismatches} residual mismatches", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posegravity",
                                     description="Camera pose from points and lines with a gravity prior.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem given as JSON")
    p.add_argument("--input", required=True, help="problem JSON file, or - for stdin")
    p.add_argument("--output", help="write solutions JSON here instead of stdout")
    p.add_argument("--delta", type=float, default=100.0, help="line direction residual scale")
    p.add_argument("--no-recovery", action="store_true", help="report no solution instead of recovering")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("bench", help="run a synthetic experiment and print a CSV summary")
    p.add_argument("--config", choices=CONFIGURATIONS, default="ImagePlane")
    p.add_argument("--points", type=int, default=2)
    p.add_argument("--lines", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.0, help="detection noise sigma")
    p.add_argument("--grav-noise-deg", type=float, default=0.0, help="gravity noise sigma in degrees")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="append the summary row to this CSV file")
    p.add_argument("--no-recovery", action="store_true")
    p.add_argument("--renormalize-bearings", action="store_true",
                   help="renormalize spherical/planar bearings after adding noise")
    p.add_argument("--delta", type=float, default=100.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("oracle-check", help="compare the solver against brute-force search")
    p.add_argument("--trials", type=int, default=1000, help="problems per configuration and noise level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", action="append", choices=CONFIGURATIONS,
                   help="restrict to a configuration (repeatable)")
    p.add_argument("--samples", type=int, default=4096, help="oracle grid size")
    p.set_defaults(func=_cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
