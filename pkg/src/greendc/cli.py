"""Command-line experiment runner.

Exit codes: 0 when every run succeeded, 1 when any run failed, 2 for
configuration errors (bad experiment file, conflicting output directory).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_experiment
from .runner import expand, run_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greendc",
        description="Trace-driven datacenter simulator for carbon-aware operations.",
    )
    parser.add_argument("--experiment-path", required=True, help="experiment JSON file")
    parser.add_argument("--output-dir", default="output", help="root for per-run output trees")
    parser.add_argument("--parallelism", type=int, default=1, help="worker process count")
    parser.add_argument("--resume", action="store_true", help="skip runs that already have a summary.json")
    parser.add_argument("--list", action="store_true", help="print the scenario matrix without running")
    parser.add_argument(
        "--analytic-compare",
        action="store_true",
        help="emit per-task naive vs simulated shifting savings for shifting runs",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_experiment(args.experiment_path)
        matrix = expand(spec)
        if args.list:
            for run in matrix:
                print(
                    f"{run.run_id}  topology={run.topology_label} workload={run.workload_label} "
                    f"region={run.region_label} techniques={run.variant.label} seed={run.seed}"
                )
            print(f"{len(matrix)} runs")
            return 0
        return run_all(
            spec,
            Path(args.output_dir),
            parallelism=args.parallelism,
            resume=args.resume,
            analytic_compare=args.analytic_compare,
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
