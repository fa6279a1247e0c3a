"""``lrgd-bench``: run the table, trajectory, scaling and spectrum experiments."""
from __future__ import annotations

import argparse
import sys

from ..errors import LRGDError
from .config import load_config
from .experiments import (
    format_table,
    run_rank_spectrum,
    run_scaling_experiment,
    run_table_experiment,
    run_trajectory_experiment,
)

RUNNERS = {
    "table": run_table_experiment,
    "trajectory": run_trajectory_experiment,
    "scaling": run_scaling_experiment,
    "spectrum": run_rank_spectrum,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="lrgd-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="key = value file overriding the shipped defaults")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="bench-out", help="output directory (default: bench-out)")
        sp.add_argument("--format", choices=("csv", "tsv"), default="csv")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise LRGDError("--seed must be nonnegative")
            cfg["seed"] = args.seed
        rows = RUNNERS[args.command](cfg, args.out, args.format, args.jobs)
    except (LRGDError, OSError) as exc:
        print(f"lrgd-bench: error: {exc}", file=sys.stderr)
        return 1
    if args.command == "table":
        print(format_table(rows, cfg))
        if any(r.status == "diverged" for r in rows):
            print("lrgd-bench: at least one run diverged", file=sys.stderr)
            return 2
    elif args.command == "trajectory":
        for algo, iters, counted, full, *_ in rows:
            print(f"{algo}: {iters} iterations, {counted} counted calls ({full} with checks)")
    else:
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
