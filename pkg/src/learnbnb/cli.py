"""Command-line front end for the experiment tasks."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXIT_CONFIG_ERROR, TASKS, ConfigError, ExperimentSpec, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="learnbnb",
        description=(
            "Learned-pruning branch-and-bound experiments: instance generation, "
            "exact and learned solving, policy training, transfer, baselines, "
            "and search-cost model verification."
        ),
    )
    sub = parser.add_subparsers(dest="task", required=True)
    descriptions = {
        "generate": "draw and persist feasible problem instances",
        "solve-exact": "solve instances with exact branch-and-bound",
        "train": "train a pruning policy by imitation on labeled instances",
        "solve-lorm": "solve instances with a trained pruning policy",
        "transfer": "adapt a trained policy to unlabeled instances by self-imitation",
        "baseline": "run the deflation baselines on instances",
        "theory": "compare analytic and simulated expected search costs",
        "bench": "end-to-end benchmark of every method against the oracle",
    }
    for task in TASKS:
        p = sub.add_parser(task, help=descriptions[task])
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", default="out", help="output directory (default ./out)")
        p.add_argument("--workers", type=int, default=1, help="instance-level worker pool width")
        p.add_argument(
            "--format", choices=("table", "csv"), default="table", dest="fmt",
            help="how to print result tables",
        )
        p.add_argument("--verbose", action="store_true", help="log progress")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = ExperimentSpec(
            task=args.task,
            config_path=args.config,
            seed=args.seed,
            out_dir=args.out,
            workers=args.workers,
            fmt=args.fmt,
        )
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG_ERROR
    return run_experiment(spec)


if __name__ == "__main__":
    sys.exit(main())
