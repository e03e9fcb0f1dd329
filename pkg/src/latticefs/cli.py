"""Command-line entry point.

    latticefs <stage> --config run.yaml [--seed N] [--out DIR] [--workers N]

Stages: synth, prep, lattice, sample, mi, train, rank, eval, bench, pipeline
(pipeline = every stage in order). Exit codes: 0 success, 1 configuration or
missing-artifact problems, 2 runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from . import bench as bench_mod
from . import pipeline
from .config import ConfigError, load_config

STAGE_ORDER = [
    "synth", "prep", "lattice", "sample", "mi", "train", "rank", "eval",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latticefs",
        description=(
            "Top-K mutual-information feature subsets per subgroup under "
            "systematic missing data"
        ),
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGE_ORDER + ["bench", "pipeline"]:
        p = sub.add_parser(stage)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the seed list")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, help="per-subgroup parallelism cap")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds = [args.seed]
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.validate()
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"latticefs: configuration error: {err}", file=sys.stderr)
        return 1

    try:
        if args.stage == "bench":
            bench_mod.run_bench(cfg)
        elif args.stage == "pipeline":
            stages = STAGE_ORDER if cfg.synth is not None else STAGE_ORDER[1:]
            pipeline.run_stages(cfg, stages)
        else:
            pipeline.run_stages(cfg, [args.stage])
    except (pipeline.MissingArtifact, ConfigError, ValueError) as err:
        print(f"latticefs: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # runtime failure
        print(f"latticefs: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
