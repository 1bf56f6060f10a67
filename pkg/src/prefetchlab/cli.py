"""Command-line entry point: one subcommand per pipeline stage.

    prefetchlab <stage> --config experiment.json [--run-dir DIR] [--seed N]

Stages: gen, preprocess, train, tune, eval, simulate, sweep, report. When no
run directory is given, artifacts land in runs/<config-hash prefix> so runs
under different configurations never mix. Exit code 0 on success; failures
print a machine-readable JSON error record to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from prefetchlab import pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefetchlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    for stage in pipeline.STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="experiment config JSON file")
        p.add_argument("--run-dir", default=None, help="run directory (default: runs/<config hash>)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = pipeline.load_config(args.config, seed_override=args.seed)
        run_dir = args.run_dir or os.path.join("runs", pipeline.config_hash(cfg)[:12])
        manifest = pipeline.run_stage(args.stage, cfg, run_dir)
    except Exception as exc:  # every failure becomes a machine-readable record
        record = {"error": type(exc).__name__, "stage": args.stage, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"stage": args.stage, "run_dir": run_dir,
                      "config_hash": manifest["config_hash"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
