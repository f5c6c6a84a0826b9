"""Command line entry point: ``erlform run`` and ``erlform report``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from erlform.errors import ErlformError
from erlform.harness import (
    ALL_FORMULATIONS,
    ExperimentConfig,
    emit,
    load_records,
    run_experiment,
    summarize,
    write_reports,
)

log = logging.getLogger("erlform")

SUMMARY_NOTE = "objective maxima and threshold fractions are per-seed values averaged over seeds"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="erlform", description="Evolve reward shapings under five formulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write its outputs")
    r.add_argument("--config", required=True, help="flat YAML experiment config")
    r.add_argument("--formulation", action="append", choices=ALL_FORMULATIONS,
                   help="restrict to this formulation (repeatable)")
    r.add_argument("--seed", action="append", type=int, help="restrict to this seed (repeatable)")
    r.add_argument("--out-dir", help="output directory (overrides the config)")
    r.add_argument("--deterministic", action="store_true",
                   help="force a single worker; outputs never depend on the worker count anyway")
    r.add_argument("--threads", type=int, default=1, help="worker processes for training children")

    rep = sub.add_parser("report", help="rebuild summary.csv and ranking.csv from stored run records")
    rep.add_argument("--in-dir", required=True)
    rep.add_argument("--rank-by", choices=("3d", "2d"), default="3d")
    rep.add_argument("--threshold", type=float, help="perf threshold (default: the one stored per run)")
    return p


def _print_summary(records, threshold=None) -> None:
    print(f"# {SUMMARY_NOTE}")
    for row in summarize(records, threshold):
        print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if args.formulation:
        overrides["formulations"] = tuple(dict.fromkeys(args.formulation))
    if args.seed:
        overrides["seeds"] = tuple(dict.fromkeys(args.seed))
    if args.out_dir:
        overrides["output_dir"] = args.out_dir
    cfg = dataclasses.replace(cfg, **overrides)
    if args.threads < 1:
        raise ErlformError("--threads must be >= 1")
    workers = 1 if args.deterministic else args.threads

    records = run_experiment(cfg, workers=workers)
    paths = emit(records, cfg.output_dir, cfg.rank_by)
    log.info("wrote %d files to %s", len(paths), cfg.output_dir)
    _print_summary(records)
    failed = [r for r in records if r.error]
    for r in failed:
        print(f"run {r.formulation} seed {r.seed} failed: {r.error}", file=sys.stderr)
    return 1 if failed and len(failed) == len(records) else 0


def cmd_report(args) -> int:
    records = load_records(args.in_dir)
    if not records:
        raise ErlformError(f"no run_*.json files in {args.in_dir}")
    write_reports(records, Path(args.in_dir), args.rank_by, args.threshold)
    _print_summary(records, args.threshold)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_report(args)
    except (ErlformError, OSError) as exc:
        print(f"erlform: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
