"""Command-line entry point.

Verbs: ``fetch`` (API responses to fixture files), ``synth`` (generate
synthetic fixtures), ``run`` (full grid), ``report`` (re-emit reports from
stored per-pool results). Exit code is nonzero iff any grid cell failed.
The endpoint can be overridden with the CURVEBENCH_ENDPOINT variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import (DISPLAY_NAMES, MODEL_IDS, RunConfig, emit_report,
                    run_benchmark)
from .ingest import fetch_pool_snapshots
from .metrics import (aggregate, aggregate_csv, MetricSet, PoolReport, rank,
                      report_markdown)
from .synth import generate_synthetic

ENDPOINT_ENV = "CURVEBENCH_ENDPOINT"


def _add_common(parser):
    parser.add_argument("--config", help="JSON run-config file")
    parser.add_argument("--data", help="input data directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--models", help="comma-separated model ids")
    parser.add_argument("--pools", help="comma-separated pool ids")
    parser.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvebench")
    sub = parser.add_subparsers(dest="verb", required=True)

    fetch = sub.add_parser("fetch", help="download pool snapshots into fixture files")
    fetch.add_argument("--endpoint", default=None)
    fetch.add_argument("--pools", required=True, help="comma-separated pool ids")
    fetch.add_argument("--from", dest="start", type=int, required=True,
                       help="epoch seconds, inclusive")
    fetch.add_argument("--to", dest="end", type=int, required=True)
    fetch.add_argument("--out", required=True)

    synth = sub.add_parser("synth", help="generate synthetic fixtures")
    synth.add_argument("--out", required=True)
    synth.add_argument("--pools", type=int, default=28)
    synth.add_argument("--rows", type=int, default=1460)
    synth.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="run the full benchmark grid")
    _add_common(run)

    report = sub.add_parser("report", help="re-emit reports from stored results")
    report.add_argument("--results", required=True,
                        help="pool_reports.csv from a previous run")
    report.add_argument("--out", required=True)
    return parser


def _config_from_args(args) -> RunConfig:
    if args.config:
        config = RunConfig.from_json(args.config)
    else:
        config = RunConfig(data_dir=args.data or ".", out_dir=args.out or "out")
    if args.data:
        config.data_dir = args.data
    if args.out:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.models:
        config.models = args.models.split(",")
    if args.pools:
        config.pools = args.pools.split(",")
    if args.workers is not None:
        config.workers = args.workers
    if os.environ.get(ENDPOINT_ENV):
        config.endpoint = os.environ[ENDPOINT_ENV]
    unknown = set(config.models) - set(MODEL_IDS)
    if unknown:
        raise SystemExit(f"unknown model id(s): {sorted(unknown)}")
    return config


def _cmd_fetch(args) -> int:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        print("no endpoint given (flag --endpoint or CURVEBENCH_ENDPOINT)",
              file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    for pool in args.pools.split(","):
        records = fetch_pool_snapshots(pool, args.start, args.end, endpoint=endpoint)
        path = os.path.join(args.out, f"{pool}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([
                {"timestamp": r.timestamp, "pool_address": r.pool_address,
                 "pool_name": r.pool_name, "source": r.source,
                 "virtual_price": r.virtual_price, "volume_24h": r.volume_24h,
                 "apy": r.apy, "total_supply": r.total_supply,
                 "balances": list(r.balances)} for r in records], fh)
        print(f"{pool}: {len(records)} records -> {path}")
    return 0


def _cmd_synth(args) -> int:
    paths = generate_synthetic(args.out, pools=args.pools, rows=args.rows,
                               seed=args.seed)
    print(f"wrote {len(paths)} pool files to {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    result = run_benchmark(config)
    emit_report(result)
    for line in open(os.path.join(config.out_dir, "report.md"), encoding="utf-8"):
        print(line, end="")
    failed = result.failed_cells
    for cell in failed:
        print(f"FAILED {cell.pool_id}/{cell.model_id}: {cell.error}",
              file=sys.stderr)
    return 1 if failed else 0


def _cmd_report(args) -> int:
    reports = _read_pool_reports(args.results)
    agg = aggregate(reports)
    order = rank(agg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "aggregate.csv"), "w", encoding="utf-8") as fh:
        fh.write(aggregate_csv(agg, order))
    with open(os.path.join(args.out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(report_markdown(agg, order, DISPLAY_NAMES))
    print(report_markdown(agg, order, DISPLAY_NAMES), end="")
    return 0


def _read_pool_reports(path: str) -> list[PoolReport]:
    import csv

    halves: dict[tuple[str, str], dict[str, MetricSet]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["pool"], row["model"])
            halves.setdefault(key, {})[row["split"]] = MetricSet(
                mae=float(row["mae"]), rmse=float(row["rmse"]), da=float(row["da"]))
    return [PoolReport(pool_id=k[0], model_id=k[1], train=v["train"], test=v["test"])
            for k, v in sorted(halves.items())]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"fetch": _cmd_fetch, "synth": _cmd_synth,
               "run": _cmd_run, "report": _cmd_report}[args.verb]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
