"""``lsmkv-bench``: run db_bench operations or YCSB workloads and print a latency table."""
from __future__ import annotations

import argparse
import csv
import shutil
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..core import (
    GiB,
    Garnering,
    Leveling,
    MiB,
    NoFilter,
    OptimizedFilter,
    PolicyConfig,
    UniformFilter,
)
from ..db import DB
from .runner import CSV_COLUMNS, BenchReport, Harness, format_table
from .workloads import workload

DEFAULT_LOAD_BYTES = 1 * GiB
DEFAULT_OPS = 100_000


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsmkv-bench", description=__doc__)
    ap.add_argument("--db", required=True, help="store directory")
    ap.add_argument("--policy", choices=("garnering", "leveling"), default="garnering")
    ap.add_argument("--c", type=float, default=0.8, help="Garnering shrink factor")
    ap.add_argument("--k", type=float, default=2.0, help="Garnering base ratio")
    ap.add_argument("--t", type=int, default=2, help="leveling size ratio")
    ap.add_argument("--value-bytes", type=int, default=100)
    ap.add_argument("--num", type=int, default=None,
                    help="entries written by fills (default: 1 GiB of key+value bytes)")
    ap.add_argument("--reads", type=int, default=DEFAULT_OPS, help="operations for read and seek benchmarks")
    ap.add_argument("--benchmarks", default="", help="comma list, e.g. fillrandom,readrandom,seekrandom")
    ap.add_argument("--ycsb", default="", help="comma list of load and A..F; load runs first if missing")
    ap.add_argument("--record-count", type=int, default=None,
                    help="YCSB records loaded (default: 1 GiB of records)")
    ap.add_argument("--operation-count", type=int, default=DEFAULT_OPS)
    ap.add_argument("--bits-per-key", type=float, default=10.0)
    ap.add_argument("--filter-mode", choices=("none", "uniform", "optimized"), default="none")
    ap.add_argument("--memtable-bytes", type=int, default=4 * MiB)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None, help="append result rows to this CSV file")
    ap.add_argument("--sync", type=int, choices=(0, 1), default=0, help="fsync the log on every write")
    ap.add_argument("--inline", action="store_true", help="run compactions in the writer thread")
    ap.add_argument("--fresh", action="store_true", help="delete the store directory first")
    # accepted for command-line compatibility; the store has neither
    ap.add_argument("--compression", choices=("none",), default="none")
    ap.add_argument("--cache-bytes", type=int, choices=(0,), default=0)
    return ap


def config_from_args(args: argparse.Namespace) -> PolicyConfig:
    if args.policy == "leveling":
        policy = Leveling(T=args.t)
    else:
        policy = Garnering(c=args.c, k=args.k)
    if args.filter_mode == "uniform":
        fmode = UniformFilter(args.bits_per_key)
    elif args.filter_mode == "optimized":
        fmode = OptimizedFilter(args.bits_per_key)
    else:
        fmode = NoFilter()
    return PolicyConfig(memtable_bytes=args.memtable_bytes, policy=policy, filter_mode=fmode)


def write_csv(path: str, reports: Sequence[BenchReport]) -> None:
    p = Path(path)
    new = not p.exists() or p.stat().st_size == 0
    with p.open("a", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        if new:
            w.writeheader()
        for r in reports:
            w.writerow(r.row())


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    benchmarks = [b.strip().lower() for b in args.benchmarks.split(",") if b.strip()]
    ycsb = [w.strip() for w in args.ycsb.split(",") if w.strip()]
    if not benchmarks and not ycsb:
        print("nothing to run: pass --benchmarks and/or --ycsb", file=sys.stderr)
        return 2
    try:
        config = config_from_args(args)
        specs = [workload(w) for w in ycsb]
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    num = args.num if args.num is not None else DEFAULT_LOAD_BYTES // (16 + args.value_bytes)
    if specs and specs[0].name != "load":
        specs.insert(0, workload("load"))
    if specs:
        records = args.record_count
        if records is None:
            records = DEFAULT_LOAD_BYTES // (24 + specs[0].value_bytes)
        specs = [s.with_counts(records, args.operation_count) for s in specs]

    if args.fresh:
        shutil.rmtree(args.db, ignore_errors=True)
    reports: list[BenchReport] = []
    db = DB.open(args.db, config, sync=bool(args.sync), background=not args.inline)
    try:
        harness = Harness(db, seed=args.seed, num=num)
        for b in benchmarks:
            n = num if b.startswith("fill") else args.reads
            reports.append(harness.run_db_bench(b, n, args.value_bytes))
            print(f"done {b}", file=sys.stderr)
        for spec in specs:
            reports.append(harness.run_ycsb(spec))
            print(f"done ycsb-{spec.name}", file=sys.stderr)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    finally:
        db.close()
    print(format_table(reports))
    if args.csv:
        write_csv(args.csv, reports)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
