"""db_bench-style operations and YCSB workloads against a :class:`~lsmkv.db.DB`."""
from __future__ import annotations

import random
import re
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import Garnering, Leveling, PolicyConfig
from ..db import DB
from ..stats import LatencyHistogram
from .workloads import (
    YCSB_KEY_BYTES,
    KeyChooser,
    Op,
    OpChooser,
    ValueSource,
    WorkloadSpec,
    ycsb_key,
)

DB_BENCH_OPS = ("fillseq", "fillrandom", "readrandom", "seekrandom", "seekrandomnext10", "seekrandomnext100")
_NEXT_N = re.compile(r"^seekrandomnext(\d+)$")


class LogicalSize:
    """Exact logical bytes for an integer-indexed keyspace (key + value bytes per live key)."""

    def __init__(self, capacity: int, key_bytes: int):
        self.key_bytes = key_bytes
        self._lens = np.full(max(capacity, 1), -1, dtype=np.int32)
        self.total = 0

    def _grow(self, i: int) -> None:
        n = max(i + 1, 2 * len(self._lens))
        grown = np.full(n, -1, dtype=np.int32)
        grown[: len(self._lens)] = self._lens
        self._lens = grown

    def put(self, i: int, value_len: int) -> None:
        if i >= len(self._lens):
            self._grow(i)
        old = int(self._lens[i])
        if old < 0:
            self.total += self.key_bytes + value_len
        else:
            self.total += value_len - old
        self._lens[i] = value_len

    def delete(self, i: int) -> None:
        if i < len(self._lens) and self._lens[i] >= 0:
            self.total -= self.key_bytes + int(self._lens[i])
            self._lens[i] = -1


@dataclass
class BenchReport:
    benchmark: str
    policy: str
    params: str
    ops: int
    elapsed_s: float
    hist: LatencyHistogram
    wa: float = 0.0
    sa: float = 0.0
    disk_probes: float = 0.0
    op_counts: dict = field(default_factory=dict)
    found: int = 0
    level_count: int = 0
    nonempty_levels: int = 0

    @property
    def throughput_kops(self) -> float:
        return self.ops / self.elapsed_s / 1000.0 if self.elapsed_s > 0 else 0.0

    def row(self) -> dict:
        s = self.hist.summary()
        return {
            "benchmark": self.benchmark,
            "policy": self.policy,
            "params": self.params,
            "ops": self.ops,
            "avg_us": round(s["avg_us"], 3),
            "p90": round(s["p90"], 3),
            "p99": round(s["p99"], 3),
            "p999": round(s["p999"], 3),
            "throughput_kops": round(self.throughput_kops, 3),
            "wa": round(self.wa, 4),
            "sa": round(self.sa, 4),
            "disk_probes": round(self.disk_probes, 4),
        }


CSV_COLUMNS = ("benchmark", "policy", "params", "ops", "avg_us", "p90", "p99", "p999",
               "throughput_kops", "wa", "sa", "disk_probes")


def policy_label(config: PolicyConfig) -> tuple[str, str]:
    p = config.policy
    if isinstance(p, Leveling):
        return "leveling", f"T={p.T}"
    assert isinstance(p, Garnering)
    return "garnering", f"c={p.c:g};k={p.k:g}"


class Harness:
    """Runs benchmark phases against one store, keeping the logical-size ledger between them."""

    def __init__(self, db: DB, seed: int = 0, key_width: int = 16, num: int = 0):
        self.db = db
        self.seed = seed
        self.key_width = key_width
        self.rng = random.Random(seed)
        self.values = ValueSource(random.Random(seed ^ 0x5EED))
        self.logical = LogicalSize(num, key_width)
        self.ycsb_logical: Optional[LogicalSize] = None
        self.ycsb_records = 0
        self.num = num
        self.policy, self.params = policy_label(db.config)

    # -- helpers ---------------------------------------------------------

    def _probes(self) -> int:
        s = self.db.stats()
        return s.disk_probes_point + s.disk_probes_range

    def _report(self, name: str, ops: int, elapsed: float, hist: LatencyHistogram, probes_before: int,
                logical: Optional[LogicalSize], **extra) -> BenchReport:
        stats = self.db.stats(logical_bytes_estimate=logical.total if logical else None)
        return BenchReport(
            benchmark=name, policy=self.policy, params=self.params, ops=ops, elapsed_s=elapsed, hist=hist,
            wa=stats.write_amplification, sa=stats.space_amplification,
            disk_probes=(self._probes() - probes_before) / ops if ops else 0.0,
            level_count=stats.level_count, nonempty_levels=self.db.nonempty_disk_levels(), **extra)

    # -- db_bench --------------------------------------------------------

    def run_db_bench(self, op: str, n: int, value_bytes: int = 100) -> BenchReport:
        """One db_bench operation; ``n`` operations (or ``n`` keys of keyspace for fills)."""
        op = op.lower()
        db = self.db
        rng = self.rng
        width = self.key_width
        keyspace = max(self.num, n, 1)
        hist = LatencyHistogram()
        record = hist.record
        clock = time.perf_counter_ns
        probes_before = self._probes()
        found = 0
        start = time.perf_counter()
        if op in ("fillseq", "fillrandom"):
            get_value = self.values.get
            logical = self.logical
            for i in range(n):
                k = i if op == "fillseq" else rng.randrange(keyspace)
                key = b"%0*d" % (width, k)
                value = get_value(value_bytes)
                t0 = clock()
                db.put(key, value)
                record((clock() - t0) / 1000.0)
                logical.put(k, value_bytes)
        elif op == "readrandom":
            for _ in range(n):
                key = b"%0*d" % (width, rng.randrange(keyspace))
                t0 = clock()
                v = db.get(key)
                record((clock() - t0) / 1000.0)
                found += v is not None
        elif op == "seekrandom" or _NEXT_N.match(op):
            m = _NEXT_N.match(op)
            # the positioned entry, then N calls to next
            take = 1 + (int(m.group(1)) if m else 0)
            for _ in range(n):
                key = b"%0*d" % (width, rng.randrange(keyspace))
                t0 = clock()
                out = db.scan(key, take)
                record((clock() - t0) / 1000.0)
                found += bool(out)
        elif op == "waitcompaction":
            db.wait_for_compactions()
        elif op == "compact":
            db.compact_all()
        else:
            raise ValueError(f"unknown benchmark {op!r}")
        elapsed = time.perf_counter() - start
        return self._report(op, n if hist.count else 0, elapsed, hist, probes_before, self.logical, found=found)

    # -- YCSB ------------------------------------------------------------

    def run_ycsb(self, spec: WorkloadSpec) -> BenchReport:
        """Load inserts ``record_count`` records; A-F run ``operation_count`` operations."""
        db = self.db
        rng = self.rng
        value_bytes = spec.value_bytes
        get_value = self.values.get
        hist = LatencyHistogram()
        clock = time.perf_counter_ns
        counts = {op.value: 0 for op, _ in spec.op_mix}
        probes_before = self._probes()
        if self.ycsb_logical is None:
            self.ycsb_logical = LogicalSize(spec.record_count, YCSB_KEY_BYTES)
        logical = self.ycsb_logical
        found = 0
        start = time.perf_counter()

        if spec.name == "load":
            for i in range(spec.record_count):
                key = ycsb_key(self.ycsb_records)
                value = get_value(value_bytes)
                t0 = clock()
                db.put(key, value)
                hist.record((clock() - t0) / 1000.0)
                logical.put(self.ycsb_records, value_bytes)
                self.ycsb_records += 1
            counts["insert"] = spec.record_count
            elapsed = time.perf_counter() - start
            # measured phases start from a settled tree, as YCSB runs do after loading
            db.wait_for_compactions()
            return self._report("ycsb-load", spec.record_count, elapsed, hist, probes_before, logical,
                                op_counts=counts)

        if self.ycsb_records == 0:
            raise RuntimeError("run the YCSB load phase before workloads A-F")
        chooser = KeyChooser(spec.key_distribution, self.ycsb_records, rng)
        ops = OpChooser(spec, rng)
        for _ in range(spec.operation_count):
            op = ops.next()
            counts[op.value] += 1
            if op is Op.INSERT:
                keynum = self.ycsb_records
                key = ycsb_key(keynum)
                value = get_value(value_bytes)
                t0 = clock()
                db.put(key, value)
                hist.record((clock() - t0) / 1000.0)
                self.ycsb_records += 1
                logical.put(keynum, value_bytes)
                chooser.inserted(self.ycsb_records)
                continue
            keynum = chooser.next()
            key = ycsb_key(keynum)
            if op is Op.READ:
                t0 = clock()
                v = db.get(key)
                hist.record((clock() - t0) / 1000.0)
                found += v is not None
            elif op is Op.UPDATE:
                value = get_value(value_bytes)
                t0 = clock()
                db.put(key, value)
                hist.record((clock() - t0) / 1000.0)
                logical.put(keynum, value_bytes)
            elif op is Op.RMW:
                value = get_value(value_bytes)
                t0 = clock()
                old = db.get(key)
                db.put(key, value)
                hist.record((clock() - t0) / 1000.0)
                found += old is not None
                logical.put(keynum, value_bytes)
            else:
                length = rng.randint(1, spec.scan_max_len)
                t0 = clock()
                out = db.scan(key, length)
                hist.record((clock() - t0) / 1000.0)
                found += bool(out)
        elapsed = time.perf_counter() - start
        return self._report(f"ycsb-{spec.name}", spec.operation_count, elapsed, hist, probes_before, logical,
                            op_counts=counts, found=found)


def run_db_bench(db: DB, op: str, n: int, value_bytes: int = 100, seed: int = 0,
                 harness: Optional[Harness] = None) -> BenchReport:
    h = harness or Harness(db, seed=seed, num=n)
    return h.run_db_bench(op, n, value_bytes)


def run_ycsb(db: DB, spec: WorkloadSpec, seed: int = 0, harness: Optional[Harness] = None) -> BenchReport:
    h = harness or Harness(db, seed=seed)
    return h.run_ycsb(spec)


def format_table(reports: Sequence[BenchReport]) -> str:
    rows = [r.row() for r in reports]
    if not rows:
        return "(no benchmarks run)"
    cols = list(CSV_COLUMNS)
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines.append("  ".join("-" * widths[c] for c in cols))
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines)
