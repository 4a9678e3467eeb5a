"""Amplification counters and latency histograms."""
from __future__ import annotations

import csv
import io
import math
import threading
from bisect import bisect_left
from dataclasses import asdict, dataclass, field, fields
from typing import Optional


@dataclass(frozen=True)
class AmplificationStats:
    user_bytes_ingested: int = 0
    flush_bytes_written: int = 0
    compaction_bytes_written: int = 0
    compaction_bytes_read: int = 0
    per_level_compaction_count: tuple[int, ...] = ()
    disk_probes_point: int = 0
    disk_probes_range: int = 0
    point_reads: int = 0
    range_reads: int = 0
    filter_negatives: int = 0
    physical_bytes: int = 0
    logical_bytes_estimate: int = 0
    flushes: int = 0
    compactions: int = 0
    depth_growths: int = 0
    stalls: int = 0
    level_count: int = 1
    pinned_bytes: int = 0
    pinned_peak_bytes: int = 0

    @property
    def write_amplification(self) -> float:
        if not self.user_bytes_ingested:
            return 0.0
        return (self.flush_bytes_written + self.compaction_bytes_written) / self.user_bytes_ingested

    @property
    def space_amplification(self) -> float:
        if not self.logical_bytes_estimate:
            return 0.0
        return self.physical_bytes / self.logical_bytes_estimate

    @property
    def probes_per_point_read(self) -> float:
        return self.disk_probes_point / self.point_reads if self.point_reads else 0.0

    @property
    def probes_per_range_read(self) -> float:
        return self.disk_probes_range / self.range_reads if self.range_reads else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["per_level_compaction_count"] = ";".join(map(str, self.per_level_compaction_count))
        d["write_amplification"] = round(self.write_amplification, 6)
        d["space_amplification"] = round(self.space_amplification, 6)
        return d

    def to_kv(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.as_dict().items())

    def to_csv(self, header: bool = True) -> str:
        d = self.as_dict()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(d), lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(d)
        return buf.getvalue()


class StatsCollector:
    """Mutable counters behind a lock; :meth:`snapshot` returns a consistent copy."""

    _FIELDS = {f.name for f in fields(AmplificationStats)}

    def __init__(self):
        self._lock = threading.Lock()
        self._c = {name: 0 for name in self._FIELDS}
        self._c["per_level_compaction_count"] = []
        self._c["level_count"] = 1

    def add(self, **deltas: int) -> None:
        with self._lock:
            c = self._c
            for k, v in deltas.items():
                c[k] += v

    def count_compaction(self, source_level: int) -> None:
        with self._lock:
            counts = self._c["per_level_compaction_count"]
            while len(counts) < source_level:
                counts.append(0)
            counts[source_level - 1] += 1
            self._c["compactions"] += 1

    def set(self, **values) -> None:
        with self._lock:
            self._c.update(values)

    def snapshot(self, **overrides) -> AmplificationStats:
        with self._lock:
            d = dict(self._c)
            d["per_level_compaction_count"] = tuple(d["per_level_compaction_count"])
        d.update(overrides)
        return AmplificationStats(**d)


# ---------------------------------------------------------------------------
# latency


GROWTH = 1.25
MIN_US = 1.0
MAX_US = 1e7


def _bucket_bounds() -> list[float]:
    bounds = [MIN_US]
    while bounds[-1] < MAX_US:
        bounds.append(bounds[-1] * GROWTH)
    return bounds


BUCKET_BOUNDS = _bucket_bounds()


@dataclass
class LatencyHistogram:
    """Log-scaled latency buckets in microseconds (x1.25 from 1 us to 10 s)."""

    counts: list = field(default_factory=lambda: [0] * len(BUCKET_BOUNDS))
    count: int = 0
    sum: float = 0.0
    min: float = math.inf
    max: float = 0.0

    def record(self, micros: float) -> None:
        i = bisect_left(BUCKET_BOUNDS, micros)
        if i >= len(BUCKET_BOUNDS):
            i = len(BUCKET_BOUNDS) - 1
        self.counts[i] += 1
        self.count += 1
        self.sum += micros
        if micros < self.min:
            self.min = micros
        if micros > self.max:
            self.max = micros

    @property
    def mean(self) -> float:
        return self.sum / self.count if self.count else 0.0

    def quantile(self, q: float) -> float:
        """Upper bound of the bucket holding the q-th sample."""
        if not self.count:
            raise ValueError("quantile of an empty histogram")
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        rank = max(1, math.ceil(q * self.count))
        seen = 0
        for i, n in enumerate(self.counts):
            seen += n
            if seen >= rank:
                return BUCKET_BOUNDS[i]
        return BUCKET_BOUNDS[-1]

    def merge(self, other: "LatencyHistogram") -> None:
        self.counts = [a + b for a, b in zip(self.counts, other.counts)]
        self.count += other.count
        self.sum += other.sum
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)

    def summary(self) -> dict:
        if not self.count:
            return {"count": 0, "avg_us": 0.0, "p50": 0.0, "p90": 0.0, "p99": 0.0, "p999": 0.0}
        return {
            "count": self.count,
            "avg_us": self.mean,
            "p50": self.quantile(0.5),
            "p90": self.quantile(0.9),
            "p99": self.quantile(0.99),
            "p999": self.quantile(0.999),
        }


def merge_counts_per_level(trace: list, max_level: Optional[int] = None) -> list[int]:
    """Number of compactions out of each level in a compaction trace."""
    counts: list[int] = []
    for ev in trace:
        if ev.kind != "compaction":
            continue
        while len(counts) < ev.source_level:
            counts.append(0)
        counts[ev.source_level - 1] += 1
    if max_level is not None:
        counts.extend([0] * (max_level - len(counts)))
    return counts
