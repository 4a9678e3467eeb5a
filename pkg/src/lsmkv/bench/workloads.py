"""Key distributions and workload definitions for the benchmark driver."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

YCSB_KEY_BYTES = 24
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def sequential_key(i: int, width: int = 16) -> bytes:
    """Zero-padded decimal key, as db_bench writes them."""
    return b"%0*d" % (width, i)


def fnv1a_64(n: int) -> int:
    h = FNV_OFFSET
    for _ in range(8):
        h ^= n & 0xFF
        h = (h * FNV_PRIME) & MASK64
        n >>= 8
    return h


def ycsb_key(keynum: int) -> bytes:
    """24-byte record key: ``user`` plus the hashed record number, zero padded."""
    return b"user%020d" % fnv1a_64(keynum)


def zeta(n: int, theta: float, start: int = 0, initial: float = 0.0) -> float:
    """sum_{i=start+1}^{n} 1 / i^theta, added to ``initial``."""
    if n <= start:
        return initial
    i = np.arange(start + 1, n + 1, dtype=np.float64)
    return initial + float(np.sum(i ** -theta))


class ZipfianGenerator:
    """Zipfian ranks in [0, items) by Gray et al.'s method, as YCSB draws them.

    Rank 0 is the most popular item. The item count may grow; the
    normalization constant is extended incrementally.
    """

    def __init__(self, items: int, theta: float = 0.99, rng: Optional[random.Random] = None):
        if items < 1:
            raise ValueError("need at least one item")
        self.theta = theta
        self.rng = rng or random.Random(0)
        self.alpha = 1.0 / (1.0 - theta)
        self.zeta2 = zeta(2, theta)
        self.items = items
        self.zetan = zeta(items, theta)
        self._eta = self._compute_eta()

    def _compute_eta(self) -> float:
        n, t = self.items, self.theta
        return (1 - (2.0 / n) ** (1 - t)) / (1 - self.zeta2 / self.zetan)

    def grow(self, items: int) -> None:
        if items > self.items:
            self.zetan = zeta(items, self.theta, self.items, self.zetan)
            self.items = items
            self._eta = self._compute_eta()

    def next(self) -> int:
        u = self.rng.random()
        uz = u * self.zetan
        if uz < 1.0:
            return 0
        if uz < 1.0 + 0.5**self.theta:
            return 1
        return min(self.items - 1, int(self.items * (self._eta * u - self._eta + 1) ** self.alpha))

    def rank_probability(self, rank: int) -> float:
        """Exact probability of ``rank`` (0-based) under the normalized law."""
        return 1.0 / ((rank + 1) ** self.theta * self.zetan)


class KeyDistribution(Enum):
    SEQUENTIAL = "sequential"
    UNIFORM = "uniform"
    ZIPFIAN = "zipfian"
    LATEST = "latest"


class KeyChooser:
    """Draws record numbers in [0, record_count) under one distribution."""

    def __init__(self, dist: KeyDistribution, record_count: int, rng: random.Random, theta: float = 0.99):
        self.dist = dist
        self.rng = rng
        self.count = record_count
        self._seq = 0
        self._zipf = ZipfianGenerator(record_count, theta, rng) if dist in (
            KeyDistribution.ZIPFIAN, KeyDistribution.LATEST) else None

    def inserted(self, new_count: int) -> None:
        """Record that the keyspace grew (inserts)."""
        self.count = new_count
        if self.dist is KeyDistribution.LATEST:
            self._zipf.grow(new_count)

    def next(self) -> int:
        d = self.dist
        if d is KeyDistribution.SEQUENTIAL:
            n = self._seq % self.count
            self._seq += 1
            return n
        if d is KeyDistribution.UNIFORM:
            return self.rng.randrange(self.count)
        if d is KeyDistribution.ZIPFIAN:
            # ranks over insertion order, bounded by the loaded records
            return self._zipf.next()
        # latest: the most recent insert is rank 0
        return max(0, self.count - 1 - self._zipf.next())


def gen_key(dist: KeyDistribution, i: int, keyspace: int, rng: Optional[random.Random] = None,
            width: int = 16) -> bytes:
    """One key under ``dist``; ``i`` is the operation index (used by sequential)."""
    if keyspace < 1:
        raise ValueError("keyspace must be >= 1")
    rng = rng or random.Random(i)
    if dist is KeyDistribution.SEQUENTIAL:
        return sequential_key(i % keyspace, width)
    if dist is KeyDistribution.UNIFORM:
        return sequential_key(rng.randrange(keyspace), width)
    z = ZipfianGenerator(keyspace, rng=rng).next()
    if dist is KeyDistribution.ZIPFIAN:
        return sequential_key(z, width)
    return sequential_key(keyspace - 1 - z, width)


class ValueSource:
    """Slices of a pre-generated random buffer, so values are cheap to produce."""

    def __init__(self, rng: random.Random, size: int = 1 << 20):
        self._buf = rng.randbytes(size)
        self._rng = rng
        self._pos = 0

    def get(self, n: int) -> bytes:
        if self._pos + n > len(self._buf):
            self._pos = 0
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out


# ---------------------------------------------------------------------------
# YCSB


class Op(Enum):
    READ = "read"
    UPDATE = "update"
    INSERT = "insert"
    SCAN = "scan"
    RMW = "read-modify-write"


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    op_mix: tuple[tuple[Op, float], ...]
    key_distribution: KeyDistribution
    record_count: int = 1_000_000
    operation_count: int = 100_000
    fields_per_record: int = 10
    field_bytes: int = 100
    scan_max_len: int = 100

    def __post_init__(self):
        total = sum(p for _, p in self.op_mix)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"op probabilities sum to {total}")
        if self.record_count < 1 or self.operation_count < 0:
            raise ValueError("record_count must be positive and operation_count non-negative")

    @property
    def value_bytes(self) -> int:
        return self.fields_per_record * self.field_bytes

    def with_counts(self, record_count: int, operation_count: int) -> "WorkloadSpec":
        from dataclasses import replace

        return replace(self, record_count=record_count, operation_count=operation_count)


YCSB_WORKLOADS = {
    "load": WorkloadSpec("load", ((Op.INSERT, 1.0),), KeyDistribution.SEQUENTIAL),
    "A": WorkloadSpec("A", ((Op.READ, 0.5), (Op.UPDATE, 0.5)), KeyDistribution.ZIPFIAN),
    "B": WorkloadSpec("B", ((Op.READ, 0.95), (Op.UPDATE, 0.05)), KeyDistribution.ZIPFIAN),
    "C": WorkloadSpec("C", ((Op.READ, 1.0),), KeyDistribution.ZIPFIAN),
    "D": WorkloadSpec("D", ((Op.READ, 0.95), (Op.INSERT, 0.05)), KeyDistribution.LATEST),
    "E": WorkloadSpec("E", ((Op.SCAN, 0.95), (Op.INSERT, 0.05)), KeyDistribution.ZIPFIAN),
    "F": WorkloadSpec("F", ((Op.READ, 0.5), (Op.RMW, 0.5)), KeyDistribution.ZIPFIAN),
}


def workload(name: str) -> WorkloadSpec:
    key = "load" if name.lower() == "load" else name.upper()
    try:
        return YCSB_WORKLOADS[key]
    except KeyError:
        raise ValueError(f"unknown YCSB workload {name!r}") from None


@dataclass
class OpChooser:
    spec: WorkloadSpec
    rng: random.Random
    _cum: list = field(default_factory=list)

    def __post_init__(self):
        acc = 0.0
        for op, p in self.spec.op_mix:
            acc += p
            self._cum.append((acc, op))

    def next(self) -> Op:
        u = self.rng.random()
        for acc, op in self._cum:
            if u < acc:
                return op
        return self._cum[-1][1]
