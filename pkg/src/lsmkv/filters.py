"""Bloom filters and per-level false-positive-rate budgeting.

The allocation assigns each level a false positive rate proportional to its
share of entries: with capacity ratios ``k / c^(L-i)`` between adjacent levels,
level ``L - j`` gets ``p_L * c^(j(j-1)/2) / k^j``. The last-level rate is then
solved so the total memory matches the budget.
"""
from __future__ import annotations

import math
import struct
import zlib
from array import array
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import xxhash

from .core import CorruptionError

LN2_SQ = math.log(2) ** 2
MASK64 = (1 << 64) - 1
MIN_FPR = 1e-9

_hash128 = xxhash.xxh3_128_intdigest


def fpr_model(bits_per_entry: float) -> float:
    """Expected false positive rate for a filter with this many bits per entry."""
    if bits_per_entry < 0:
        raise ValueError("bits_per_entry must be non-negative")
    return min(1.0, max(math.exp(-LN2_SQ * bits_per_entry), 5e-324))


def bits_for_fpr(p: float) -> float:
    """Inverse of :func:`fpr_model`: bits per entry needed for rate ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError("fpr must lie in (0, 1]")
    return -math.log(p) / LN2_SQ


def key_hashes(key: bytes) -> tuple[int, int]:
    h = _hash128(key)
    return h & MASK64, h >> 64


class BloomFilter:
    """Per-run bloom filter using double hashing over a 128-bit digest."""

    __slots__ = ("num_bits", "num_hashes", "entry_count", "_bits")

    def __init__(self, num_bits: int, num_hashes: int, bits: bytes | None = None, entry_count: int = 0):
        if num_bits < 1 or num_hashes < 1:
            raise ValueError("filter needs at least one bit and one hash")
        self.num_bits = num_bits
        self.num_hashes = num_hashes
        self.entry_count = entry_count
        nbytes = (num_bits + 7) // 8
        self._bits = bytearray(bits) if bits is not None else bytearray(nbytes)
        if len(self._bits) != nbytes:
            raise ValueError("bit array length does not match num_bits")

    @staticmethod
    def hashes_for(bits_per_entry: float) -> int:
        return max(1, round(math.log(2) * bits_per_entry))

    @classmethod
    def sized(cls, entry_count: int, bits_per_entry: float) -> "BloomFilter":
        num_bits = max(64, math.ceil(entry_count * bits_per_entry))
        return cls(num_bits, cls.hashes_for(num_bits / max(entry_count, 1)), entry_count=entry_count)

    @classmethod
    def from_hashes(cls, h1: Sequence[int], h2: Sequence[int], bits_per_entry: float) -> "BloomFilter":
        """Build from precomputed hash halves in one vectorized pass."""
        n = len(h1)
        bf = cls.sized(n, bits_per_entry)
        if n:
            a = np.asarray(h1, dtype=np.uint64)
            b = np.asarray(h2, dtype=np.uint64)
            steps = np.arange(bf.num_hashes, dtype=np.uint64)
            with np.errstate(over="ignore"):
                pos = (a[:, None] + steps[None, :] * b[:, None]) % np.uint64(bf.num_bits)
            marks = np.zeros(bf.num_bits, dtype=bool)
            marks[pos.ravel()] = True
            bf._bits = bytearray(np.packbits(marks, bitorder="little").tobytes())
        return bf

    @classmethod
    def from_keys(cls, keys: Iterable[bytes], bits_per_entry: float) -> "BloomFilter":
        h1, h2 = array("Q"), array("Q")
        for key in keys:
            h = _hash128(key)
            h1.append(h & MASK64)
            h2.append(h >> 64)
        return cls.from_hashes(h1, h2, bits_per_entry)

    def add(self, key: bytes) -> None:
        h = _hash128(key)
        a, b = h & MASK64, h >> 64
        m = self.num_bits
        bits = self._bits
        for i in range(self.num_hashes):
            pos = ((a + i * b) & MASK64) % m
            bits[pos >> 3] |= 1 << (pos & 7)
        self.entry_count += 1

    def might_contain(self, key: bytes) -> bool:
        h = _hash128(key)
        a, b = h & MASK64, h >> 64
        m = self.num_bits
        bits = self._bits
        for i in range(self.num_hashes):
            pos = ((a + i * b) & MASK64) % m
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    __contains__ = might_contain

    @property
    def bits_per_entry(self) -> float:
        return self.num_bits / max(self.entry_count, 1)

    def encode(self) -> bytes:
        body = struct.pack("<IQ", self.num_hashes, self.num_bits) + bytes(self._bits)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def decode(cls, buf: bytes, entry_count: int = 0) -> "BloomFilter":
        if len(buf) < 16:
            raise CorruptionError("filter block truncated")
        body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
        if zlib.crc32(body) != crc:
            raise CorruptionError("filter block checksum mismatch")
        num_hashes, num_bits = struct.unpack_from("<IQ", body)
        return cls(num_bits, num_hashes, body[12:], entry_count=entry_count)


# ---------------------------------------------------------------------------
# allocation across levels


def level_fpr_ratio(distance: int, c: float, k: float) -> float:
    """Multiplier of the last-level rate for the level ``distance`` above it."""
    return c ** (distance * (distance - 1) / 2) / k**distance


@dataclass(frozen=True)
class FilterPlan:
    per_level_fpr: tuple[float, ...]
    per_level_bits_per_entry: tuple[float, ...]
    target_read_cost: float
    iterations: int = 1
    floored: bool = False

    @property
    def levels(self) -> int:
        return len(self.per_level_fpr)


def plan_from_last_level(p_last: float, levels: int, c: float, k: float) -> FilterPlan:
    """Rates for ``levels`` levels given the last level's rate (no budget solve)."""
    fprs = tuple(min(1.0, p_last * level_fpr_ratio(levels - i, c, k)) for i in range(1, levels + 1))
    bits = tuple(0.0 if p >= 1.0 else bits_for_fpr(p) for p in fprs)
    return FilterPlan(fprs, bits, math.fsum(fprs))


def filter_memory_bits(level_entry_counts: Sequence[float], fprs: Sequence[float]) -> float:
    """Total bits needed to realize ``fprs`` over levels of the given sizes."""
    return math.fsum(n * bits_for_fpr(p) for n, p in zip(level_entry_counts, fprs))


def allocate_fprs(level_entry_counts: Sequence[float], c: float, k: float, budget: float) -> FilterPlan:
    """Spread ``budget`` total bits per entry over the levels.

    ``level_entry_counts[0]`` is level 1. Levels whose rate would exceed 1 get
    no filter and the remaining levels are re-solved until nothing changes.
    """
    L = len(level_entry_counts)
    if L == 0:
        raise ValueError("need at least one level")
    if not 0.5 < c <= 1.0 or not k > 1.0:
        raise ValueError("need c in (0.5, 1] and k > 1")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    counts = [float(n) for n in level_entry_counts]
    total_entries = math.fsum(counts)
    memory = budget * total_entries
    # ln of each level's multiplier relative to the last level
    log_ratio = [math.log(level_fpr_ratio(L - i, c, k)) for i in range(1, L + 1)]

    active = [i for i in range(L) if counts[i] > 0]
    clamped: set[int] = {i for i in range(L) if counts[i] <= 0}
    iterations = 0
    log_pl = 0.0
    while True:
        iterations += 1
        weight = math.fsum(counts[i] for i in active)
        if weight <= 0 or memory <= 0:
            clamped.update(active)
            active = []
            break
        # memory * ln2^2 = -sum n_i (ln p_L + ln r_i)
        log_pl = -(memory * LN2_SQ + math.fsum(counts[i] * log_ratio[i] for i in active)) / weight
        over = [i for i in active if log_pl + log_ratio[i] >= 0.0]
        if not over:
            break
        clamped.update(over)
        active = [i for i in active if i not in over]
        if not active:
            break

    floored = False
    fprs = []
    for i in range(L):
        if i in clamped:
            fprs.append(1.0)
            continue
        p = math.exp(log_pl + log_ratio[i])
        if p < MIN_FPR:
            p, floored = MIN_FPR, True
        fprs.append(min(p, 1.0))
    bits = tuple(0.0 if p >= 1.0 else bits_for_fpr(p) for p in fprs)
    return FilterPlan(tuple(fprs), bits, math.fsum(fprs), iterations, floored)


def uniform_plan(levels: int, bits_per_entry: float) -> FilterPlan:
    p = fpr_model(bits_per_entry)
    return FilterPlan((p,) * levels, (bits_per_entry if p < 1 else 0.0,) * levels, p * levels)


def read_cost_series(c: float, k: float, levels: int) -> float:
    """Sum of the per-level rate multipliers, so that R = p_L * S(L)."""
    return math.fsum(level_fpr_ratio(i, c, k) for i in range(levels))


def constant_lookup_bits(c: float, k: float, p_last: float = 1.0) -> float:
    """Two-dominant-term estimate of bits per entry for a given last-level rate."""
    return -(math.log(p_last / k) / k + (c / k**2) * math.log(c * p_last / k**2)) / LN2_SQ


def min_bits_for_constant_lookup(c: float, k: float) -> float:
    """Bits per entry at which a zero-result lookup costs O(1) with p_L = 1.

    The estimate falls monotonically in p_L, so its minimum over (0, 1] sits at
    p_L = 1. Bits above this leave every level with a rate below one.
    """
    return constant_lookup_bits(c, k, 1.0)


def peak_constant_lookup_bits(c: float, k_max: float = 64.0) -> tuple[float, float]:
    """Largest :func:`min_bits_for_constant_lookup` over k > 1, with its argmax."""
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda k: -min_bits_for_constant_lookup(c, k), bounds=(1.0 + 1e-9, k_max), method="bounded")
    return -res.fun, res.x
