"""Merge execution, the write-stall gate and the in-memory level-1 pin."""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from operator import itemgetter
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    NoFilter,
    OptimizedFilter,
    PolicyConfig,
    RunHandle,
    TOMBSTONE,
    UniformFilter,
    VersionState,
)
from .filters import allocate_fprs, bits_for_fpr
from .sstable import RunWriter, Table

_key0 = itemgetter(0)


class StallDecision(Enum):
    PROCEED = "proceed"
    STALL = "stall"


def stall_gate(version: VersionState, config: PolicyConfig) -> StallDecision:
    if len(version.runs(1)) >= config.stop_writes_trigger:
        return StallDecision.STALL
    return StallDecision.PROCEED


# ---------------------------------------------------------------------------
# merging


def merge_chunks(tables: Sequence[Table], blocks_per_chunk: int = 256) -> Iterable[list]:
    """Yield lists of internal entries, in internal order, merged across ``tables``.

    ``tables`` must be ordered newest first. Every chunk holds complete key
    groups; the stable sort keeps newer inputs ahead for equal keys.
    """
    iters = [t.iter_chunks(blocks_per_chunk) for t in tables]
    bufs: list[list] = []
    for it in iters:
        bufs.append(next(it, []))
    while True:
        live = [i for i, b in enumerate(bufs) if b]
        if not live:
            return
        boundary = min(bufs[i][-1][0] for i in live)
        parts: list = []
        for i in live:
            b = bufs[i]
            cut = bisect_right(b, boundary, key=_key0)
            if cut == len(b):
                parts.extend(b)
                bufs[i] = next(iters[i], [])
            else:
                parts.extend(b[:cut])
                bufs[i] = b[cut:]
        if len(live) > 1:
            parts.sort(key=_key0)
        yield parts


def dedupe(entries: list, snapshots: Sequence[int], drop_tombstones: bool) -> list:
    """Garbage-collect a merged chunk.

    Keeps the newest version of each key, plus any older version that is the
    newest at or below some live snapshot. At the deepest level, tombstones
    with nothing left beneath them are dropped.
    """
    if not entries:
        return entries
    if not snapshots:
        prev = None
        out = []
        append = out.append
        for e in entries:
            k = e[0]
            if k != prev:
                prev = k
                if not drop_tombstones or e[2] != TOMBSTONE:
                    append(e)
        return out

    snaps = sorted(snapshots)
    out = []
    group: list = []
    prev_key = None
    newer_seq = None

    def close_group():
        if drop_tombstones:
            while group and group[-1][2] == TOMBSTONE:
                group.pop()
        out.extend(group)

    for e in entries:
        k, seq = e[0], e[1]
        if k != prev_key:
            close_group()
            group = [e]
            prev_key = k
        else:
            # some snapshot s with seq <= s < newer_seq sees this version
            i = bisect_right(snaps, seq - 1)
            if i < len(snaps) and snaps[i] < newer_seq:
                group.append(e)
        newer_seq = seq
    close_group()
    return out


# ---------------------------------------------------------------------------
# filter sizing


def filter_bits_for(config: PolicyConfig, version: VersionState, target_level: int, depth: int,
                    removed: Iterable[int] = ()) -> Optional[Callable[[int], float] | float]:
    """Bits per entry for a run written to ``target_level``.

    Level 1 is held in memory and never gets a filter. With the optimized
    mode the budget is spread over levels 2..depth using the entry counts the
    version will have once the new run replaces ``removed``.
    """
    mode = config.filter_mode
    if isinstance(mode, NoFilter) or target_level < 2:
        return None
    if isinstance(mode, UniformFilter):
        return mode.bits_per_entry
    assert isinstance(mode, OptimizedFilter)
    c, k = config.ratio_params
    gone = set(removed)
    base = [sum(r.entry_count for r in version.runs(i) if r.file_id not in gone) for i in range(2, depth + 1)]

    def bits(unique_keys: int) -> float:
        counts = list(base)
        counts[target_level - 2] += unique_keys
        plan = allocate_fprs(counts, c, k, mode.total_bits_per_entry)
        p = plan.per_level_fpr[target_level - 2]
        return 0.0 if p >= 1.0 else bits_for_fpr(p)

    return bits


# ---------------------------------------------------------------------------
# execution


@dataclass
class MergeResult:
    run: Optional[RunHandle]
    bytes_read: int
    entries_in: int
    entries_out: int
    image: Optional[bytes] = None


def run_merge(tables: Sequence[Table], writer: RunWriter, snapshots: Sequence[int], drop_tombstones: bool,
              sync: bool = True, check: Optional[Callable[[], None]] = None) -> MergeResult:
    """Stream-merge ``tables`` (newest first) into ``writer``.

    On any failure the partial output is deleted and the error re-raised.
    """
    entries_in = entries_out = 0
    try:
        for chunk in merge_chunks(tables):
            entries_in += len(chunk)
            kept = dedupe(chunk, snapshots, drop_tombstones)
            entries_out += len(kept)
            writer.add(kept)
            if check is not None:
                check()
        run = writer.finish(sync=sync) if entries_out else None
        if run is None:
            writer.abort()
    except BaseException:
        writer.abort()
        raise
    image = bytes(writer.image) if writer.image is not None and run is not None else None
    return MergeResult(run, sum(t.handle.file_bytes for t in tables), entries_in, entries_out, image)


@dataclass
class PinnedLevelOne:
    """Level-1 runs held in memory, newest first, kept in step with published versions."""

    config: PolicyConfig
    runs: list = field(default_factory=list)
    total_bytes: int = 0
    peak_bytes: int = 0
    load_failures: int = 0

    @property
    def bound(self) -> int:
        return self.config.stop_writes_trigger * self.config.memtable_bytes

    def sync(self, version: VersionState, tables: dict, images: Optional[dict] = None) -> None:
        """Pin level-1 runs of ``version`` that are not yet resident; evict the rest."""
        images = images or {}
        wanted = [r.file_id for r in version.runs(1)]
        keep = set(wanted)
        for fid in self.runs:
            if fid not in keep and fid in tables:
                tables[fid].unpin()
        for fid in wanted:
            t = tables[fid]
            if not t.pinned:
                try:
                    t.pin(images.get(fid))
                except Exception:
                    self.load_failures += 1
        self.runs = [fid for fid in wanted if tables[fid].pinned]
        self.total_bytes = sum(tables[fid].pinned_bytes for fid in self.runs)
        self.peak_bytes = max(self.peak_bytes, self.total_bytes)
