"""Shared domain types: internal entries, configuration, run handles and versions.

Entries travel through the hot paths as plain 4-tuples laid out like
:class:`InternalEntry` ``(user_key, seq, kind, value)``; the named tuple is the
public face of the same shape.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import NamedTuple, Optional, Sequence, Union

MiB = 1 << 20
KiB = 1 << 10
GiB = 1 << 30

# seq shares a u64 with the kind byte on disk
MAX_SEQ = (1 << 56) - 1


class Kind(IntEnum):
    TOMBSTONE = 0
    PUT = 1


TOMBSTONE = int(Kind.TOMBSTONE)
PUT = int(Kind.PUT)


class InternalEntry(NamedTuple):
    user_key: bytes
    seq: int
    kind: int
    value: bytes


class LSMError(Exception):
    """Base class for store errors."""


class CorruptionError(LSMError):
    """On-disk data failed a checksum or structural check."""

    def __init__(self, message: str, file_id: Optional[int] = None):
        if file_id is not None:
            message = f"file {file_id}: {message}"
        super().__init__(message)
        self.file_id = file_id


class StructuralError(LSMError):
    """A version edit is inconsistent with the version it is applied to."""


def entry_bytes(key: bytes, value: bytes) -> int:
    """Accounted size of one stored entry: key, value and the 8-byte seq/kind tag."""
    return len(key) + len(value) + 8


def internal_key(entry: Sequence) -> tuple:
    """Sort key realizing the internal order (key asc, seq desc, tombstone first)."""
    return (entry[0], -entry[1], entry[2])


def compare_internal(a: Sequence, b: Sequence) -> int:
    """Three-way comparison of two internal entries: -1, 0 or 1."""
    ka, kb = internal_key(a), internal_key(b)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Garnering:
    """Capacity ratio k / c^(L-i) between adjacent levels; c = 1 is plain leveling."""

    c: float = 0.8
    k: float = 2.0

    def __post_init__(self):
        if not 0.5 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0.5, 1], got {self.c}")
        if not self.k > 1.0:
            raise ValueError(f"k must exceed 1, got {self.k}")

    name = "garnering"


@dataclass(frozen=True)
class Leveling:
    T: int = 2

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ValueError(f"T must be an integer >= 2, got {self.T}")

    name = "leveling"


MergePolicy = Union[Garnering, Leveling]


@dataclass(frozen=True)
class NoFilter:
    name = "none"


@dataclass(frozen=True)
class UniformFilter:
    bits_per_entry: float = 10.0
    name = "uniform"


@dataclass(frozen=True)
class OptimizedFilter:
    total_bits_per_entry: float = 10.0
    name = "optimized"


FilterMode = Union[NoFilter, UniformFilter, OptimizedFilter]


@dataclass(frozen=True)
class PolicyConfig:
    memtable_bytes: int = 4 * MiB
    policy: MergePolicy = field(default_factory=Garnering)
    stop_writes_trigger: int = 12
    l0_compaction_trigger: int = 4
    block_bytes: int = 4 * KiB
    filter_mode: FilterMode = field(default_factory=NoFilter)
    # capacity driven by the last level's actual size; not supported
    dynamic_level_bytes: bool = False

    def __post_init__(self):
        if self.memtable_bytes <= 0 or self.block_bytes <= 0:
            raise ValueError("memtable_bytes and block_bytes must be positive")
        if not self.stop_writes_trigger >= self.l0_compaction_trigger >= 1:
            raise ValueError("need stop_writes_trigger >= l0_compaction_trigger >= 1")
        if self.dynamic_level_bytes:
            raise ValueError("dynamic_level_bytes is not supported")

    @property
    def ratio_params(self) -> tuple[float, float]:
        """(c, k) view of the policy; leveling maps to c = 1, k = T."""
        p = self.policy
        if isinstance(p, Leveling):
            return 1.0, float(p.T)
        return p.c, p.k

    def with_policy(self, policy: MergePolicy) -> "PolicyConfig":
        return replace(self, policy=policy)


# ---------------------------------------------------------------------------
# runs and versions


@dataclass(frozen=True)
class RunHandle:
    file_id: int
    level: int
    min_key: bytes
    max_key: bytes
    entry_count: int
    data_bytes: int
    file_bytes: int = 0
    tombstone_count: int = 0
    min_seq: int = 0
    max_seq: int = 0
    index_ref: tuple[int, int] = (0, 0)
    filter_ref: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("runs live on levels >= 1")
        if self.min_key > self.max_key:
            raise ValueError("min_key must not exceed max_key")


@dataclass(frozen=True)
class VersionEdit:
    added: tuple[RunHandle, ...] = ()
    removed: tuple[int, ...] = ()
    new_depth: Optional[int] = None
    last_seq: Optional[int] = None
    log_number: Optional[int] = None
    next_file_id: Optional[int] = None

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed) and self.new_depth is None


@dataclass(frozen=True)
class VersionState:
    """Immutable snapshot of the level structure.

    ``levels[0]`` holds level 1 (newest run first); every deeper level holds at
    most one run. ``depth`` is the declared depth kept by the merge policy.
    """

    levels: tuple[tuple[RunHandle, ...], ...] = ((),)
    depth: int = 1
    next_seq: int = 1
    log_number: int = 0
    next_file_id: int = 1
    number: int = 0

    @property
    def level_count(self) -> int:
        deepest = 0
        for i, runs in enumerate(self.levels, start=1):
            if runs:
                deepest = i
        return max(self.depth, deepest, 1)

    def runs(self, level: int) -> tuple[RunHandle, ...]:
        if 1 <= level <= len(self.levels):
            return self.levels[level - 1]
        return ()

    def level_bytes(self, level: int) -> int:
        return sum(r.data_bytes for r in self.runs(level))

    @property
    def total_user_bytes(self) -> int:
        return sum(r.data_bytes for runs in self.levels for r in runs)

    @property
    def physical_bytes(self) -> int:
        return sum(r.file_bytes for runs in self.levels for r in runs)

    def all_runs(self) -> list[RunHandle]:
        return [r for runs in self.levels for r in runs]

    def file_ids(self) -> set[int]:
        return {r.file_id for runs in self.levels for r in runs}

    def nonempty_levels(self) -> list[int]:
        return [i for i, runs in enumerate(self.levels, start=1) if runs]

    def deepest_nonempty(self) -> int:
        levels = self.nonempty_levels()
        return levels[-1] if levels else 0

    def layout(self) -> tuple:
        """Structural content, excluding bookkeeping counters."""
        return (
            self.depth,
            self.next_seq,
            tuple(
                tuple((r.file_id, r.level, r.min_key, r.max_key, r.entry_count, r.data_bytes) for r in runs)
                for runs in self.levels
            ),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(repr((self.layout(), self.log_number, self.number)).encode()).hexdigest()


def publish_version(old: VersionState, edit: VersionEdit) -> VersionState:
    """Apply ``edit`` to ``old`` and return the successor version; ``old`` is untouched."""
    present = old.file_ids()
    added_ids = [r.file_id for r in edit.added]
    if len(set(added_ids)) != len(added_ids):
        raise StructuralError("edit adds the same file twice")
    clash = set(added_ids) & set(edit.removed)
    if clash:
        raise StructuralError(f"edit adds and removes file(s) {sorted(clash)}")
    missing = set(edit.removed) - present
    if missing:
        raise StructuralError(f"edit removes unknown file(s) {sorted(missing)}")
    reused = set(added_ids) & present
    if reused:
        raise StructuralError(f"edit re-adds live file(s) {sorted(reused)}")

    removed = set(edit.removed)
    levels = [list(r for r in runs if r.file_id not in removed) for runs in old.levels]
    for run in edit.added:
        while len(levels) < run.level:
            levels.append([])
        levels[run.level - 1].append(run)
    # newest level-1 run first
    levels[0].sort(key=lambda r: (r.max_seq, r.file_id), reverse=True)
    for i, runs in enumerate(levels[1:], start=2):
        if len(runs) > 1:
            raise StructuralError(f"level {i} would hold {len(runs)} runs")
    while len(levels) > 1 and not levels[-1]:
        levels.pop()

    depth = old.depth if edit.new_depth is None else edit.new_depth
    next_seq = old.next_seq if edit.last_seq is None else max(old.next_seq, edit.last_seq + 1)
    return VersionState(
        levels=tuple(tuple(runs) for runs in levels),
        depth=depth,
        next_seq=next_seq,
        log_number=old.log_number if edit.log_number is None else edit.log_number,
        next_file_id=old.next_file_id if edit.next_file_id is None else max(old.next_file_id, edit.next_file_id),
        number=old.number + 1,
    )
