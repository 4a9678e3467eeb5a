"""Level capacities, depth growth and compaction triggers for both merge policies."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .core import Leveling, PolicyConfig, RunHandle, VersionState


def level_capacity(i: int, L: int, config: PolicyConfig) -> float:
    """Capacity in bytes of on-disk level ``i`` when the tree has ``L`` levels."""
    if not 1 <= i <= L:
        raise ValueError(f"level {i} outside 1..{L}")
    B = config.memtable_bytes
    policy = config.policy
    if isinstance(policy, Leveling):
        return float(B * policy.T**i)
    c, k = policy.c, policy.k
    if c == 1.0:
        return B * k**i
    return B * k**i / c ** ((2 * L - 1 - i) * i / 2)


def capacity_ratio(i: int, L: int, config: PolicyConfig) -> float:
    """C_i / C_(i-1), with level 0 (the memtable) holding B."""
    policy = config.policy
    if isinstance(policy, Leveling):
        return float(policy.T)
    return policy.k / policy.c ** (L - i)


@dataclass(frozen=True)
class LevelPlan:
    L: int
    capacities: tuple[float, ...]
    memtable_bytes: int
    policy: object

    @classmethod
    def build(cls, L: int, config: PolicyConfig) -> "LevelPlan":
        return cls(L, tuple(level_capacity(i, L, config) for i in range(1, L + 1)), config.memtable_bytes, config.policy)

    def capacity(self, i: int) -> float:
        return self.capacities[i - 1]

    def ratios(self) -> list[float]:
        prev = [float(self.memtable_bytes), *self.capacities[:-1]]
        return [c / p for c, p in zip(self.capacities, prev)]


def declared_depth(total_bytes: float, config: PolicyConfig) -> int:
    """Smallest depth that holds ``total_bytes`` with the last level taking its share.

    Both conditions must hold: the capacities of levels 1..L sum to at least
    ``total_bytes``, and the last level alone holds ``total_bytes * (k-1)/k``.
    The store itself tracks depth through depth-growth events.
    """
    if total_bytes <= 0:
        return 1
    c, k = config.ratio_params
    share = total_bytes * (k - 1) / k
    L = 1
    while True:
        caps = [level_capacity(i, L, config) for i in range(1, L + 1)]
        if caps[-1] >= share and sum(caps) >= total_bytes:
            return L
        L += 1


def analytic_depth(total_bytes: float, config: PolicyConfig) -> float:
    """Leading-order level count: sqrt(log_{1/c}(N/(B k))) or log_T(N/B)."""
    B = config.memtable_bytes
    c, k = config.ratio_params
    if c == 1.0:
        return max(0.0, math.log(total_bytes / B, k)) if total_bytes > 0 else 0.0
    x = total_bytes / (B * k)
    if x <= 1.0:
        return 0.0
    return math.sqrt(math.log(x) / math.log(1 / c))


def classical_depth(total_bytes: float, memtable_bytes: float, T: float) -> float:
    """Real-valued solution of B T^L = N (T-1)/T."""
    return math.log(total_bytes * (T - 1) / T / memtable_bytes, T)


def exact_garnering_depth(total_bytes: float, memtable_bytes: float, c: float, k: float) -> float:
    """Real-valued solution of B k^L / c^(L(L-1)/2) = N (k-1)/k."""
    rhs = math.log(total_bytes * (k - 1) / k / memtable_bytes)
    if c == 1.0:
        return rhs / math.log(k)
    a = math.log(1 / c) / 2
    b = math.log(k) - a
    # a L^2 + b L - rhs = 0
    return (-b + math.sqrt(b * b + 4 * a * rhs)) / (2 * a)


# ---------------------------------------------------------------------------
# triggers


@dataclass(frozen=True)
class CompactionTask:
    source_level: int
    source_runs: tuple[RunHandle, ...]
    target_level: int
    target_run: Optional[RunHandle]
    new_depth: Optional[int] = None
    reason: str = ""

    def __post_init__(self):
        if self.target_level != self.source_level + 1:
            raise ValueError("compactions move data one level down")
        if not self.source_runs:
            raise ValueError("a compaction needs at least one source run")

    @property
    def inputs(self) -> tuple[RunHandle, ...]:
        """Inputs newest first: source runs, then the target's existing run."""
        return self.source_runs + ((self.target_run,) if self.target_run else ())


class LastLevelDecision(Enum):
    GREW_DEPTH = "grew-depth"
    COMPACT_LAST = "compact-last"


def last_level_full(version: VersionState, config: PolicyConfig) -> bool:
    L = version.level_count
    if L < 2:
        return False
    return version.level_bytes(L) >= level_capacity(L, L, config)


def on_last_level_full(version: VersionState, config: PolicyConfig) -> tuple[LastLevelDecision, int]:
    """Decide between growing the depth only and compacting the last level down.

    Returns the decision and the new depth (always L + 1).
    """
    L = version.level_count
    size = version.level_bytes(L)
    if size < level_capacity(L, L, config):
        raise ValueError("last level is not full")
    if size < level_capacity(L, L + 1, config):
        return LastLevelDecision.GREW_DEPTH, L + 1
    return LastLevelDecision.COMPACT_LAST, L + 1


def _task_for(version: VersionState, source: int, reason: str, new_depth: Optional[int] = None) -> CompactionTask:
    target = source + 1
    target_runs = version.runs(target)
    if new_depth is None and target > version.level_count:
        new_depth = target
    return CompactionTask(
        source_level=source,
        source_runs=version.runs(source),
        target_level=target,
        target_run=target_runs[0] if target_runs else None,
        new_depth=new_depth,
        reason=reason,
    )


def pick_compaction(version: VersionState, config: PolicyConfig) -> Optional[CompactionTask]:
    """Next compaction, smallest level first; the last level is not considered."""
    if len(version.runs(1)) >= config.l0_compaction_trigger:
        return _task_for(version, 1, "level-1 run count")
    L = version.level_count
    for i in range(2, L):
        if version.runs(i) and version.level_bytes(i) >= level_capacity(i, L, config):
            return _task_for(version, i, "capacity")
    return None


def last_level_task(version: VersionState, new_depth: int) -> CompactionTask:
    return _task_for(version, version.level_count, "last level full", new_depth=new_depth)


def fullness(version: VersionState, config: PolicyConfig) -> list[float]:
    """size / capacity per on-disk level (level 1 by run count)."""
    L = version.level_count
    out = [len(version.runs(1)) / config.l0_compaction_trigger]
    out.extend(version.level_bytes(i) / level_capacity(i, L, config) for i in range(2, L + 1))
    return out
