"""How many levels each policy needs, and how many of them hold data over time.

The simulation drives the real scheduling functions with run sizes only (no
I/O), so it reaches many GiB in seconds. Duplicate keys from a uniform
keyspace are folded in with the expected-unique-count formula.

Run: python3 demos/depth_vs_leveling.py [total GiB, default 1]
"""
import math
import sys

from lsmkv import GiB, Garnering, Leveling, MiB, PolicyConfig
from lsmkv.core import RunHandle, VersionState
from lsmkv.policy import (
    LastLevelDecision,
    last_level_full,
    level_capacity,
    on_last_level_full,
    pick_compaction,
)

ENTRY = 16 + 100 + 8


def simulate(policy, total_bytes):
    config = PolicyConfig(memtable_bytes=4 * MiB, policy=policy)
    keys = total_bytes // (16 + 100)
    per_flush = config.memtable_bytes // ENTRY
    levels = [[] for _ in range(64)]  # draws per run
    depth = 1

    def version():
        def run(i, d):
            return RunHandle(1, i + 1, b"a", b"z", d, int(keys * (1 - math.exp(-d / keys)) * ENTRY))
        return VersionState(levels=tuple(tuple(run(i, d) for d in lv) for i, lv in enumerate(levels)), depth=depth)

    def merge(src):
        levels[src] = [sum(levels[src - 1]) + sum(levels[src])]
        levels[src - 1] = []

    written, occupied = 0, []
    while written < keys:
        levels[0].insert(0, per_flush)
        written += per_flush
        while True:
            v = version()
            if last_level_full(v, config):
                decision, depth = on_last_level_full(v, config)
                if decision is LastLevelDecision.COMPACT_LAST:
                    merge(v.level_count)
                continue
            task = pick_compaction(v, config)
            if task is None:
                break
            merge(task.source_level)
            depth = max(depth, task.target_level)
        v = version()
        occupied.append(sum(1 for i in range(2, v.level_count + 1) if v.runs(i)))
    return config, v, occupied


total = float(sys.argv[1]) * GiB if len(sys.argv) > 1 else GiB
for policy in (Garnering(c=0.8, k=2), Leveling(T=2)):
    config, v, occupied = simulate(policy, int(total))
    L = v.level_count
    caps = ", ".join(f"{level_capacity(i, L, config) / MiB:.0f}" for i in range(1, L + 1))
    print(f"{policy}: depth {L}; capacities MiB [{caps}]")
    print(f"    non-empty disk levels: at the end {occupied[-1]}, averaged over flushes "
          f"{sum(occupied) / len(occupied):.2f}, max {max(occupied)}")

print("\nSeek cost tracks the non-empty levels, which cycle as whole-run merges empty and refill them;")
print("the end-of-fill count depends on where in that cycle the fill stops.")
