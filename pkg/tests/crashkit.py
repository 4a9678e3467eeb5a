"""Randomized workload driver that checks a store against the reference model across crashes."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from lsmkv import DB
from lsmkv.db import SimulatedCrash
from lsmkv.refmodel import ModelStore

FAULT_POINTS = (
    "wal:torn_append",
    "flush:after_write",
    "compaction:mid_merge",
    "compaction:after_write",
    "manifest:before_append",
    "manifest:torn_append",
    "publish:after_manifest",
)


class FaultInjector:
    """Raises :class:`SimulatedCrash` the next time the armed point is reached."""

    def __init__(self):
        self.armed = None
        self.fired: list[str] = []

    def __call__(self, point: str) -> None:
        if point == self.armed:
            self.armed = None
            self.fired.append(point)
            raise SimulatedCrash(point)


@dataclass
class OracleReport:
    ops: int = 0
    gets: int = 0
    scans: int = 0
    snapshot_reads: int = 0
    crashes: int = 0
    fired: list = field(default_factory=list)
    mismatches: list = field(default_factory=list)


def key_of(i: int) -> bytes:
    return b"key%07d" % i


def oracle_run(path, config, n_ops: int, n_crashes: int, seed: int, keyspace: int = 5000,
               max_mismatches: int = 5, arm_window: int = 300) -> OracleReport:
    """Mixed puts, deletes, gets and scans; crashes are injected at random fault points.

    A crash is armed at ``n_crashes`` random operation indexes. If the armed
    point is not reached within ``arm_window`` operations, the store is
    abandoned as-is instead. Every read is compared with the model.
    """
    rng = random.Random(seed)
    model = ModelStore()
    report = OracleReport()
    crash_at = set(rng.sample(range(1, n_ops), n_crashes))
    injector = FaultInjector()
    db = DB.open(path, config, background=False, fault_hook=injector)
    armed_since = None
    snapshots: list = []

    def check(got, want, what):
        if got != want and len(report.mismatches) < max_mismatches:
            report.mismatches.append((report.ops, what, got, want))

    def reopen():
        nonlocal db, armed_since, snapshots
        injector.armed = None
        armed_since = None
        snapshots = []
        db.abandon()
        db = DB.open(path, config, background=False, fault_hook=injector)
        report.crashes += 1

    for i in range(n_ops):
        if i in crash_at:
            if armed_since is not None:
                reopen()
            injector.armed = rng.choice(FAULT_POINTS)
            armed_since = i
        elif armed_since is not None and i - armed_since > arm_window:
            reopen()
        r = rng.random()
        k = key_of(rng.randrange(keyspace))
        try:
            if r < 0.45:
                v = rng.randbytes(rng.randrange(1, 120))
                seq = db.put(k, v)
                model.put(k, v, seq=seq)
            elif r < 0.55:
                seq = db.delete(k)
                model.delete(k, seq=seq)
            elif r < 0.85:
                report.gets += 1
                check(db.get(k), model.model_get(k), ("get", k))
            elif r < 0.95:
                report.scans += 1
                n = rng.randint(1, 20)
                check(db.scan(k, n), model.model_scan(k, n), ("scan", k, n))
            elif r < 0.98 or not snapshots:
                snapshots.append(db.snapshot())
                if len(snapshots) > 4:
                    snapshots.pop(0).release()
            else:
                snap = rng.choice(snapshots)
                report.snapshot_reads += 1
                check(db.get(k, snapshot=snap), model.model_get(k, snap.seq), ("snap-get", k, snap.seq))
                check(db.scan(k, 5, snapshot=snap), model.model_scan(k, 5, snap.seq), ("snap-scan", k))
        except SimulatedCrash:
            reopen()
        report.ops += 1
    if armed_since is not None:
        reopen()
    # full-state comparison after the last recovery
    check(dict(db.items()), model.state(), ("final-state",))
    db.close()
    report.fired = injector.fired
    return report
