"""Crash the store in the middle of a flush and check that nothing acknowledged is lost.

A fault hook raises at a named point inside the write path; ``abandon`` then
drops the store without closing it, which is as close to a killed process as
a single interpreter gets.

Run: python3 demos/crash_recovery.py
"""
import tempfile

from lsmkv import DB, KiB, PolicyConfig
from lsmkv.db import SimulatedCrash


class CrashAt:
    def __init__(self, point):
        self.point = point

    def __call__(self, point):
        if point == self.point:
            self.point = None
            raise SimulatedCrash(point)


config = PolicyConfig(memtable_bytes=16 * KiB, block_bytes=1 * KiB)
acked = {}
with tempfile.TemporaryDirectory() as path:
    for point in ("flush:after_write", "compaction:mid_merge", "manifest:torn_append"):
        db = DB.open(path, config, background=False, fault_hook=CrashAt(point))
        i = len(acked)
        try:
            while True:
                key, value = b"k%06d" % i, b"%d" % i * 10
                db.put(key, value)
                acked[key] = value
                i += 1
        except SimulatedCrash as crash:
            print(f"crashed at {crash} after {len(acked)} acknowledged writes")
        db.abandon()

        db = DB.open(path, config, background=False)
        recovered = dict(db.items())
        lost = [k for k in acked if recovered.get(k) != acked[k]]
        print(f"  recovered {len(recovered)} keys, {len(lost)} acknowledged writes missing")
        db.close()
