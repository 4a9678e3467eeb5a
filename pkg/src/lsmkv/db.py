"""The store: write path, background work, reads, snapshots and recovery."""
from __future__ import annotations

import logging
import os
import re
import threading
import time
import weakref
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .compaction import (
    PinnedLevelOne,
    StallDecision,
    filter_bits_for,
    run_merge,
    stall_gate,
)
from .core import (
    PUT,
    TOMBSTONE,
    LSMError,
    PolicyConfig,
    RunHandle,
    VersionEdit,
    VersionState,
    publish_version,
)
from .iterator import MergingIterator
from .manifest import ManifestLog, load_version
from .memtable import Memtable
from .policy import (
    LastLevelDecision,
    last_level_full,
    last_level_task,
    on_last_level_full,
    pick_compaction,
)
from .sstable import DELETED, FOUND, RunWriter, Table
from .stats import AmplificationStats, StatsCollector
from .wal import WalWriter, encode_record, read_segment

log = logging.getLogger(__name__)

_FILE_RE = re.compile(r"^(\d+)\.(sst|log)$")


class WriteStall(LSMError):
    """A write would block forever: level 1 is full and compactions are paused."""


class SimulatedCrash(BaseException):
    """Raised by fault hooks to abandon the store at a chosen point."""


def run_path(dirname: str, file_id: int) -> str:
    return os.path.join(dirname, f"{file_id:06d}.sst")


def wal_path(dirname: str, file_id: int) -> str:
    return os.path.join(dirname, f"{file_id:06d}.log")


@dataclass(frozen=True)
class ReadStats:
    source: str = "none"  # memtable, immutable, level1, level<i>, none
    disk_reads: int = 0
    filter_negatives: int = 0
    runs_checked: int = 0


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # flush, compaction, grow-depth, full-compaction
    source_level: int
    target_level: int
    depth_before: int
    depth_after: int
    inputs: tuple[int, ...]
    output: Optional[int]
    bytes_in: int
    bytes_out: int
    reason: str = ""


class Snapshot:
    """A read horizon: reads through it see writes with seq <= ``seq``."""

    def __init__(self, db: "DB", seq: int):
        self.seq = seq
        self._db = db
        self._released = False

    def release(self) -> None:
        if not self._released:
            self._released = True
            self._db._release_snapshot(self.seq)

    def __enter__(self) -> "Snapshot":
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def __del__(self):
        try:
            self.release()
        except Exception:
            pass


class _Current:
    """A published version plus the open tables it references."""

    __slots__ = ("state", "tables", "__weakref__")

    def __init__(self, state: VersionState, tables: dict):
        self.state = state
        self.tables = tables


class DB:
    """Embedded LSM key-value store.

    ``background=True`` runs flushes and compactions on one worker thread.
    With ``background=False`` they run inline inside the write that triggers
    them, which makes file layouts and traces deterministic.
    """

    def __init__(self, path: str, config: Optional[PolicyConfig] = None, *, sync: bool = False,
                 background: bool = True, fault_hook: Optional[Callable[[str], None]] = None):
        self.path = path
        self.config = config or PolicyConfig()
        self.sync = sync
        self.background = background
        self.fault_hook = fault_hook
        self._mutex = threading.RLock()
        self._cv = threading.Condition(self._mutex)
        self._ref_lock = threading.RLock()
        self._refs: Counter = Counter()
        self._obsolete: set[int] = set()
        self._tables: dict[int, Table] = {}
        self._snapshots: Counter = Counter()
        self._stats = StatsCollector()
        self.pin = PinnedLevelOne(self.config)
        self.trace: list[TraceEvent] = []
        self._closed = False
        self._abandoned = False
        self._closing = False
        self._paused = False
        self._idle = True
        self._bg_error: Optional[BaseException] = None
        self._manifest_broken = False
        self._wal: Optional[WalWriter] = None
        self._imm: Optional[Memtable] = None
        self._worker: Optional[threading.Thread] = None
        self.last_stall_level1_runs = 0
        self._user_bytes = 0
        self._memtable_bytes = self.config.memtable_bytes
        self._stop_trigger = self.config.stop_writes_trigger
        os.makedirs(path, exist_ok=True)
        self._recover()
        if background:
            self._worker = threading.Thread(target=self._work_loop, name="lsmkv-bg", daemon=True)
            self._worker.start()
            with self._cv:
                self._cv.notify_all()

    @classmethod
    def open(cls, path: str, config: Optional[PolicyConfig] = None, **kwargs) -> "DB":
        return cls(path, config, **kwargs)

    # ------------------------------------------------------------------
    # recovery

    def _recover(self) -> None:
        state, manifest_file, _ = load_version(self.path)
        if state is None:
            state = VersionState()
        tables = {}
        try:
            for run in state.all_runs():
                tables[run.file_id] = Table(run_path(self.path, run.file_id), run)
        except BaseException:
            for t in tables.values():
                t.close()
            raise
        self._tables = tables
        live = state.file_ids()

        max_id = 0
        segments = []
        for name in os.listdir(self.path):
            m = _FILE_RE.match(name)
            if m:
                fid = int(m.group(1))
                max_id = max(max_id, fid)
                if m.group(2) == "sst" and fid not in live:
                    os.unlink(os.path.join(self.path, name))
                elif m.group(2) == "log":
                    if fid < state.log_number:
                        os.unlink(os.path.join(self.path, name))
                    else:
                        segments.append(fid)
            elif name.startswith("MANIFEST-") and name != manifest_file:
                os.unlink(os.path.join(self.path, name))
            elif name == "CURRENT.tmp":
                os.unlink(os.path.join(self.path, name))
            elif name.startswith("MANIFEST-"):
                max_id = max(max_id, int(name.split("-")[1]))
        self._next_file_id = max(state.next_file_id, max_id + 1)

        self._current = None
        self._install(state)
        self.pin.sync(state, self._tables)
        generation = self._new_file_id()
        self._manifest = ManifestLog.create(self.path, generation, self._with_counters(state), self.fault_hook)
        if manifest_file:
            os.unlink(os.path.join(self.path, manifest_file))

        # WAL replay: one memtable per segment; stop at the first torn record
        segments.sort()
        memtables = []
        last_seq = state.next_seq - 1
        for i, fid in enumerate(segments):
            replay = read_segment(wal_path(self.path, fid))
            mem = Memtable(log_numbers=(fid,))
            for seq, kind, key, value in replay.records:
                mem.add(seq, kind, key, value)
                last_seq = max(last_seq, seq)
            memtables.append(mem)
            if replay.torn:
                with open(wal_path(self.path, fid), "r+b") as f:
                    f.truncate(replay.valid_bytes)
                    f.flush()
                    os.fsync(f.fileno())
                for later in segments[i + 1 :]:
                    os.unlink(wal_path(self.path, later))
                break
        self._last_seq = last_seq
        if memtables:
            self._mem = memtables[-1]
            for older in memtables[:-1]:
                older.freeze()
                self._flush_memtable(older, log_number=self._mem.log_numbers[0])
        else:
            self._mem = Memtable(log_numbers=(self._new_file_id(),))
        if not self.background:
            self._run_inline()

    def _new_file_id(self) -> int:
        fid = self._next_file_id
        self._next_file_id += 1
        return fid

    def _with_counters(self, state: VersionState) -> VersionState:
        return VersionState(state.levels, state.depth, state.next_seq, state.log_number,
                            max(state.next_file_id, self._next_file_id), state.number)

    # ------------------------------------------------------------------
    # version publication and file lifetime

    def _install(self, state: VersionState) -> None:
        fids = tuple(state.file_ids())
        cur = _Current(state, {fid: self._tables[fid] for fid in fids})
        with self._ref_lock:
            for fid in fids:
                self._refs[fid] += 1
        fin = weakref.finalize(cur, self._release_files, fids)
        fin.atexit = False
        self._current = cur
        self._stats.set(level_count=state.level_count)

    def _release_files(self, fids: tuple[int, ...]) -> None:
        with self._ref_lock:
            for fid in fids:
                self._refs[fid] -= 1
                if self._refs[fid] <= 0:
                    del self._refs[fid]
                    if fid in self._obsolete:
                        self._obsolete.discard(fid)
                        self._drop_file(fid)

    def _drop_file(self, fid: int) -> None:
        t = self._tables.pop(fid, None)
        if t is not None:
            t.close()
        if not self._abandoned:
            try:
                os.unlink(run_path(self.path, fid))
            except FileNotFoundError:
                pass

    def _hook(self, point: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(point)

    def _apply(self, edit: VersionEdit, images: Optional[dict] = None) -> VersionState:
        """Persist ``edit`` to the manifest, then publish it. Caller holds the mutex."""
        old = self._current.state
        edit = VersionEdit(edit.added, edit.removed, edit.new_depth, edit.last_seq, edit.log_number,
                           self._next_file_id)
        new = publish_version(old, edit)
        for run in edit.added:
            if run.file_id not in self._tables:
                self._tables[run.file_id] = Table(run_path(self.path, run.file_id), run)
        if self._manifest_broken or self._manifest.needs_rewrite():
            self._manifest = self._manifest.rewrite(self._with_counters(old), self._new_file_id())
            self._manifest_broken = False
        try:
            self._manifest.append(edit)
        except Exception:
            self._manifest_broken = True
            for run in edit.added:
                t = self._tables.pop(run.file_id, None)
                if t is not None:
                    t.close()
            raise
        self._hook("publish:after_manifest")
        with self._ref_lock:
            self._obsolete.update(edit.removed)
            self._install(new)
        self.pin.sync(new, self._tables, images)
        self._stats.set(pinned_bytes=self.pin.total_bytes, pinned_peak_bytes=self.pin.peak_bytes)
        self._cv.notify_all()
        return new

    @property
    def version(self) -> VersionState:
        return self._current.state

    # ------------------------------------------------------------------
    # write path

    def put(self, key: bytes, value: bytes) -> int:
        return self._write(key, PUT, value)

    def delete(self, key: bytes) -> int:
        return self._write(key, TOMBSTONE, b"")

    def _write(self, key: bytes, kind: int, value: bytes) -> int:
        if not isinstance(key, (bytes, bytearray)) or not isinstance(value, (bytes, bytearray)):
            raise TypeError("keys and values are bytes")
        if not key:
            raise ValueError("keys must be non-empty")
        key, value = bytes(key), bytes(value)
        size = len(key) + len(value) + 8
        with self._cv:
            mem = self._mem
            if (self._closed or self._bg_error is not None
                    or (mem.approx_bytes + size > self._memtable_bytes and mem.entry_count)
                    or len(self._current.state.levels[0]) >= self._stop_trigger):
                self._make_room(size)
            seq = self._last_seq + 1
            if self._wal is None:
                self._wal = WalWriter(wal_path(self.path, self._mem.log_numbers[0]), sync=self.sync)
            if self.fault_hook is not None:
                try:
                    self._hook("wal:torn_append")
                except BaseException:
                    rec = encode_record(seq, kind, key, value)
                    os.write(self._wal._fd, rec[: max(1, len(rec) // 2)])
                    raise
            self._wal.append(seq, kind, key, value)
            self._mem.add(seq, kind, key, value)
            self._last_seq = seq
            self._user_bytes += size
            return seq

    def _check_open(self) -> None:
        if self._closed:
            raise LSMError("store is closed")
        err = self._bg_error
        if err is not None and not isinstance(err, Exception):
            raise LSMError("background worker stopped") from err

    def _make_room(self, size: int) -> None:
        stalled = False
        while True:
            self._check_open()
            version = self._current.state
            if stall_gate(version, self.config) is StallDecision.STALL:
                if not stalled:
                    stalled = True
                    self.last_stall_level1_runs = len(version.runs(1))
                    self._stats.add(stalls=1)
                if not self.background:
                    if self._paused:
                        raise WriteStall(f"level 1 holds {len(version.runs(1))} runs and compactions are paused")
                    self._run_inline()
                    continue
                self._cv.wait(0.5)
                continue
            if self._mem.approx_bytes + size > self.config.memtable_bytes and not self._mem.empty:
                if self._imm is not None:
                    if not self.background:
                        self._flush_imm()
                        continue
                    self._cv.wait(0.5)
                    continue
                self._rotate()
                if not self.background:
                    self._run_inline()
                continue
            return

    def _rotate(self) -> None:
        self._mem.freeze()
        self._imm = self._mem
        self._mem = Memtable(log_numbers=(self._new_file_id(),))
        if self._wal is not None:
            self._wal.close()
            self._wal = None
        self._cv.notify_all()

    def _run_inline(self) -> None:
        with self._cv:
            if self._imm is not None:
                self._flush_imm()
            while self._scheduler_step() is not None:
                pass

    # ------------------------------------------------------------------
    # flush

    def _flush_imm(self) -> None:
        imm = self._imm
        if imm is None:
            return
        self._flush_memtable(imm, log_number=self._mem.log_numbers[0])
        with self._cv:
            self._imm = None
            self._cv.notify_all()

    def _flush_memtable(self, imm: Memtable, log_number: int) -> Optional[RunHandle]:
        """Write ``imm`` as a level-1 run and retire its WAL segments."""
        with self._mutex:
            fid = self._new_file_id()
        handle = None
        if not imm.empty:
            writer = RunWriter(run_path(self.path, fid), fid, 1, self.config.block_bytes, None)
            writer.keep_image()
            try:
                writer.add(imm.entries())
                handle = writer.finish(sync=True)
                self._hook("flush:after_write")
            except BaseException:
                if handle is None:
                    writer.abort()
                raise
            image = bytes(writer.image)
        with self._cv:
            before = self._current.state.depth
            if handle is not None:
                self._apply(VersionEdit(added=(handle,), log_number=log_number, last_seq=imm.max_seq),
                            images={fid: image})
                self._stats.add(flush_bytes_written=handle.file_bytes, flushes=1)
                self.trace.append(TraceEvent("flush", 0, 1, before, self._current.state.depth, (), fid,
                                             imm.approx_bytes, handle.file_bytes))
            else:
                self._apply(VersionEdit(log_number=log_number))
        for seg in imm.log_numbers:
            if seg < log_number:
                try:
                    os.unlink(wal_path(self.path, seg))
                except FileNotFoundError:
                    pass
        return handle

    def flush(self) -> None:
        """Write the active memtable to level 1 now and wait for it."""
        with self._cv:
            self._check_open()
            while self._imm is not None:
                if not self.background:
                    self._flush_imm()
                else:
                    self._cv.wait(0.5)
                    self._check_open()
            if self._mem.empty:
                return
            self._rotate()
            if not self.background:
                self._run_inline()
                return
            while self._imm is not None:
                self._cv.wait(0.5)
                self._check_open()

    # ------------------------------------------------------------------
    # compaction scheduling

    def _work_possible(self) -> bool:
        if self._paused:
            return False
        v = self._current.state
        return last_level_full(v, self.config) or pick_compaction(v, self.config) is not None

    def _scheduler_step(self) -> Optional[str]:
        """Run at most one unit of compaction work; None when there is nothing to do."""
        with self._cv:
            if self._paused:
                return None
            cur = self._current
            v = cur.state
            depth_before = v.level_count
            if last_level_full(v, self.config):
                decision, new_depth = on_last_level_full(v, self.config)
                if decision is LastLevelDecision.GREW_DEPTH:
                    self._apply(VersionEdit(new_depth=new_depth))
                    self._stats.add(depth_growths=1)
                    self.trace.append(TraceEvent("grow-depth", depth_before, depth_before, depth_before,
                                                 new_depth, (), None, 0, 0, "last level full"))
                    return "grew-depth"
                task = last_level_task(v, new_depth)
            else:
                task = pick_compaction(v, self.config)
            if task is None:
                return None
            fid = self._new_file_id()
            inputs = task.inputs
            removed = tuple(r.file_id for r in inputs)
            depth_after = task.new_depth or v.depth
            depth_after = max(depth_after, v.level_count)
            below = any(v.runs(i) for i in range(task.target_level + 1, len(v.levels) + 1))
            snapshots = sorted(self._snapshots)
            bits = filter_bits_for(self.config, v, task.target_level, max(depth_after, task.target_level), removed)
        tables = [cur.tables[r.file_id] for r in inputs]
        writer = RunWriter(run_path(self.path, fid), fid, task.target_level, self.config.block_bytes, bits)
        if task.target_level == 1:
            writer.keep_image()
        check = self._between_chunks if self.background else None
        if self.fault_hook is not None:
            inner = check

            def check():
                self._hook("compaction:mid_merge")
                if inner is not None:
                    inner()

        result = run_merge(tables, writer, snapshots, drop_tombstones=not below, sync=True, check=check)
        self._hook("compaction:after_write")
        with self._cv:
            edit = VersionEdit(added=(result.run,) if result.run else (), removed=removed,
                               new_depth=task.new_depth)
            try:
                self._apply(edit)
            except BaseException:
                if result.run is not None and not self._abandoned:
                    try:
                        os.unlink(run_path(self.path, fid))
                    except FileNotFoundError:
                        pass
                raise
            out_bytes = result.run.file_bytes if result.run else 0
            self._stats.add(compaction_bytes_written=out_bytes, compaction_bytes_read=result.bytes_read)
            self._stats.count_compaction(task.source_level)
            self.trace.append(TraceEvent("compaction", task.source_level, task.target_level, depth_before,
                                         self._current.state.level_count, removed,
                                         result.run.file_id if result.run else None,
                                         result.bytes_read, out_bytes, task.reason))
        del cur, tables
        return "compaction"

    def _between_chunks(self) -> None:
        # flushes take priority over a long merge
        if self._imm is not None:
            self._flush_imm()

    def _work_loop(self) -> None:
        backoff = 0.05
        while True:
            with self._cv:
                while not self._closing and self._imm is None and not self._work_possible():
                    self._idle = True
                    self._cv.notify_all()
                    self._cv.wait()
                if self._closing:
                    self._idle = True
                    self._cv.notify_all()
                    return
                self._idle = False
            try:
                if self._imm is not None:
                    self._flush_imm()
                else:
                    self._scheduler_step()
                backoff = 0.05
                if self._bg_error is not None and isinstance(self._bg_error, Exception):
                    self._bg_error = None
            except Exception as exc:
                log.exception("background work failed; retrying")
                with self._cv:
                    self._bg_error = exc
                    self._cv.notify_all()
                time.sleep(backoff)
                backoff = min(backoff * 2, 2.0)
            except BaseException as exc:
                with self._cv:
                    self._bg_error = exc
                    self._idle = True
                    self._cv.notify_all()
                return

    def pause_compactions(self) -> None:
        """Stop starting new compactions; flushes continue."""
        with self._cv:
            self._paused = True

    def resume_compactions(self) -> None:
        with self._cv:
            self._paused = False
            self._cv.notify_all()
        if not self.background:
            self._run_inline()

    def wait_for_compactions(self, timeout: Optional[float] = None) -> bool:
        """Block until no flush or compaction is pending. Returns False on timeout."""
        if not self.background:
            self._run_inline()
            return True
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cv:
            while True:
                if isinstance(self._bg_error, BaseException) and not isinstance(self._bg_error, Exception):
                    raise LSMError("background worker stopped") from self._bg_error
                if self._idle and self._imm is None and not self._work_possible():
                    return True
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cv.wait(0.5 if remaining is None else min(0.5, remaining))

    def compact_all(self) -> None:
        """Flush, then merge every run into a single run at the deepest level."""
        self.flush()
        self.wait_for_compactions()
        with self._cv:
            paused, self._paused = self._paused, True
            try:
                while self.background and not self._idle:
                    self._cv.wait(0.5)
                cur = self._current
                v = cur.state
                runs = v.all_runs()
                if not runs:
                    return
                target = max(2, v.level_count)
                if len(runs) == 1 and runs[0].level == target and not runs[0].tombstone_count:
                    return
                fid = self._new_file_id()
                snapshots = sorted(self._snapshots)
                removed = tuple(r.file_id for r in runs)
                bits = filter_bits_for(self.config, v, target, target, removed)
                tables = [cur.tables[r.file_id] for r in runs]
                writer = RunWriter(run_path(self.path, fid), fid, target, self.config.block_bytes, bits)
                result = run_merge(tables, writer, snapshots, drop_tombstones=True, sync=True)
                edit = VersionEdit(added=(result.run,) if result.run else (), removed=removed,
                                   new_depth=target if target != v.depth else None)
                self._apply(edit)
                out_bytes = result.run.file_bytes if result.run else 0
                self._stats.add(compaction_bytes_written=out_bytes, compaction_bytes_read=result.bytes_read)
                self.trace.append(TraceEvent("full-compaction", 1, target, v.level_count,
                                             self._current.state.level_count, removed,
                                             result.run.file_id if result.run else None,
                                             result.bytes_read, out_bytes, "compact_all"))
            finally:
                self._paused = paused
                self._cv.notify_all()

    # ------------------------------------------------------------------
    # reads

    def _read_view(self, snapshot: Optional[Snapshot]):
        with self._mutex:
            self._check_open()
            seq = self._last_seq if snapshot is None else snapshot.seq
            return seq, self._mem, self._imm, self._current

    def get(self, key: bytes, snapshot: Optional[Snapshot] = None) -> Optional[bytes]:
        return self.get_with_stats(key, snapshot)[0]

    def get_with_stats(self, key: bytes, snapshot: Optional[Snapshot] = None) -> tuple[Optional[bytes], ReadStats]:
        seq, mem, imm, cur = self._read_view(snapshot)
        for name, table in (("memtable", mem), ("immutable", imm)):
            if table is None:
                continue
            e = table.get(key, seq)
            if e is not None:
                self._stats.add(point_reads=1)
                return (None if e[2] == TOMBSTONE else e[3]), ReadStats(name)
        reads = negatives = checked = 0
        state, tables = cur.state, cur.tables
        for level, runs in enumerate(state.levels, start=1):
            for run in runs:
                checked += 1
                status, value, n, neg = tables[run.file_id].get(key, seq, use_filter=level > 1)
                reads += n
                negatives += neg
                if status == FOUND or status == DELETED:
                    self._stats.add(point_reads=1, disk_probes_point=reads, filter_negatives=negatives)
                    return (value if status == FOUND else None), ReadStats(f"level{level}", reads, negatives, checked)
        self._stats.add(point_reads=1, disk_probes_point=reads, filter_negatives=negatives)
        return None, ReadStats("none", reads, negatives, checked)

    def seek(self, start: bytes = b"", snapshot: Optional[Snapshot] = None) -> MergingIterator:
        """Iterator over visible (key, value) pairs with key >= start."""
        seq, mem, imm, cur = self._read_view(snapshot)
        counter = [0]
        children = [mem.iter_from(start, seq)]
        if imm is not None:
            children.append(imm.iter_from(start, seq))
        for runs in cur.state.levels:
            for run in runs:
                children.append(cur.tables[run.file_id].iter_from(start, seq, counter))
        return MergingIterator(children, keepalive=cur, counter=counter)

    def scan(self, start: bytes, count: int, snapshot: Optional[Snapshot] = None) -> list[tuple[bytes, bytes]]:
        """First ``count`` visible pairs with key >= start (count 0 only positions)."""
        it = self.seek(start, snapshot)
        out = it.take(count)
        self._stats.add(range_reads=1, disk_probes_range=it.block_reads)
        it.close()
        return out

    def scan_with_stats(self, start: bytes, count: int, snapshot: Optional[Snapshot] = None):
        it = self.seek(start, snapshot)
        out = it.take(count)
        reads = it.block_reads
        self._stats.add(range_reads=1, disk_probes_range=reads)
        it.close()
        return out, reads

    def items(self, snapshot: Optional[Snapshot] = None) -> Iterator[tuple[bytes, bytes]]:
        return self.seek(b"", snapshot)

    # ------------------------------------------------------------------
    # snapshots

    def snapshot(self) -> Snapshot:
        with self._mutex:
            self._check_open()
            seq = self._last_seq
            self._snapshots[seq] += 1
        return Snapshot(self, seq)

    def _release_snapshot(self, seq: int) -> None:
        with self._mutex:
            self._snapshots[seq] -= 1
            if self._snapshots[seq] <= 0:
                del self._snapshots[seq]

    @property
    def last_sequence(self) -> int:
        return self._last_seq

    # ------------------------------------------------------------------
    # introspection

    def logical_bytes(self) -> int:
        """Exact key + value bytes of every live key."""
        return sum(len(k) + len(v) for k, v in self.seek(b""))

    def stats(self, logical_bytes_estimate: Optional[int] = None) -> AmplificationStats:
        state = self._current.state
        extra = {
            "user_bytes_ingested": self._user_bytes,
            "physical_bytes": state.physical_bytes,
            "level_count": state.level_count,
            "pinned_bytes": self.pin.total_bytes,
            "pinned_peak_bytes": self.pin.peak_bytes,
        }
        if logical_bytes_estimate is not None:
            extra["logical_bytes_estimate"] = logical_bytes_estimate
        return self._stats.snapshot(**extra)

    def level_summary(self) -> list[dict]:
        from .policy import level_capacity

        state = self._current.state
        L = state.level_count
        out = []
        for i in range(1, L + 1):
            runs = state.runs(i)
            out.append({
                "level": i,
                "runs": len(runs),
                "bytes": state.level_bytes(i),
                "capacity": level_capacity(i, L, self.config),
                "entries": sum(r.entry_count for r in runs),
            })
        return out

    def nonempty_disk_levels(self) -> int:
        """Levels >= 2 holding a run (each costs one seek on a short scan)."""
        return sum(1 for i in self._current.state.nonempty_levels() if i >= 2)

    # ------------------------------------------------------------------
    # shutdown

    def _stop_worker(self) -> None:
        if self._worker is not None:
            with self._cv:
                self._closing = True
                self._cv.notify_all()
            self._worker.join()
            self._worker = None

    def close(self) -> None:
        """Stop background work and release files. Unflushed writes stay in the WAL."""
        if self._closed:
            return
        self._stop_worker()
        with self._cv:
            self._closed = True
            if self._wal is not None:
                self._wal.close()
            self._manifest.close()
            self._current = None
            for t in list(self._tables.values()):
                t.close()

    def abandon(self) -> None:
        """Drop the store as a crash would: no flush, no manifest write, no deletes."""
        self._abandoned = True
        self._closing = True
        with self._cv:
            self._cv.notify_all()
        if self._worker is not None and self._worker is not threading.current_thread():
            self._worker.join(timeout=30)
        self._closed = True
        if self._wal is not None:
            self._wal.close()
        self._manifest.close()
        for t in list(self._tables.values()):
            t.close()

    def __enter__(self) -> "DB":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            if not self._closed:
                self.close()
        except Exception:
            pass
