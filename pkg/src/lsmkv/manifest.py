"""Manifest: append-only log of version edits plus the CURRENT pointer.

Record layout (little-endian)::

    [u32 length][u32 crc32(payload)][payload]

The payload holds, in order: the added runs (level and run metadata), the
removed file ids, the new depth, the last sequence number, the WAL log number
and the next file id. Optional fields carry a one-byte presence flag.
"""
from __future__ import annotations

import os
import struct
import zlib
from typing import Callable, Optional

from .core import CorruptionError, MiB, RunHandle, VersionEdit, VersionState, publish_version

HEADER = struct.Struct("<II")
U8 = struct.Struct("<B")
U32 = struct.Struct("<I")
U64 = struct.Struct("<Q")
RUN_FIXED = struct.Struct("<IQ")  # level, file_id
RUN_STATS = struct.Struct("<QQQQQQQI")  # count, data, file, tombstones, min_seq, max_seq, index off/len
FILTER_REF = struct.Struct("<QI")

REWRITE_BYTES = 4 * MiB
CURRENT = "CURRENT"


def manifest_name(generation: int) -> str:
    return f"MANIFEST-{generation:06d}"


def _bytes(b: bytes) -> bytes:
    return U32.pack(len(b)) + b


def _optional(value: Optional[int], fmt: struct.Struct) -> bytes:
    if value is None:
        return U8.pack(0)
    return U8.pack(1) + fmt.pack(value)


def encode_edit(edit: VersionEdit) -> bytes:
    parts = [U32.pack(len(edit.added))]
    for r in edit.added:
        parts.append(RUN_FIXED.pack(r.level, r.file_id))
        parts.append(_bytes(r.min_key))
        parts.append(_bytes(r.max_key))
        parts.append(RUN_STATS.pack(r.entry_count, r.data_bytes, r.file_bytes, r.tombstone_count,
                                    r.min_seq, r.max_seq, r.index_ref[0], r.index_ref[1]))
        if r.filter_ref is None:
            parts.append(U8.pack(0))
        else:
            parts.append(U8.pack(1) + FILTER_REF.pack(*r.filter_ref))
    parts.append(U32.pack(len(edit.removed)))
    parts.extend(U64.pack(fid) for fid in edit.removed)
    parts.append(_optional(edit.new_depth, U32))
    parts.append(_optional(edit.last_seq, U64))
    parts.append(_optional(edit.log_number, U64))
    parts.append(_optional(edit.next_file_id, U64))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: struct.Struct) -> tuple:
        if self.pos + fmt.size > len(self.buf):
            raise CorruptionError("manifest record truncated")
        out = fmt.unpack_from(self.buf, self.pos)
        self.pos += fmt.size
        return out

    def blob(self) -> bytes:
        (n,) = self.take(U32)
        if self.pos + n > len(self.buf):
            raise CorruptionError("manifest record truncated")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def optional(self, fmt: struct.Struct) -> Optional[int]:
        (flag,) = self.take(U8)
        return self.take(fmt)[0] if flag else None


def decode_edit(payload: bytes) -> VersionEdit:
    r = _Reader(payload)
    (n_added,) = r.take(U32)
    added = []
    for _ in range(n_added):
        level, file_id = r.take(RUN_FIXED)
        min_key, max_key = r.blob(), r.blob()
        count, data, fbytes, tombs, min_seq, max_seq, i_off, i_len = r.take(RUN_STATS)
        (has_filter,) = r.take(U8)
        filter_ref = tuple(r.take(FILTER_REF)) if has_filter else None
        added.append(RunHandle(file_id, level, min_key, max_key, count, data, fbytes, tombs,
                               min_seq, max_seq, (i_off, i_len), filter_ref))
    (n_removed,) = r.take(U32)
    removed = tuple(r.take(U64)[0] for _ in range(n_removed))
    edit = VersionEdit(tuple(added), removed, r.optional(U32), r.optional(U64), r.optional(U64), r.optional(U64))
    if r.pos != len(payload):
        raise CorruptionError("manifest record has trailing bytes")
    return edit


def encode_record(edit: VersionEdit) -> bytes:
    payload = encode_edit(edit)
    return HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def read_records(data: bytes) -> tuple[list[VersionEdit], int]:
    """Decode records up to the first torn or corrupt one; return (edits, valid_bytes)."""
    edits = []
    pos = 0
    while pos + HEADER.size <= len(data):
        length, crc = HEADER.unpack_from(data, pos)
        end = pos + HEADER.size + length
        if end > len(data):
            break
        payload = data[pos + HEADER.size : end]
        if zlib.crc32(payload) != crc:
            break
        try:
            edits.append(decode_edit(payload))
        except CorruptionError:
            break
        pos = end
    return edits, pos


def snapshot_edit(state: VersionState) -> VersionEdit:
    """One edit that rebuilds ``state`` from an empty version."""
    return VersionEdit(
        added=tuple(state.all_runs()),
        new_depth=state.depth,
        last_seq=state.next_seq - 1,
        log_number=state.log_number,
        next_file_id=state.next_file_id,
    )


def _fsync_dir(path: str) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def set_current(dirname: str, generation: int) -> None:
    tmp = os.path.join(dirname, CURRENT + ".tmp")
    with open(tmp, "w") as f:
        f.write(manifest_name(generation) + "\n")
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, os.path.join(dirname, CURRENT))
    _fsync_dir(dirname)


def read_current(dirname: str) -> Optional[str]:
    try:
        with open(os.path.join(dirname, CURRENT)) as f:
            name = f.read().strip()
    except FileNotFoundError:
        return None
    if not name.startswith("MANIFEST-"):
        raise CorruptionError(f"CURRENT names {name!r}")
    return name


def load_version(dirname: str) -> tuple[Optional[VersionState], Optional[str], int]:
    """Replay the manifest named by CURRENT.

    Returns (state, manifest file name, valid byte length); state is None for a
    directory without a manifest.
    """
    name = read_current(dirname)
    if name is None:
        return None, None, 0
    path = os.path.join(dirname, name)
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError as exc:
        raise CorruptionError(f"CURRENT points at missing {name}") from exc
    edits, valid = read_records(data)
    if not edits:
        raise CorruptionError(f"{name} holds no readable record")
    state = VersionState()
    for edit in edits:
        state = publish_version(state, edit)
    return state, name, valid


class ManifestLog:
    """Appends edits to the live manifest file; rewrites it as a snapshot when large."""

    def __init__(self, dirname: str, generation: int, fd: int, size: int,
                 fault_hook: Optional[Callable[[str], None]] = None):
        self.dirname = dirname
        self.generation = generation
        self._fd = fd
        self.size = size
        self.fault_hook = fault_hook

    @classmethod
    def create(cls, dirname: str, generation: int, state: VersionState,
               fault_hook: Optional[Callable[[str], None]] = None) -> "ManifestLog":
        """Start a new manifest generation holding a snapshot of ``state``."""
        path = os.path.join(dirname, manifest_name(generation))
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o644)
        rec = encode_record(snapshot_edit(state))
        os.write(fd, rec)
        os.fsync(fd)
        set_current(dirname, generation)
        return cls(dirname, generation, fd, len(rec), fault_hook)

    def append(self, edit: VersionEdit) -> None:
        rec = encode_record(edit)
        if self.fault_hook is not None:
            self.fault_hook("manifest:before_append")
            try:
                self.fault_hook("manifest:torn_append")
            except BaseException:
                os.write(self._fd, rec[: len(rec) // 2])
                raise
        os.write(self._fd, rec)
        os.fsync(self._fd)
        self.size += len(rec)

    def needs_rewrite(self) -> bool:
        return self.size > REWRITE_BYTES

    def rewrite(self, state: VersionState, generation: int) -> "ManifestLog":
        """Switch to a fresh generation; the old file is removed afterwards."""
        new = ManifestLog.create(self.dirname, generation, state, self.fault_hook)
        old_path = os.path.join(self.dirname, manifest_name(self.generation))
        self.close()
        try:
            os.unlink(old_path)
        except FileNotFoundError:
            pass
        return new

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
