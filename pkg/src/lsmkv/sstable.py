"""Sorted-run files: data blocks, filter block, block index and footer.

File layout, little-endian::

    data blocks   [u32 entry_count][entries][u32 crc32]   (one per block)
    filter block  [u32 num_hashes][u64 bit_len][bits][u32 crc32]   (optional)
    index block   [u32 n] then n x [u32 key_len][key][u64 offset][u32 len]
    footer        [u64 index_offset][u32 index_len][u64 filter_offset]
                  [u32 filter_len][u64 entry_count][u64 magic]   (40 bytes)

Entries inside a block are stored column-wise: a layout byte, the key and
value lengths (a single u32 each when every entry in the block shares it),
one u64 tag per entry (``seq << 8 | kind``), then all keys and all values.
Every version of a user key lives in the same block.
"""
from __future__ import annotations

import os
import struct
import sys
import zlib
from array import array
from bisect import bisect_left, bisect_right
from itertools import accumulate
from operator import itemgetter
from typing import Iterator, Optional, Sequence

from .core import CorruptionError, MAX_SEQ, RunHandle, TOMBSTONE
from .filters import MASK64, BloomFilter, _hash128

MAGIC = 0x415554554D4E4B56
FOOTER = struct.Struct("<QIQIQQ")
FOOTER_SIZE = FOOTER.size  # 40
BLOCK_HEAD = struct.Struct("<IB")
U32 = struct.Struct("<I")
INDEX_ENTRY_TAIL = struct.Struct("<QI")

FIXED_KEYS = 1
FIXED_VALUES = 2
# count + layout byte + two fixed lengths + crc
BLOCK_OVERHEAD = 4 + 1 + 4 + 4 + 4

_BIG_ENDIAN = sys.byteorder == "big"
_key0 = itemgetter(0)


def _array(typecode: str, data) -> array:
    a = array(typecode)
    a.frombytes(data)
    if _BIG_ENDIAN:
        a.byteswap()
    return a


def _array_bytes(typecode: str, values) -> bytes:
    a = array(typecode, values)
    if _BIG_ENDIAN:
        a.byteswap()
    return a.tobytes()


def encode_block(entries: Sequence[tuple]) -> bytes:
    """Encode a sorted slice of internal entries as one checksummed block."""
    n = len(entries)
    keys = [e[0] for e in entries]
    values = [e[3] for e in entries]
    tags = [(e[1] << 8) | e[2] for e in entries]
    klens = set(map(len, keys))
    vlens = set(map(len, values))
    flags = 0
    parts = [b""]
    if len(klens) == 1:
        flags |= FIXED_KEYS
        parts.append(U32.pack(klens.pop()))
    else:
        parts.append(_array_bytes("I", map(len, keys)))
    if len(vlens) == 1:
        flags |= FIXED_VALUES
        parts.append(U32.pack(vlens.pop()))
    else:
        parts.append(_array_bytes("I", map(len, values)))
    parts[0] = BLOCK_HEAD.pack(n, flags)
    parts.append(_array_bytes("Q", tags))
    parts.append(b"".join(keys))
    parts.append(b"".join(values))
    body = b"".join(parts)
    return body + U32.pack(zlib.crc32(body))


def _slices(buf: bytes, pos: int, n: int, fixed: Optional[int], lens) -> tuple[list, int]:
    if fixed == 0:
        return [b""] * n, pos
    if fixed is not None:
        end = pos + n * fixed
        return [buf[p : p + fixed] for p in range(pos, end, fixed)], end
    offs = list(accumulate(lens, initial=pos))
    return [buf[a:b] for a, b in zip(offs, offs[1:])], offs[-1]


def decode_block_columns(buf: bytes, file_id: Optional[int] = None) -> tuple[list, array, list]:
    """Return (keys, tags, values) of a block after verifying its checksum."""
    if len(buf) < BLOCK_OVERHEAD - 8:
        raise CorruptionError("data block truncated", file_id)
    (crc,) = U32.unpack_from(buf, len(buf) - 4)
    if zlib.crc32(memoryview(buf)[:-4]) != crc:
        raise CorruptionError("data block checksum mismatch", file_id)
    n, flags = BLOCK_HEAD.unpack_from(buf, 0)
    pos = BLOCK_HEAD.size
    if flags & FIXED_KEYS:
        (kfix,) = U32.unpack_from(buf, pos)
        pos += 4
        klens = None
    else:
        kfix = None
        klens = _array("I", buf[pos : pos + 4 * n])
        pos += 4 * n
    if flags & FIXED_VALUES:
        (vfix,) = U32.unpack_from(buf, pos)
        pos += 4
        vlens = None
    else:
        vfix = None
        vlens = _array("I", buf[pos : pos + 4 * n])
        pos += 4 * n
    tags = _array("Q", buf[pos : pos + 8 * n])
    pos += 8 * n
    keys, pos = _slices(buf, pos, n, kfix, klens)
    values, pos = _slices(buf, pos, n, vfix, vlens)
    if pos != len(buf) - 4:
        raise CorruptionError("data block length mismatch", file_id)
    return keys, tags, values


def decode_block(buf: bytes, file_id: Optional[int] = None) -> list[tuple]:
    keys, tags, values = decode_block_columns(buf, file_id)
    return list(zip(keys, [t >> 8 for t in tags], [t & 0xFF for t in tags], values))


# ---------------------------------------------------------------------------
# writer


class RunWriter:
    """Streams sorted internal entries into a new run file.

    Feed whole user-key groups per :meth:`add` call; the last partial block is
    carried over to the next call.
    """

    def __init__(self, path: str, file_id: int, level: int, block_bytes: int, bits_per_entry=None):
        self.path = path
        self.file_id = file_id
        self.level = level
        self.block_bytes = block_bytes
        # a float, or a callable mapping the unique key count to bits per entry
        if callable(bits_per_entry):
            self.bits_per_entry = bits_per_entry
        else:
            self.bits_per_entry = bits_per_entry if bits_per_entry and bits_per_entry > 0 else None
        self._f = open(path, "wb")
        self._offset = 0
        self._pending: list = []
        self._index: list[tuple[bytes, int, int]] = []
        self._last_key: Optional[bytes] = None
        self._h1 = array("Q")
        self._h2 = array("Q")
        self.entry_count = 0
        self.data_bytes = 0
        self.tombstones = 0
        self.min_seq = MAX_SEQ
        self.max_seq = 0
        self.min_key: Optional[bytes] = None
        self.image: Optional[bytearray] = None

    def keep_image(self) -> None:
        """Also keep the written bytes in memory (used for pinned level-1 runs)."""
        self.image = bytearray()

    def _write(self, data: bytes) -> None:
        self._f.write(data)
        if self.image is not None:
            self.image += data
        self._offset += len(data)

    def _check_order(self, entries: Sequence[tuple], keys: list) -> None:
        if self._last_key is not None and keys[0] <= self._last_key:
            raise CorruptionError("entries out of order across add() calls", self.file_id)
        if keys != sorted(keys):
            raise CorruptionError("entries out of order", self.file_id)
        if len(set(keys)) != len(keys):
            for a, b in zip(entries, entries[1:]):
                if a[0] == b[0] and (a[1], -a[2]) <= (b[1], -b[2]):
                    raise CorruptionError("versions of a key out of order", self.file_id)

    def add(self, entries: Sequence[tuple]) -> None:
        if not entries:
            return
        keys = [e[0] for e in entries]
        self._check_order(entries, keys)
        self._last_key = keys[-1]
        if self.min_key is None:
            self.min_key = keys[0]
        self.entry_count += len(entries)
        seqs = [e[1] for e in entries]
        self.min_seq = min(self.min_seq, min(seqs))
        self.max_seq = max(self.max_seq, max(seqs))
        self.tombstones += sum(1 for e in entries if e[2] == TOMBSTONE)
        self.data_bytes += sum(len(e[0]) + len(e[3]) for e in entries) + 8 * len(entries)
        if self.bits_per_entry is not None:
            h1, h2 = self._h1, self._h2
            prev = None
            for k in keys:
                if k != prev:
                    h = _hash128(k)
                    h1.append(h & MASK64)
                    h2.append(h >> 64)
                    prev = k
        if self._pending:
            entries = self._pending + list(entries)
        self._pending = self._emit_blocks(entries, final=False)

    def _emit_blocks(self, entries: Sequence[tuple], final: bool) -> list:
        """Write full blocks from ``entries``; return the unwritten tail."""
        sizes = [len(e[0]) + len(e[3]) + 8 for e in entries]
        cum = list(accumulate(sizes, initial=0))
        n = len(entries)
        budget = self.block_bytes - BLOCK_OVERHEAD
        start = 0
        while start < n:
            # entries that fit assuming a fixed-length layout
            end = max(start + 1, bisect_right(cum, cum[start] + budget, lo=start + 1) - 1)
            if end >= n:
                if not final:
                    break
                end = n
            if end - start > 1:
                chunk = entries[start:end]
                if len({len(e[0]) for e in chunk}) > 1 or len({len(e[3]) for e in chunk}) > 1:
                    # variable layout pays 8 more bytes per entry
                    lo, hi = start + 1, end
                    while lo < hi:
                        mid = (lo + hi + 1) // 2
                        if cum[mid] - cum[start] + 8 * (mid - start) <= budget:
                            lo = mid
                        else:
                            hi = mid - 1
                    end = lo
            # keep all versions of a key together
            if end < n and entries[end][0] == entries[end - 1][0]:
                key = entries[end][0]
                back = end
                while back > start and entries[back - 1][0] == key:
                    back -= 1
                if back > start:
                    end = back
                else:
                    while end < n and entries[end][0] == key:
                        end += 1
                    if end >= n and not final:
                        break
            self._write_block(entries[start:end])
            start = end
        return list(entries[start:])

    def _write_block(self, chunk: Sequence[tuple]) -> None:
        block = encode_block(chunk)
        self._index.append((chunk[0][0], self._offset, len(block)))
        self._write(block)

    def finish(self, sync: bool = True) -> RunHandle:
        if self.entry_count == 0:
            self.abort()
            raise ValueError("a run needs at least one entry")
        if self._pending:
            pending, self._pending = self._pending, []
            rest = self._emit_blocks(pending, final=True)
            assert not rest
        filter_ref = None
        bpe = self.bits_per_entry
        if callable(bpe):
            bpe = bpe(len(self._h1))
        if bpe is not None and bpe > 0:
            bf = BloomFilter.from_hashes(self._h1, self._h2, bpe)
            blob = bf.encode()
            filter_ref = (self._offset, len(blob))
            self._write(blob)
        parts = [U32.pack(len(self._index))]
        for key, off, length in self._index:
            parts.append(U32.pack(len(key)))
            parts.append(key)
            parts.append(INDEX_ENTRY_TAIL.pack(off, length))
        index = b"".join(parts)
        index_ref = (self._offset, len(index))
        self._write(index)
        f_off, f_len = filter_ref if filter_ref else (0, 0)
        self._write(FOOTER.pack(index_ref[0], index_ref[1], f_off, f_len, self.entry_count, MAGIC))
        self._f.flush()
        if sync:
            os.fsync(self._f.fileno())
        self._f.close()
        return RunHandle(
            file_id=self.file_id,
            level=self.level,
            min_key=self.min_key,
            max_key=self._last_key,
            entry_count=self.entry_count,
            data_bytes=self.data_bytes,
            file_bytes=self._offset,
            tombstone_count=self.tombstones,
            min_seq=self.min_seq,
            max_seq=self.max_seq,
            index_ref=index_ref,
            filter_ref=filter_ref,
        )

    def abort(self) -> None:
        try:
            self._f.close()
        finally:
            if os.path.exists(self.path):
                os.unlink(self.path)


def write_run(path: str, entries: Sequence[tuple], file_id: int, level: int, block_bytes: int = 4096,
              bits_per_entry=None, sync: bool = True) -> RunHandle:
    """Write a complete run from an in-memory sorted entry list."""
    if not entries:
        raise ValueError("a run needs at least one entry")
    w = RunWriter(path, file_id, level, block_bytes, bits_per_entry)
    try:
        w.add(entries)
        return w.finish(sync=sync)
    except BaseException:
        w.abort()
        raise


# ---------------------------------------------------------------------------
# reader


NOT_FOUND = 0
FOUND = 1
DELETED = 2


class Table:
    """Open run file: in-memory block index and filter, blocks read on demand.

    A table may be *pinned*: its decoded entries are held in memory and reads
    never touch the file.
    """

    def __init__(self, path: str, handle: RunHandle):
        self.path = path
        self.handle = handle
        self.file_id = handle.file_id
        try:
            self._fd = os.open(path, os.O_RDONLY)
        except OSError as exc:
            raise CorruptionError(f"cannot open run file: {exc}", handle.file_id) from exc
        self.file_size = os.fstat(self._fd).st_size
        if self.file_size < FOOTER_SIZE:
            os.close(self._fd)
            raise CorruptionError("file shorter than footer", handle.file_id)
        footer = os.pread(self._fd, FOOTER_SIZE, self.file_size - FOOTER_SIZE)
        i_off, i_len, f_off, f_len, count, magic = FOOTER.unpack(footer)
        if magic != MAGIC:
            os.close(self._fd)
            raise CorruptionError("bad magic", handle.file_id)
        if i_off + i_len > self.file_size or f_off + f_len > self.file_size:
            os.close(self._fd)
            raise CorruptionError("footer offsets out of bounds", handle.file_id)
        self.entry_count = count
        self._load_index(os.pread(self._fd, i_len, i_off))
        self.filter: Optional[BloomFilter] = None
        if f_len:
            self.filter = BloomFilter.decode(os.pread(self._fd, f_len, f_off), entry_count=count)
        self.data_end = self._offsets[-1] + self._lengths[-1] if self._offsets else 0
        self._pinned: Optional[tuple[list, list]] = None
        self.pinned_bytes = 0

    def _load_index(self, buf: bytes) -> None:
        (n,) = U32.unpack_from(buf, 0)
        pos = 4
        keys, offs, lens = [], [], []
        for _ in range(n):
            (klen,) = U32.unpack_from(buf, pos)
            pos += 4
            keys.append(buf[pos : pos + klen])
            pos += klen
            off, length = INDEX_ENTRY_TAIL.unpack_from(buf, pos)
            pos += 12
            offs.append(off)
            lens.append(length)
        if pos != len(buf):
            raise CorruptionError("index block length mismatch", self.file_id)
        self.index_keys = keys
        self._offsets = offs
        self._lengths = lens

    @property
    def block_count(self) -> int:
        return len(self.index_keys)

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    # -- pinning -----------------------------------------------------------

    @property
    def pinned(self) -> bool:
        return self._pinned is not None

    def pin(self, image: Optional[bytes] = None) -> int:
        """Hold the run's entries in memory; returns the pinned byte count."""
        if image is None:
            image = os.pread(self._fd, self.data_end, 0)
        entries: list = []
        for off, length in zip(self._offsets, self._lengths):
            entries.extend(decode_block(image[off : off + length], self.file_id))
        self._pinned = ([e[0] for e in entries], entries)
        self.pinned_bytes = self.handle.data_bytes
        return self.pinned_bytes

    def unpin(self) -> None:
        self._pinned = None
        self.pinned_bytes = 0

    def pinned_entries(self) -> list:
        return list(self._pinned[1]) if self._pinned else []

    # -- reads ---------------------------------------------------------------

    def read_block(self, i: int) -> list[tuple]:
        return decode_block(os.pread(self._fd, self._lengths[i], self._offsets[i]), self.file_id)

    def find_block(self, key: bytes) -> int:
        return bisect_right(self.index_keys, key) - 1

    def get(self, key: bytes, snapshot_seq: int, use_filter: bool = True) -> tuple[int, Optional[bytes], int, bool]:
        """Point probe: (status, value, disk_block_reads, filter_negative)."""
        h = self.handle
        if key < h.min_key or key > h.max_key:
            return NOT_FOUND, None, 0, False
        if self._pinned is not None:
            keys, entries = self._pinned
            i = bisect_left(keys, key)
            while i < len(keys) and keys[i] == key:
                e = entries[i]
                if e[1] <= snapshot_seq:
                    return (DELETED, None, 0, False) if e[2] == TOMBSTONE else (FOUND, e[3], 0, False)
                i += 1
            return NOT_FOUND, None, 0, False
        if use_filter and self.filter is not None and not self.filter.might_contain(key):
            return NOT_FOUND, None, 0, True
        b = bisect_right(self.index_keys, key) - 1
        if b < 0:
            return NOT_FOUND, None, 0, False
        buf = os.pread(self._fd, self._lengths[b], self._offsets[b])
        keys, tags, values = decode_block_columns(buf, self.file_id)
        i = bisect_left(keys, key)
        while i < len(keys) and keys[i] == key:
            tag = tags[i]
            if tag >> 8 <= snapshot_seq:
                if tag & 0xFF == TOMBSTONE:
                    return DELETED, None, 1, False
                return FOUND, values[i], 1, False
            i += 1
        return NOT_FOUND, None, 1, False

    def iter_from(self, start: bytes, snapshot_seq: int, counter=None) -> Iterator[tuple]:
        """Entries with user_key >= start in internal order, seq <= snapshot_seq.

        ``counter`` (a list of one int) accumulates disk block reads.
        """
        if self._pinned is not None:
            keys, entries = self._pinned
            for i in range(bisect_left(keys, start), len(entries)):
                e = entries[i]
                if e[1] <= snapshot_seq:
                    yield e
            return
        if start > self.handle.max_key:
            return
        b = max(0, bisect_right(self.index_keys, start) - 1)
        nblocks = len(self._offsets)
        first = True
        while b < nblocks:
            block = self.read_block(b)
            if counter is not None:
                counter[0] += 1
            lo = bisect_left(block, start, key=_key0) if first else 0
            first = False
            for i in range(lo, len(block)):
                e = block[i]
                if e[1] <= snapshot_seq:
                    yield e
            b += 1

    def iter_chunks(self, blocks_per_chunk: int = 256) -> Iterator[list]:
        """Sequential scan in multi-block reads; yields lists of entries."""
        if self._pinned is not None:
            entries = self._pinned[1]
            step = max(1, blocks_per_chunk * 32)
            n = len(entries)
            i = 0
            while i < n:
                j = min(n, i + step)
                # chunks end on a user-key boundary
                while j < n and entries[j][0] == entries[j - 1][0]:
                    j += 1
                yield entries[i:j]
                i = j
            return
        n = len(self._offsets)
        for b in range(0, n, blocks_per_chunk):
            e = min(n, b + blocks_per_chunk)
            start = self._offsets[b]
            end = self._offsets[e - 1] + self._lengths[e - 1]
            buf = os.pread(self._fd, end - start, start)
            out: list = []
            for i in range(b, e):
                o = self._offsets[i] - start
                out.extend(decode_block(buf[o : o + self._lengths[i]], self.file_id))
            yield out

    def entries(self) -> list[tuple]:
        out: list = []
        for chunk in self.iter_chunks():
            out.extend(chunk)
        return out

    def block_bounds(self) -> list[tuple[int, int]]:
        return list(zip(self._offsets, self._lengths))
