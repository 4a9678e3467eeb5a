"""Write-ahead log segments.

Record layout (little-endian)::

    [u32 length][u32 crc32(payload)][payload]
    payload = [u64 seq][u8 kind][u32 key_len][key][u32 val_len][val]
"""
from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from typing import Iterator

HEADER = struct.Struct("<II")
PAYLOAD_HEAD = struct.Struct("<QBI")
U32 = struct.Struct("<I")
MIN_PAYLOAD = PAYLOAD_HEAD.size + 4

_pack_header = HEADER.pack
_pack_head = PAYLOAD_HEAD.pack
_pack_u32 = U32.pack
_crc = zlib.crc32


def encode_record(seq: int, kind: int, key: bytes, value: bytes) -> bytes:
    payload = b"".join((_pack_head(seq, kind, len(key)), key, _pack_u32(len(value)), value))
    return _pack_header(len(payload), _crc(payload)) + payload


class WalWriter:
    """Appends records to one segment file.

    Every record goes to the OS immediately; with ``sync`` it is also fsynced
    before :meth:`append` returns.
    """

    def __init__(self, path: str, sync: bool = False):
        self.path = path
        self.sync = sync
        self._fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        self.bytes_written = 0

    def append(self, seq: int, kind: int, key: bytes, value: bytes) -> None:
        payload = b"".join((_pack_head(seq, kind, len(key)), key, _pack_u32(len(value)), value))
        rec = _pack_header(len(payload), _crc(payload)) + payload
        n = os.write(self._fd, rec)
        if n != len(rec):
            raise OSError(f"short write to {self.path}")
        if self.sync:
            os.fsync(self._fd)
        self.bytes_written += n

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None


@dataclass
class WalReplay:
    records: list  # (seq, kind, key, value)
    valid_bytes: int
    total_bytes: int

    @property
    def torn(self) -> bool:
        return self.valid_bytes != self.total_bytes


def iter_records(data: bytes) -> Iterator[tuple[int, tuple]]:
    """Yield (end_offset, record) for each valid record; stop at the first bad one."""
    pos = 0
    n = len(data)
    while pos + HEADER.size <= n:
        length, crc = HEADER.unpack_from(data, pos)
        start = pos + HEADER.size
        end = start + length
        if length < MIN_PAYLOAD or end > n:
            return
        payload = data[start:end]
        if _crc(payload) != crc:
            return
        seq, kind, klen = PAYLOAD_HEAD.unpack_from(payload, 0)
        kend = PAYLOAD_HEAD.size + klen
        if kend + 4 > length:
            return
        (vlen,) = U32.unpack_from(payload, kend)
        if kend + 4 + vlen != length or kind > 1:
            return
        yield end, (seq, kind, payload[PAYLOAD_HEAD.size : kend], payload[kend + 4 :])
        pos = end


def read_segment(path: str) -> WalReplay:
    with open(path, "rb") as f:
        data = f.read()
    records = []
    valid = 0
    for end, rec in iter_records(data):
        records.append(rec)
        valid = end
    return WalReplay(records, valid, len(data))
