"""Reference key-value model used as a test oracle.

The model keeps an append-only write history and never forgets a version.
Per-key version lists and a sorted key set are derived from that history so
that long randomized runs stay fast; :meth:`ModelStore.replay_get` answers the
same questions by scanning the raw history and is used to check the indexes.
"""
from __future__ import annotations

from bisect import bisect_right
from typing import Optional

from sortedcontainers import SortedList

from .core import PUT, TOMBSTONE


class ModelStore:
    def __init__(self):
        self.history: list[tuple[int, bytes, int, bytes]] = []
        self.last_seq = 0
        self._versions: dict[bytes, tuple[list[int], list[tuple[int, bytes]]]] = {}
        self._keys = SortedList()

    def put(self, key: bytes, value: bytes, seq: Optional[int] = None) -> int:
        return self._append(key, PUT, value, seq)

    def delete(self, key: bytes, seq: Optional[int] = None) -> int:
        return self._append(key, TOMBSTONE, b"", seq)

    def _append(self, key: bytes, kind: int, value: bytes, seq: Optional[int]) -> int:
        seq = self.last_seq + 1 if seq is None else seq
        if seq <= self.last_seq:
            raise ValueError("sequence numbers must increase")
        self.history.append((seq, key, kind, value))
        self.last_seq = seq
        entry = self._versions.get(key)
        if entry is None:
            entry = self._versions[key] = ([], [])
            self._keys.add(key)
        entry[0].append(seq)
        entry[1].append((kind, value))
        return seq

    def model_get(self, key: bytes, at_seq: Optional[int] = None) -> Optional[bytes]:
        """Newest value of ``key`` at or below ``at_seq``; tombstones read as absent."""
        at = self.last_seq if at_seq is None else at_seq
        entry = self._versions.get(key)
        if entry is None:
            return None
        i = bisect_right(entry[0], at) - 1
        if i < 0:
            return None
        kind, value = entry[1][i]
        return None if kind == TOMBSTONE else value

    def model_scan(self, start: bytes, count: int, at_seq: Optional[int] = None) -> list[tuple[bytes, bytes]]:
        """First ``count`` visible pairs with key >= start, in key order."""
        out: list[tuple[bytes, bytes]] = []
        if count <= 0:
            return out
        for key in self._keys.irange(minimum=start):
            value = self.model_get(key, at_seq)
            if value is not None:
                out.append((key, value))
                if len(out) >= count:
                    break
        return out

    def state(self, at_seq: Optional[int] = None) -> dict[bytes, bytes]:
        out = {}
        for key in self._keys:
            value = self.model_get(key, at_seq)
            if value is not None:
                out[key] = value
        return out

    def replay_get(self, key: bytes, at_seq: Optional[int] = None) -> Optional[bytes]:
        """:meth:`model_get` computed by a linear pass over the history."""
        at = self.last_seq if at_seq is None else at_seq
        found = None
        for seq, k, kind, value in self.history:
            if seq > at:
                break
            if k == key:
                found = (kind, value)
        if found is None or found[0] == TOMBSTONE:
            return None
        return found[1]
