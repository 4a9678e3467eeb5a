"""In-memory write buffer (level 0)."""
from __future__ import annotations

from enum import Enum
from typing import Iterator, Optional

from sortedcontainers import SortedList

from .core import TOMBSTONE


class MemtableState(Enum):
    ACTIVE = "active"
    IMMUTABLE = "immutable"


class Memtable:
    """Versions per key in a dict, plus a sorted key list built on first ordered access.

    Every version is kept (no in-place overwrite) so that recency survives a
    flush and older snapshots still resolve.
    """

    def __init__(self, log_numbers: tuple[int, ...] = ()):
        self._versions: dict[bytes, list] = {}
        self._sorted: Optional[SortedList] = None
        self.approx_bytes = 0
        self.entry_count = 0
        self.state = MemtableState.ACTIVE
        self.log_numbers: list[int] = list(log_numbers)
        self.min_seq: Optional[int] = None
        self.max_seq = 0

    def __len__(self) -> int:
        return self.entry_count

    @property
    def empty(self) -> bool:
        return self.entry_count == 0

    def add(self, seq: int, kind: int, key: bytes, value: bytes) -> None:
        if self.state is not MemtableState.ACTIVE:
            raise RuntimeError("memtable is immutable")
        versions = self._versions.get(key)
        if versions is None:
            self._versions[key] = [(key, seq, kind, value)]
            if self._sorted is not None:
                self._sorted.add(key)
        else:
            versions.append((key, seq, kind, value))
        self.approx_bytes += len(key) + len(value) + 8
        self.entry_count += 1
        if self.min_seq is None:
            self.min_seq = seq
        self.max_seq = seq

    def freeze(self) -> None:
        self.state = MemtableState.IMMUTABLE

    def get(self, key: bytes, snapshot_seq: int) -> Optional[tuple]:
        """Newest version with seq <= snapshot_seq, or None."""
        versions = self._versions.get(key)
        if versions is None:
            return None
        for e in reversed(versions):
            if e[1] <= snapshot_seq:
                return e
        return None

    def _keys(self) -> SortedList:
        if self._sorted is None:
            self._sorted = SortedList(self._versions)
        return self._sorted

    def entries(self) -> list[tuple]:
        """All internal entries in internal order."""
        out: list = []
        versions = self._versions
        for key in sorted(versions):
            vs = versions[key]
            if len(vs) == 1:
                out.append(vs[0])
            else:
                out.extend(sorted(vs, key=lambda e: (-e[1], e[2])))
        return out

    def iter_from(self, start: bytes, snapshot_seq: int) -> Iterator[tuple]:
        """Internal entries with user_key >= start and seq <= snapshot_seq.

        Tolerates concurrent inserts by re-seeking past the last key served.
        """
        keys = self._keys()
        versions = self._versions
        i = keys.bisect_left(start)
        while True:
            try:
                key = keys[i]
            except IndexError:
                return
            for e in reversed(versions[key]):
                if e[1] <= snapshot_seq:
                    yield e
            i = keys.bisect_right(key)

    def visible_items(self, snapshot_seq: int) -> Iterator[tuple[bytes, Optional[bytes]]]:
        for key in self._keys():
            e = self.get(key, snapshot_seq)
            if e is not None:
                yield key, (None if e[2] == TOMBSTONE else e[3])
