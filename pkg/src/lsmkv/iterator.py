"""Merging iterator over memtables and runs."""
from __future__ import annotations

from heapq import heapify, heappop, heapreplace
from typing import Iterator, Optional, Sequence

from .core import TOMBSTONE


class MergingIterator:
    """Yields visible ``(key, value)`` pairs in key order.

    Children are iterators of internal entries already filtered to the
    snapshot, ordered newest source first; the heap is keyed on
    ``(key, -seq, child index)`` so the first entry popped for a key is the
    newest and decides visibility. ``keepalive`` holds whatever must outlive
    the iteration (the version reference pinning run files).
    """

    def __init__(self, children: Sequence[Iterator[tuple]], keepalive=None, counter: Optional[list] = None):
        self._keepalive = keepalive
        self.counter = counter if counter is not None else [0]
        heap = []
        for idx, it in enumerate(children):
            e = next(it, None)
            if e is not None:
                heap.append((e[0], -e[1], idx, e, it))
        heapify(heap)
        self._heap = heap

    def __iter__(self) -> "MergingIterator":
        return self

    def __next__(self) -> tuple[bytes, bytes]:
        heap = self._heap
        while heap:
            key, _, _, newest, _ = heap[0]
            while heap and heap[0][0] == key:
                _, _, idx, _, it = heap[0]
                e = next(it, None)
                if e is None:
                    heappop(heap)
                else:
                    heapreplace(heap, (e[0], -e[1], idx, e, it))
            if newest[2] != TOMBSTONE:
                return key, newest[3]
        self._keepalive = None
        raise StopIteration

    @property
    def block_reads(self) -> int:
        return self.counter[0]

    def take(self, n: int) -> list[tuple[bytes, bytes]]:
        out: list = []
        if n <= 0:
            return out
        for item in self:
            out.append(item)
            if len(out) >= n:
                break
        return out

    def close(self) -> None:
        self._heap = []
        self._keepalive = None
