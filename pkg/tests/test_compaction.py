import random

import pytest

from lsmkv.compaction import PinnedLevelOne, StallDecision, dedupe, filter_bits_for, merge_chunks, run_merge, stall_gate
from lsmkv.core import (
    PUT,
    TOMBSTONE,
    Garnering,
    NoFilter,
    OptimizedFilter,
    PolicyConfig,
    RunHandle,
    UniformFilter,
    VersionState,
)
from lsmkv.iterator import MergingIterator
from lsmkv.sstable import RunWriter, Table, write_run


def table(tmp_path, fid, entries, level=2):
    path = str(tmp_path / f"{fid:06d}.sst")
    return Table(path, write_run(path, entries, fid, level, block_bytes=256))


def make_runs(tmp_path, n_runs=4, keys=300, seed=0):
    """Runs newest first, each overwriting random keys with higher seqs."""
    r = random.Random(seed)
    seq = 1
    runs = []
    for fid in range(1, n_runs + 1):
        chosen = sorted({b"k%05d" % r.randrange(keys) for _ in range(keys // 2)})
        es = []
        for k in chosen:
            kind = TOMBSTONE if r.random() < 0.15 else PUT
            es.append((k, seq, kind, b"" if kind == TOMBSTONE else b"v%d" % seq))
            seq += 1
        runs.append(table(tmp_path, fid, es))
    return runs[::-1]


class TestMerge:
    def test_chunks_are_ordered_and_complete(self, tmp_path):
        tables = make_runs(tmp_path)
        merged = [e for chunk in merge_chunks(tables, blocks_per_chunk=1) for e in chunk]
        expected = sorted((e for t in tables for e in t.entries()), key=lambda e: (e[0], -e[1]))
        assert merged == expected

    def test_chunks_end_on_key_boundaries(self, tmp_path):
        chunks = list(merge_chunks(make_runs(tmp_path), blocks_per_chunk=1))
        for a, b in zip(chunks, chunks[1:]):
            assert a[-1][0] < b[0][0]

    def test_run_merge_keeps_newest(self, tmp_path):
        tables = make_runs(tmp_path)
        newest = {}
        for t in reversed(tables):
            for e in t.entries():
                newest[e[0]] = e
        w = RunWriter(str(tmp_path / "000099.sst"), 99, 3, 256)
        res = run_merge(tables, w, snapshots=[], drop_tombstones=True)
        out = Table(str(tmp_path / "000099.sst"), res.run).entries()
        assert out == sorted(e for e in newest.values() if e[2] == PUT)
        assert res.entries_in == sum(t.entry_count for t in tables)

    def test_everything_deleted_writes_nothing(self, tmp_path):
        t = table(tmp_path, 1, [(b"a", 1, TOMBSTONE, b""), (b"b", 2, TOMBSTONE, b"")])
        w = RunWriter(str(tmp_path / "000002.sst"), 2, 3, 256)
        res = run_merge([t], w, [], drop_tombstones=True)
        assert res.run is None
        assert not (tmp_path / "000002.sst").exists()

    def test_failure_removes_partial_output(self, tmp_path):
        tables = make_runs(tmp_path)
        w = RunWriter(str(tmp_path / "000050.sst"), 50, 3, 256)

        def boom():
            raise OSError("disk full")

        with pytest.raises(OSError):
            run_merge(tables, w, [], True, check=boom)
        assert not (tmp_path / "000050.sst").exists()


class TestDedupe:
    group = [(b"a", 9, PUT, b"9"), (b"a", 6, PUT, b"6"), (b"a", 3, TOMBSTONE, b""), (b"a", 1, PUT, b"1")]

    def test_no_snapshots(self):
        assert dedupe(self.group, [], False) == self.group[:1]

    def test_snapshot_retains_visible_versions(self):
        assert dedupe(self.group, [7], False) == self.group[:2]
        assert dedupe(self.group, [4], False) == [self.group[0], self.group[2]]
        assert dedupe(self.group, [2, 5], False) == [self.group[0], self.group[2], self.group[3]]

    def test_snapshot_at_newest_keeps_only_newest(self):
        assert dedupe(self.group, [9, 100], False) == self.group[:1]

    def test_trailing_tombstones_dropped_at_bottom(self):
        es = [(b"a", 5, TOMBSTONE, b""), (b"b", 4, PUT, b"x")]
        assert dedupe(es, [], True) == es[1:]
        assert dedupe(self.group, [4], True) == self.group[:1]

    def test_randomized_against_brute_force(self):
        r = random.Random(5)
        for _ in range(200):
            seqs = sorted(r.sample(range(1, 60), r.randint(1, 8)), reverse=True)
            es = [(b"k", s, r.choice((PUT, TOMBSTONE)), b"") for s in seqs]
            snaps = r.sample(range(0, 70), r.randint(0, 4))
            got = dedupe(es, snaps, False)

            def visible(at, entries):
                return next((e for e in entries if e[1] <= at), None)

            for s in snaps + [10**9]:
                assert visible(s, got) == visible(s, es)


class TestFilterSizing:
    def version(self):
        runs = ((), (RunHandle(2, 2, b"a", b"z", 1000, 1),), (RunHandle(3, 3, b"a", b"z", 4000, 1),))
        return VersionState(levels=runs, depth=3)

    def test_modes(self):
        v = self.version()
        assert filter_bits_for(PolicyConfig(filter_mode=NoFilter()), v, 2, 3) is None
        assert filter_bits_for(PolicyConfig(filter_mode=UniformFilter(10)), v, 2, 3) == 10
        assert filter_bits_for(PolicyConfig(filter_mode=UniformFilter(10)), v, 1, 3) is None

    def test_optimized_gives_smaller_levels_more_bits(self):
        cfg = PolicyConfig(policy=Garnering(0.8, 2), filter_mode=OptimizedFilter(8))
        v = self.version()
        upper = filter_bits_for(cfg, v, 2, 3, removed=(2,))(1000)
        lower = filter_bits_for(cfg, v, 3, 3, removed=(3,))(4000)
        assert upper > lower > 0


class TestStallAndPin:
    def test_gate(self):
        cfg = PolicyConfig()
        runs = tuple(RunHandle(i, 1, b"a", b"b", 1, 1, max_seq=i) for i in range(1, 13))
        assert stall_gate(VersionState(levels=(runs[:11],)), cfg) is StallDecision.PROCEED
        assert stall_gate(VersionState(levels=(runs,)), cfg) is StallDecision.STALL

    def test_pin_tracks_level_one(self, tmp_path):
        cfg = PolicyConfig()
        tables = {}
        for fid in (1, 2, 3):
            path = str(tmp_path / f"{fid:06d}.sst")
            tables[fid] = Table(path, write_run(path, [(b"k%d" % fid, fid, PUT, b"v" * 100)], fid, 1))
        pin = PinnedLevelOne(cfg)
        v1 = VersionState(levels=((tables[2].handle, tables[1].handle),))
        pin.sync(v1, tables)
        assert pin.runs == [2, 1] and tables[1].pinned
        v2 = VersionState(levels=((tables[3].handle,),))
        pin.sync(v2, tables)
        assert pin.runs == [3] and not tables[1].pinned
        assert pin.peak_bytes == 2 * tables[1].handle.data_bytes
        assert pin.bound == 12 * cfg.memtable_bytes


class TestMergingIterator:
    def test_newest_wins_and_tombstones_hide(self):
        newer = iter([(b"a", 5, TOMBSTONE, b""), (b"c", 6, PUT, b"c2")])
        older = iter([(b"a", 1, PUT, b"a1"), (b"b", 2, PUT, b"b1"), (b"c", 3, PUT, b"c1")])
        assert list(MergingIterator([newer, older])) == [(b"b", b"b1"), (b"c", b"c2")]

    def test_take(self):
        it = MergingIterator([iter([(b"%d" % i, i + 1, PUT, b"") for i in range(5)])])
        assert it.take(0) == []
        assert [k for k, _ in it.take(2)] == [b"0", b"1"]
        assert len(it.take(10)) == 3

    def test_matches_sorted_union(self):
        r = random.Random(9)
        model = {}
        children = []
        seq = 1
        for _ in range(5):
            es = []
            for k in sorted({b"%03d" % r.randrange(200) for _ in range(50)}):
                es.append((k, seq, PUT, b"%d" % seq))
                model[k] = b"%d" % seq
                seq += 1
            children.append(es)
        its = [iter(sorted(es, key=lambda e: (e[0], -e[1]))) for es in reversed(children)]
        assert list(MergingIterator(its)) == sorted(model.items())
