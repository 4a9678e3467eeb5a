import csv
import random
from collections import Counter

import pytest

from lsmkv import DB, KiB, PolicyConfig
from lsmkv.bench import cli
from lsmkv.bench.runner import CSV_COLUMNS, Harness, LogicalSize, format_table, run_db_bench, run_ycsb
from lsmkv.bench.workloads import (
    YCSB_KEY_BYTES,
    KeyChooser,
    KeyDistribution,
    Op,
    OpChooser,
    WorkloadSpec,
    ZipfianGenerator,
    gen_key,
    workload,
    ycsb_key,
    zeta,
)


class TestKeys:
    def test_sequential(self):
        assert gen_key(KeyDistribution.SEQUENTIAL, 7, 100) == b"0000000000000007"

    def test_ycsb_key_shape(self):
        keys = {ycsb_key(i) for i in range(1000)}
        assert len(keys) == 1000
        assert all(len(k) == YCSB_KEY_BYTES and k.startswith(b"user") for k in keys)

    def test_keyspace_check(self):
        with pytest.raises(ValueError):
            gen_key(KeyDistribution.UNIFORM, 0, 0)

    def test_uniform_in_range(self):
        r = random.Random(1)
        ks = {gen_key(KeyDistribution.UNIFORM, i, 50, r) for i in range(2000)}
        assert len(ks) == 50


class TestZipf:
    def test_rank_one_frequency_matches_normalization(self):
        n, draws = 10_000, 1_000_000
        z = ZipfianGenerator(n, 0.99, random.Random(42))
        hits = sum(1 for _ in range(draws) if z.next() == 0)
        expected = 1.0 / zeta(n, 0.99)
        assert hits / draws == pytest.approx(expected, rel=0.10)

    def test_head_frequencies(self):
        z = ZipfianGenerator(1000, 0.99, random.Random(3))
        c = Counter(z.next() for _ in range(200_000))
        for rank in (0, 1):
            assert c[rank] / 200_000 == pytest.approx(z.rank_probability(rank), rel=0.05)

    def test_grow_matches_fresh(self):
        z = ZipfianGenerator(100)
        z.grow(5000)
        assert z.zetan == pytest.approx(zeta(5000, 0.99), rel=1e-12)

    def test_latest_concentrates_on_recent(self):
        ch = KeyChooser(KeyDistribution.LATEST, 100, random.Random(5))
        draws = [ch.next() for _ in range(10_000)]
        assert sum(d >= 90 for d in draws) / len(draws) > 0.5
        ch.inserted(200)
        assert max(ch.next() for _ in range(1000)) == 199


class TestWorkloads:
    def test_mixes(self):
        assert dict(workload("a").op_mix) == {Op.READ: 0.5, Op.UPDATE: 0.5}
        assert workload("D").key_distribution is KeyDistribution.LATEST
        assert dict(workload("E").op_mix)[Op.SCAN] == 0.95
        assert workload("F").value_bytes == 1000
        with pytest.raises(ValueError):
            workload("G")

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            WorkloadSpec("x", ((Op.READ, 0.5),), KeyDistribution.UNIFORM)
        with pytest.raises(ValueError):
            WorkloadSpec("x", ((Op.READ, 1.0),), KeyDistribution.UNIFORM, record_count=0)

    def test_op_chooser(self):
        ch = OpChooser(workload("B"), random.Random(1))
        c = Counter(ch.next() for _ in range(20_000))
        assert c[Op.READ] / 20_000 == pytest.approx(0.95, abs=0.01)


def small_db(path, policy=None):
    cfg = PolicyConfig(memtable_bytes=32 * KiB, block_bytes=1024, **({"policy": policy} if policy else {}))
    return DB.open(str(path), cfg, background=False)


class TestRunner:
    def test_logical_size(self):
        ls = LogicalSize(2, 16)
        ls.put(0, 100)
        ls.put(0, 50)
        ls.put(10, 10)
        ls.delete(0)
        assert ls.total == 26

    def test_db_bench_sequence(self, tmp_path):
        db = small_db(tmp_path / "db")
        h = Harness(db, seed=1, num=2000)
        reports = [h.run_db_bench(op, 2000) for op in ("fillseq", "fillrandom", "readrandom", "seekrandom",
                                                        "seekrandomnext10")]
        assert [r.ops for r in reports] == [2000] * 5
        assert reports[2].found == 2000
        assert reports[0].wa > 0 and reports[1].sa > 0
        assert h.logical.total == db.logical_bytes()
        assert "fillrandom" in format_table(reports)
        with pytest.raises(ValueError):
            h.run_db_bench("bogus", 1)
        db.close()

    def test_determinism(self, tmp_path):
        states = []
        for name in ("a", "b"):
            db = small_db(tmp_path / name)
            run_db_bench(db, "fillrandom", 3000, seed=9)
            states.append(list(db.items()))
            db.close()
        assert states[0] == states[1]

    def test_ycsb(self, tmp_path):
        db = small_db(tmp_path / "db")
        h = Harness(db, seed=2)
        load = h.run_ycsb(workload("load").with_counts(500, 0))
        assert load.ops == 500 and db.logical_bytes() == h.ycsb_logical.total
        for name in "ABCDEF":
            r = h.run_ycsb(workload(name).with_counts(500, 400))
            assert sum(r.op_counts.values()) == 400 == r.ops
            assert r.throughput_kops == pytest.approx(r.ops / r.elapsed_s / 1000)
        assert db.logical_bytes() == h.ycsb_logical.total
        db.close()

    def test_ycsb_needs_load(self, tmp_path):
        db = small_db(tmp_path / "db")
        with pytest.raises(RuntimeError):
            run_ycsb(db, workload("C").with_counts(10, 10))
        db.close()

    def test_zero_operations_leave_store_untouched(self, tmp_path):
        db = small_db(tmp_path / "db")
        h = Harness(db)
        h.run_ycsb(workload("load").with_counts(100, 0))
        seq = db.last_sequence
        r = h.run_ycsb(workload("A").with_counts(100, 0))
        assert r.ops == 0 and db.last_sequence == seq and r.hist.count == 0
        db.close()


class TestCli:
    def test_db_bench_run_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        rc = cli.main(["--db", str(tmp_path / "db"), "--policy", "leveling", "--t", "3", "--num", "3000",
                       "--reads", "200", "--benchmarks", "fillrandom,readrandom,seekrandomnext10",
                       "--filter-mode", "optimized", "--memtable-bytes", str(32 * KiB), "--csv", str(out),
                       "--inline"])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["benchmark"] for r in rows] == ["fillrandom", "readrandom", "seekrandomnext10"]
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[0]["policy"] == "leveling" and rows[0]["params"] == "T=3"
        assert "throughput_kops" in capsys.readouterr().out

    def test_ycsb_prepends_load(self, tmp_path, capsys):
        rc = cli.main(["--db", str(tmp_path / "db"), "--ycsb", "C", "--record-count", "300",
                       "--operation-count", "100", "--memtable-bytes", str(64 * KiB)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "ycsb-load" in text and "ycsb-C" in text

    def test_usage_errors(self, tmp_path, capsys):
        assert cli.main(["--db", str(tmp_path / "db")]) == 2
        assert cli.main(["--db", str(tmp_path / "db"), "--ycsb", "Q"]) == 2
        assert cli.main(["--db", str(tmp_path / "db"), "--benchmarks", "nope", "--num", "1"]) == 2
        with pytest.raises(SystemExit):
            cli.main(["--db", "x", "--policy", "tiering"])
