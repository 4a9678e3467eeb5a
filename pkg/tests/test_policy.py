import math

import pytest

from lsmkv.core import (
    MiB,
    PUT,
    TOMBSTONE,
    Garnering,
    Leveling,
    PolicyConfig,
    RunHandle,
    StructuralError,
    VersionEdit,
    VersionState,
    compare_internal,
    entry_bytes,
    publish_version,
)
from lsmkv.policy import (
    LastLevelDecision,
    LevelPlan,
    analytic_depth,
    capacity_ratio,
    declared_depth,
    exact_garnering_depth,
    last_level_full,
    level_capacity,
    on_last_level_full,
    pick_compaction,
)

B = 4 * MiB


def garn(c=0.8, k=2.0):
    return PolicyConfig(memtable_bytes=B, policy=Garnering(c, k))


def run(fid, level, data_bytes, lo=b"a", hi=b"z", max_seq=0):
    return RunHandle(fid, level, lo, hi, 1, data_bytes, max_seq=max_seq or fid)


def version(*levels, depth=1):
    return VersionState(levels=tuple(tuple(l) for l in levels), depth=depth)


class TestEntries:
    def test_internal_order(self):
        a = (b"k", 5, PUT, b"")
        b = (b"k", 3, PUT, b"")
        assert compare_internal(a, b) < 0
        assert compare_internal((b"a", 1, PUT, b""), (b"b", 9, PUT, b"")) < 0
        assert compare_internal((b"k", 4, TOMBSTONE, b""), (b"k", 4, PUT, b"")) < 0

    def test_entry_bytes(self):
        assert entry_bytes(b"abc", b"12345") == 3 + 5 + 8


class TestCapacities:
    def test_worked_example(self):
        cfg = garn()
        got = [level_capacity(i, 3, cfg) / MiB for i in (1, 2, 3)]
        assert got == pytest.approx([12.5, 31.25, 62.5], rel=1e-12)

    def test_ratios_telescope(self):
        cfg = garn()
        caps = [B] + [level_capacity(i, 3, cfg) for i in (1, 2, 3)]
        assert [caps[i] / caps[i - 1] for i in (1, 2, 3)] == pytest.approx([3.125, 2.5, 2.0])

    def test_c_one_matches_leveling(self):
        g = PolicyConfig(memtable_bytes=B, policy=Garnering(1.0, 2))
        l = PolicyConfig(memtable_bytes=B, policy=Leveling(2))
        for L in range(1, 9):
            assert LevelPlan.build(L, g).capacities == LevelPlan.build(L, l).capacities

    def test_last_level_closed_form(self):
        cfg = garn(0.7, 3)
        for L in range(1, 8):
            assert level_capacity(L, L, cfg) == pytest.approx(B * 3**L / 0.7 ** (L * (L - 1) / 2))

    def test_growth_never_shrinks(self):
        cfg = garn()
        for L in range(1, 10):
            for i in range(1, L + 1):
                assert level_capacity(i, L + 1, cfg) >= level_capacity(i, L, cfg)

    def test_bad_level(self):
        with pytest.raises(ValueError):
            level_capacity(0, 3, garn())
        with pytest.raises(ValueError):
            level_capacity(4, 3, garn())

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            Garnering(0.5, 2)
        with pytest.raises(ValueError):
            Garnering(0.8, 1.0)
        with pytest.raises(ValueError):
            Leveling(1)

    def test_plan_ratios(self):
        plan = LevelPlan.build(4, garn())
        for i, r in enumerate(plan.ratios(), start=1):
            assert r == pytest.approx(capacity_ratio(i, 4, garn()), rel=1e-9)


class TestDepth:
    def test_zero(self):
        assert declared_depth(0, garn()) == 1

    def test_leveling_sixty_mib(self):
        cfg = PolicyConfig(memtable_bytes=B, policy=Leveling(2))
        assert declared_depth(60 * MiB, cfg) == 4

    def test_garnering_shallower_at_one_gib(self):
        g = declared_depth(1024 * MiB, garn())
        l = declared_depth(1024 * MiB, PolicyConfig(memtable_bytes=B, policy=Leveling(2)))
        assert g < l

    @pytest.mark.parametrize("c", [0.7, 0.8, 0.9])
    @pytest.mark.parametrize("k", [2, 4])
    def test_declared_tracks_exact_solution(self, c, k):
        cfg = garn(c, k)
        for j in range(1, 15):
            n = 2**j * B
            assert abs(declared_depth(n, cfg) - math.ceil(exact_garnering_depth(n, B, c, k))) <= 1

    @pytest.mark.parametrize("c,k", [(0.7, 4), (0.8, 2), (0.8, 4)])
    def test_declared_tracks_leading_estimate(self, c, k):
        cfg = garn(c, k)
        for j in range(1, 15):
            n = 2**j * B
            assert abs(declared_depth(n, cfg) - math.ceil(analytic_depth(n, cfg))) <= 1


class TestScheduling:
    def test_level1_trigger_first(self):
        cfg = garn()
        v = version([run(i, 1, 100) for i in range(1, 5)], [run(9, 2, 10**12)], depth=3)
        task = pick_compaction(v, cfg)
        assert task.source_level == 1 and task.target_level == 2
        assert len(task.source_runs) == 4

    def test_smallest_over_capacity_level(self):
        cfg = garn()
        big = 10**12
        v = version([], [run(2, 2, big)], [run(3, 3, big)], [run(4, 4, 1)], depth=4)
        task = pick_compaction(v, cfg)
        assert task.source_level == 2 and task.target_run.file_id == 3

    def test_nothing_to_do(self):
        v = version([run(1, 1, 10)], [run(2, 2, 10)], depth=2)
        assert pick_compaction(v, garn()) is None

    def test_grew_depth_when_new_capacity_absorbs(self):
        cfg = garn()
        cap = level_capacity(2, 2, cfg)
        v = version([], [run(1, 2, int(math.ceil(cap)))], depth=2)
        assert last_level_full(v, cfg)
        decision, L = on_last_level_full(v, cfg)
        assert decision is LastLevelDecision.GREW_DEPTH and L == 3
        assert level_capacity(3, 3, cfg) == pytest.approx(level_capacity(2, 2, cfg) * 2 / 0.8**2)

    def test_compact_last_when_too_big(self):
        cfg = garn()
        v = version([], [run(1, 2, int(level_capacity(2, 3, cfg)) + 1)], depth=2)
        decision, L = on_last_level_full(v, cfg)
        assert decision is LastLevelDecision.COMPACT_LAST and L == 3

    def test_not_full_raises(self):
        v = version([], [run(1, 2, 1)], depth=2)
        with pytest.raises(ValueError):
            on_last_level_full(v, garn())


class TestVersions:
    def test_publish_and_remove(self):
        v0 = VersionState()
        v1 = publish_version(v0, VersionEdit(added=(run(1, 1, 10), run(2, 1, 10))))
        assert [r.file_id for r in v1.runs(1)] == [2, 1]
        v2 = publish_version(v1, VersionEdit(added=(run(3, 2, 20),), removed=(1, 2), new_depth=2))
        assert v2.runs(1) == () and v2.level_bytes(2) == 20 and v2.depth == 2
        assert v1.runs(1)  # old version untouched

    def test_structural_errors(self):
        v = publish_version(VersionState(), VersionEdit(added=(run(1, 2, 10),)))
        with pytest.raises(StructuralError):
            publish_version(v, VersionEdit(added=(run(2, 2, 10),)))
        with pytest.raises(StructuralError):
            publish_version(v, VersionEdit(removed=(7,)))
        with pytest.raises(StructuralError):
            publish_version(v, VersionEdit(added=(run(1, 3, 10),)))

    def test_level_count(self):
        v = version([], [], [run(1, 3, 5)], depth=2)
        assert v.level_count == 3
        assert v.nonempty_levels() == [3]

    def test_dynamic_level_bytes_rejected(self):
        with pytest.raises(ValueError):
            PolicyConfig(dynamic_level_bytes=True)
