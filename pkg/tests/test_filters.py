import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmkv.filters import (
    BloomFilter,
    allocate_fprs,
    bits_for_fpr,
    filter_memory_bits,
    fpr_model,
    min_bits_for_constant_lookup,
    peak_constant_lookup_bits,
    read_cost_series,
    uniform_plan,
)


def keys(n, seed=0, prefix=b"k"):
    r = random.Random(seed)
    return [prefix + r.randbytes(12) for _ in range(n)]


def measured_fpr(bits, n=100_000):
    present = keys(n, 1)
    f = BloomFilter.from_keys(present, bits)
    probes = keys(n, 2, prefix=b"x")
    return sum(f.might_contain(k) for k in probes) / n, f, present


class TestModel:
    def test_values(self):
        assert fpr_model(10) == pytest.approx(0.0082, abs=5e-5)
        assert fpr_model(0) == 1.0
        assert fpr_model(2) == pytest.approx(math.exp(-0.9609), rel=1e-3)
        assert fpr_model(2) == pytest.approx(0.3825, abs=1e-4)

    def test_inverse(self):
        for b in (1, 4.5, 10, 20):
            assert bits_for_fpr(fpr_model(b)) == pytest.approx(b)

    def test_negative(self):
        with pytest.raises(ValueError):
            fpr_model(-1)


class TestBloom:
    @pytest.mark.parametrize("bits", [2, 5, 10])
    def test_fpr_near_model(self, bits):
        fpr, f, present = measured_fpr(bits)
        assert fpr == pytest.approx(fpr_model(bits), rel=0.2)

    def test_no_false_negatives(self):
        _, f, present = measured_fpr(10)
        assert all(f.might_contain(k) for k in present)

    def test_encode_roundtrip(self):
        ks = keys(1000)
        f = BloomFilter.from_keys(ks, 8)
        g = BloomFilter.decode(f.encode(), entry_count=1000)
        assert all(g.might_contain(k) for k in ks)
        assert g.encode() == f.encode()

    def test_incremental_add_matches_bulk(self):
        ks = keys(500)
        bulk = BloomFilter.from_keys(ks, 10)
        inc = BloomFilter.sized(500, 10)
        for k in ks:
            inc.add(k)
        assert inc.encode() == bulk.encode()

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.binary(min_size=1, max_size=20), min_size=1, max_size=200))
    def test_membership_property(self, ks):
        f = BloomFilter.from_keys(ks, 6)
        assert all(f.might_contain(k) for k in ks)


class TestAllocation:
    def test_worked_example(self):
        counts = [1.0, 2.5, 5.0]
        target = [0.002, 0.005, 0.01]
        budget = filter_memory_bits(counts, target) / sum(counts)
        plan = allocate_fprs(counts, 0.8, 2, budget)
        assert plan.per_level_fpr == pytest.approx(target, abs=1e-6)
        assert plan.target_read_cost == pytest.approx(0.017, abs=1e-9)

    def test_c_one_is_geometric(self):
        plan = allocate_fprs([1, 3, 9, 27], 1.0, 3, 6)
        p = plan.per_level_fpr
        for i in range(3):
            assert p[i] == pytest.approx(p[i + 1] / 3)

    def test_zero_budget(self):
        plan = allocate_fprs([1, 2, 4], 0.8, 2, 0)
        assert plan.per_level_fpr == (1.0, 1.0, 1.0)
        assert plan.target_read_cost == 3

    def test_clamping_reaches_fixed_point(self):
        plan = allocate_fprs([1, 2, 1000], 0.8, 2, 0.5)
        assert plan.iterations <= 3
        assert all(p <= 1.0 for p in plan.per_level_fpr)
        used = filter_memory_bits([1, 2, 1000], plan.per_level_fpr)
        assert used == pytest.approx(0.5 * 1003, rel=1e-9)

    def test_huge_budget_floors(self):
        plan = allocate_fprs([1, 2, 4], 0.8, 2, 10_000)
        assert plan.floored and min(plan.per_level_fpr) == 1e-9

    @pytest.mark.parametrize("c,k,L", [(0.8, 2, 3), (0.6, 3, 5), (0.95, 2, 6), (1.0, 4, 4)])
    @pytest.mark.parametrize("bpe", [2.0, 5.0, 10.0])
    def test_beats_uniform(self, c, k, L, bpe):
        counts = [k**i / c ** ((2 * L - 1 - i) * i / 2) for i in range(1, L + 1)]
        opt = allocate_fprs(counts, c, k, bpe)
        assert opt.target_read_cost <= uniform_plan(L, bpe).target_read_cost + 1e-12

    def test_bad_args(self):
        with pytest.raises(ValueError):
            allocate_fprs([], 0.8, 2, 1)
        with pytest.raises(ValueError):
            allocate_fprs([1], 0.4, 2, 1)


class TestSeries:
    def test_limit(self):
        s = read_cost_series(0.8, 2, 200)
        assert s == pytest.approx(1.78437, abs=1e-5)
        terms = [read_cost_series(0.8, 2, i + 1) - read_cost_series(0.8, 2, i) for i in range(5)]
        assert terms == pytest.approx([1, 0.5, 0.2, 0.064, 0.01638], abs=1e-5)

    def test_one_level(self):
        assert read_cost_series(0.8, 2, 1) == 1.0

    def test_faster_than_geometric(self):
        assert read_cost_series(0.99, 2, 50) < 2.0

    def test_threshold_matches_grid_search(self):
        # the estimate decreases in p_L, so a grid over (0, 1] peaks at p_L = 1
        grid = np.linspace(1e-4, 1.0, 20_000)
        c, k = 0.8, 2.0
        vals = -((1 / k) * np.log(grid / k) + (c / k**2) * np.log(c * grid / k**2)) / math.log(2) ** 2
        assert min_bits_for_constant_lookup(c, k) == pytest.approx(vals.min(), rel=1e-6)

    def test_threshold_vanishes_for_large_k(self):
        assert min_bits_for_constant_lookup(0.8, 1e6) < 1e-4

    def test_peak_over_k(self):
        peak, k = peak_constant_lookup_bits(0.8)
        assert 1.3 < peak < 1.45 and 1.5 < k < 2.2
        # the supremum over every valid c stays below 1.45
        assert peak_constant_lookup_bits(1.0)[0] < 1.45
