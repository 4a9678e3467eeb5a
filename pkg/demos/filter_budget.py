"""Spending a fixed filter budget: the same bits per entry everywhere, or skewed toward small levels.

Run: python3 demos/filter_budget.py
"""
from lsmkv import MiB, Garnering, PolicyConfig
from lsmkv.filters import allocate_fprs, peak_constant_lookup_bits, uniform_plan
from lsmkv.policy import level_capacity

c, k, L = 0.8, 2.0, 5
config = PolicyConfig(memtable_bytes=4 * MiB, policy=Garnering(c=c, k=k))
entries = [level_capacity(i, L, config) / 124 for i in range(1, L + 1)]

print(f"levels hold {', '.join(f'{n / 1e6:.2f}M' for n in entries)} entries")
print(f"{'bits/entry':>10}  {'uniform probes':>14}  {'optimized probes':>16}")
for bits in (1, 2, 4, 6, 10):
    uni = uniform_plan(L, bits).target_read_cost
    opt = allocate_fprs(entries, c, k, bits).target_read_cost
    print(f"{bits:>10}  {uni:>14.4f}  {opt:>16.4f}")

plan = allocate_fprs(entries, c, k, 4)
print("\nat 4 bits/entry the optimized rates are", ", ".join(f"{p:.4f}" for p in plan.per_level_fpr))
bits, at_k = peak_constant_lookup_bits(c)
print(f"the two-term estimate of bits/entry for O(1) lookups peaks at {bits:.3f} for c={c} (k={at_k:.2f})")
