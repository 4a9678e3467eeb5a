"""Closed-form cost expressions for five merge policies.

All big-O constants are fixed at 1 and lower-order terms are dropped, so the
numbers are good for shapes and orderings, not absolute I/O counts. Level
counts are clamped below at one level.

Two forms are available:

``leading``
    The leading-order expressions as usually quoted. Garnering uses
    ``sqrt(log_{1/c}(N/(B k)))`` levels, which diverges as ``c -> 1``.
``exact``
    Level counts solved from the capacity equations (quadratic in ``L`` for
    Garnering) and write cost summed level by level. This form is continuous
    in ``c`` and reduces to leveling at ``c = 1``.

Write costs are per entry by default (how many times an entry is rewritten);
``write_normalization="per-io"`` divides the leveling, tiering and
lazy-leveling rows by ``B`` as in their I/O-per-entry form.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Optional, Sequence

from .filters import fpr_model
from .policy import classical_depth, exact_garnering_depth

POLICIES = ("qlsm-bush", "tiering", "lazy-leveling", "leveling", "garnering")
CSV_HEADER = "# leading-order costs with constants 1; orderings only, not absolute I/O"


@dataclass(frozen=True)
class PolicyCosts:
    policy: str
    param: str
    write_cost: float
    range_cost: float
    point_nofilter: float
    point_filter: float
    space: float


def _log(x: float, base: float) -> float:
    return math.log(x) / math.log(base)


def _levels_classical(n_over_b: float, T: float, form: str) -> float:
    if form == "exact":
        return max(1.0, classical_depth(n_over_b, 1.0, T))
    return max(1.0, _log(n_over_b, T))


def _garnering_levels(n_over_b: float, c: float, k: float, form: str) -> float:
    if form == "exact":
        return max(1.0, exact_garnering_depth(n_over_b, 1.0, c, k))
    x = n_over_b / k
    if x <= 1.0:
        return 1.0
    return max(1.0, math.sqrt(_log(x, 1 / c)))


def evaluate(policy: str, N: float, B: float, params: dict, bits_per_entry: float = 10.0,
             form: str = "leading", write_normalization: str = "per-entry") -> PolicyCosts:
    """Costs of ``policy`` storing ``N`` bytes with buffer ``B``.

    ``params`` holds ``T`` for the classical policies and ``c``/``k`` for
    Garnering. Garnering with ``c == 1`` is evaluated as leveling with T = k.
    """
    if N < B or B <= 0:
        raise ValueError("need N >= B > 0")
    if form not in ("leading", "exact"):
        raise ValueError(f"unknown form {form!r}")
    if write_normalization not in ("per-entry", "per-io"):
        raise ValueError(f"unknown write normalization {write_normalization!r}")
    ratio = N / B
    p = fpr_model(bits_per_entry)
    per_io = write_normalization == "per-io"

    if policy == "garnering":
        c, k = float(params["c"]), float(params["k"])
        if not 0.5 < c <= 1.0 or k <= 1.0:
            raise ValueError("need c in (0.5, 1] and k > 1")
        if c == 1.0:
            out = evaluate("leveling", N, B, {"T": k}, bits_per_entry, form, write_normalization)
            return PolicyCosts("garnering", f"c={c:g};k={k:g}", *astuple(out)[2:])
        L = _garnering_levels(ratio, c, k, form)
        if form == "exact":
            # sum over levels of the ratio k / c^j, j = 0..L-1
            write = k * (c**-L - 1) / (1 / c - 1)
        else:
            write = k / c**L
        return PolicyCosts(policy, f"c={c:g};k={k:g}", write, L, L, p, (k + 1) / k)

    T = float(params["T"])
    if T <= 1.0:
        raise ValueError("T must exceed 1")
    L = _levels_classical(ratio, T, form)
    if policy == "leveling":
        write = T * L
        out = (write / B if per_io else write, L, L, p, (T + 1) / T)
    elif policy == "tiering":
        write = L
        out = (write / B if per_io else write, T * L, T * L, T * p, T)
    elif policy == "lazy-leveling":
        write = T + (L / B if per_io else L)
        out = (write, 1 + T * L, 1 + T * L, p, (T + 1) / T)
    elif policy == "qlsm-bush":
        write = 1 + math.log2(max(L, 1.0))
        runs = math.sqrt(T * ratio)
        out = (write, runs, runs, T * p, 1.0)
    else:
        raise ValueError(f"unknown policy {policy!r}")
    return PolicyCosts(policy, f"T={T:g}", *out)


def analytic_write_amp(policy: str, N: float, B: float, params: dict, form: str = "leading") -> float:
    return evaluate(policy, N, B, params, form=form).write_cost


def tradeoff_curve(policy: str, sweep: Sequence, N: float, B: float, bits_per_entry: float = 10.0,
                   form: str = "leading") -> list[PolicyCosts]:
    """One cost point per parameter value.

    ``sweep`` holds T values for the classical policies and ``(c, k)`` pairs
    for Garnering.
    """
    if not sweep:
        raise ValueError("empty sweep")
    points = []
    for item in sweep:
        params = {"c": item[0], "k": item[1]} if policy == "garnering" else {"T": item}
        points.append(evaluate(policy, N, B, params, bits_per_entry, form))
    return points


def dominates(front: Iterable[PolicyCosts], other: Iterable[PolicyCosts]) -> bool:
    """True if every point of ``other`` is beaten on range cost at no higher write cost."""
    front = list(front)
    return all(any(f.write_cost <= o.write_cost and f.range_cost < o.range_cost for f in front) for o in other)


def to_csv(points: Iterable[PolicyCosts], header_comment: bool = True) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(PolicyCosts)])
    for p in points:
        w.writerow([p.policy, p.param] + [f"{v:.6g}" for v in astuple(p)[2:]])
    return buf.getvalue()


def default_sweep(policy: str) -> list:
    if policy == "garnering":
        return [(c, k) for c in (0.6, 0.7, 0.8, 0.9, 0.95) for k in (2, 3, 4, 6, 8)]
    return [2, 3, 4, 6, 8, 10, 16]


def main(argv: Optional[Sequence[str]] = None) -> int:
    import argparse

    ap = argparse.ArgumentParser(description="Print merge-policy cost trade-off curves as CSV.")
    ap.add_argument("--n-over-b", type=float, default=2.0**20)
    ap.add_argument("--bits-per-entry", type=float, default=10.0)
    ap.add_argument("--form", choices=("leading", "exact"), default="leading")
    ap.add_argument("--policies", default=",".join(POLICIES))
    args = ap.parse_args(argv)
    points = []
    for policy in args.policies.split(","):
        points.extend(tradeoff_curve(policy, default_sweep(policy), args.n_over_b, 1.0,
                                     args.bits_per_entry, args.form))
    print(to_csv(points), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
