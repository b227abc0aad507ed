"""Invariant selection, ordered verification and distance estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .conditions import DecidingCondition, EvalContext, PlanTrace
from .model import StatSnapshot

__all__ = [
    "ALL",
    "StaleTraceError",
    "InvariantSet",
    "Verdict",
    "collect_dcs",
    "select_invariants",
    "verify",
    "estimate_distance",
    "distance_stats",
]

ALL = None  # keep every condition of a block


class StaleTraceError(ValueError):
    """A deciding condition no longer holds under the snapshot used for selection."""


def collect_dcs(trace: PlanTrace) -> dict:
    """Partition trace records by plan block. Records of non-plan DP cells are dropped."""
    if not trace.records:
        return {}
    out = {b: [] for b in range(trace.n_blocks)}
    for r in trace.records:
        if r.block is not None:
            out.setdefault(r.block, []).append(r)
    return out


@dataclass(frozen=True)
class InvariantSet:
    conditions: tuple
    K: int | None
    d: float
    created_from: str = ""
    tree_mode: str = "exact"
    _fast: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_fast", _compile(self.conditions))

    def __len__(self) -> int:
        return len(self.conditions)

    def __iter__(self):
        return iter(self.conditions)

    def blocks(self) -> dict:
        out: dict = {}
        for c in self.conditions:
            out.setdefault(c.block, []).append(c)
        return out

    def dump(self) -> str:
        if not self.conditions:
            return "no invariants\n"
        lines = [f"block {c.block}: {c.describe()} [gap={c.gap:.6g}]" for c in self.conditions]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Verdict:
    intact: bool
    block: int | None = None
    condition: DecidingCondition | None = None

    def __bool__(self) -> bool:
        return self.intact


def _check_k(K):
    if K is not None and (not isinstance(K, int) or K < 1):
        raise ValueError(f"K must be a positive integer or ALL, got {K!r}")


def select_invariants(
    dcs: dict,
    s: StatSnapshot,
    K: int | None = 1,
    d: float = 0.0,
    tree_mode: str = "exact",
    created_from: str = "",
) -> InvariantSet:
    """Keep the ``K`` tightest conditions of every block (all of them when ``K`` is ALL).

    Tightness is the gap ``rhs - lhs`` under ``s``; equal gaps keep trace order.
    """
    _check_k(K)
    if d < 0:
        raise ValueError(f"distance must be nonnegative, got {d}")
    ctx = EvalContext(s, tree_mode)
    chosen = []
    for block in sorted(dcs):
        scored = []
        for pos, c in enumerate(dcs[block]):
            if c.violated(ctx, 0.0):
                raise StaleTraceError(f"condition {c.describe()} of block {block} does not hold")
            lv, rv = c.values(ctx)
            scored.append((rv - lv, pos, c, lv, rv))
        scored.sort(key=lambda t: (t[0], t[1]))
        keep = scored if K is None else scored[:K]
        for _, _, c, lv, rv in keep:
            chosen.append(
                DecidingCondition(c.block, c.lhs, c.rhs, lv, rv, c.strict, c.block_key)
            )
    return InvariantSet(tuple(chosen), K, float(d), created_from, tree_mode)


def _compile(conditions) -> tuple | None:
    """Flatten conditions whose sides are plain rate/selectivity products.

    Returns None when any side needs the general evaluation path.
    """
    out = []
    for c in conditions:
        lt = getattr(c.lhs, "terms", None)
        rt = getattr(c.rhs, "terms", None)
        if lt is None or rt is None:
            return None
        out.append((lt[0], lt[1], rt[0], rt[1], c.strict, c))
    return tuple(out)


def _product(rate: float, sel, pairs) -> float:
    for a, b in pairs:
        rate *= sel[a][b]
    return rate


def verify(inv: InvariantSet, s: StatSnapshot) -> Verdict:
    """Scan conditions in block order and report the first one violated by margin ``inv.d``."""
    d = inv.d
    if inv._fast is not None:
        rates, sel = s.rates, s.sel
        factor = 1.0 + d
        for lj, lp, rj, rp, strict, c in inv._fast:
            lv = _product(rates[lj], sel, lp)
            rv = factor * _product(rates[rj], sel, rp)
            if lv >= rv if strict else lv > rv:
                return Verdict(False, c.block, c)
        return Verdict(True)
    ctx = EvalContext(s, inv.tree_mode)
    for c in inv.conditions:
        if c.violated(ctx, d):
            return Verdict(False, c.block, c)
    return Verdict(True)


def distance_stats(conditions, s: StatSnapshot | None = None, tree_mode: str = "exact") -> tuple:
    """Mean relative difference between condition sides, and the number skipped.

    Values come from ``s`` when given, otherwise from the values recorded at
    planning time. Conditions with a zero-valued side are skipped.
    """
    records = list(conditions.records if isinstance(conditions, PlanTrace) else conditions)
    if not records:
        raise ValueError("cannot estimate a distance from an empty trace")
    ctx = EvalContext(s, tree_mode) if s is not None else None
    total = 0.0
    used = 0
    skipped = 0
    for c in records:
        lv, rv = c.values(ctx) if ctx is not None else (c.lhs_value, c.rhs_value)
        lo = min(lv, rv)
        if lo <= 0:
            skipped += 1
            continue
        total += abs(rv - lv) / lo
        used += 1
    if used == 0:
        raise ValueError("every condition has a zero-valued side")
    return total / used, skipped


def estimate_distance(trace, s: StatSnapshot | None = None, tree_mode: str = "exact") -> float:
    return distance_stats(trace, s, tree_mode)[0]
