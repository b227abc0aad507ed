"""Deciding conditions recorded while a planner runs, and the trace that holds them.

A deciding condition states that the expression of the winning candidate was
below that of a rejected one. Expressions are re-evaluable against any
snapshot through an :class:`EvalContext`, which also carries per-snapshot
caches shared by all conditions checked in one pass.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Protocol

from .model import StatSnapshot

__all__ = ["EvalContext", "Expr", "DecidingCondition", "PlanTrace"]

# Relative slack for the cheap interval checks; anything closer is decided exactly.
_EPS = 1e-9


class Expr(Protocol):
    def value(self, ctx: "EvalContext") -> float: ...

    def bounds(self, ctx: "EvalContext") -> tuple: ...

    def describe(self) -> str: ...


@dataclass
class EvalContext:
    """One snapshot plus caches for a single evaluation pass.

    ``tree_mode`` selects how tree-cost expressions treat child subtrees:
    ``"exact"`` re-derives their optimal cost under the snapshot, ``"frozen"``
    uses the constants captured when the plan was built.
    """

    snapshot: StatSnapshot
    tree_mode: str = "exact"
    cache: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecidingCondition:
    """``lhs < rhs`` as checked by the planner.

    ``strict`` is False when the winner also wins ties (lower tie-break key),
    so the condition only fails once ``lhs`` exceeds ``rhs``.
    """

    block: int | None
    lhs: Expr
    rhs: Expr
    lhs_value: float
    rhs_value: float
    strict: bool = True
    block_key: tuple = ()

    @property
    def gap(self) -> float:
        return self.rhs_value - self.lhs_value

    def holds(self, ctx: EvalContext, d: float = 0.0) -> bool:
        return not self.violated(ctx, d)

    def violated(self, ctx: EvalContext, d: float = 0.0) -> bool:
        """True iff the inequality fails by relative margin ``d``."""
        factor = 1.0 + d
        l_lo, l_hi = self.lhs.bounds(ctx)
        r_lo, r_hi = self.rhs.bounds(ctx)
        if l_hi < factor * r_lo * (1.0 - _EPS):
            return False
        if l_lo * (1.0 - _EPS) > factor * r_hi:
            return True
        lv = l_lo if l_lo == l_hi else self.lhs.value(ctx)
        rv = r_lo if r_lo == r_hi else self.rhs.value(ctx)
        if self.strict:
            return lv >= factor * rv
        return lv > factor * rv

    def values(self, ctx: EvalContext) -> tuple:
        return self.lhs.value(ctx), self.rhs.value(ctx)

    def describe(self) -> str:
        return f"{self.lhs.describe()} < {self.rhs.describe()}"


@dataclass(frozen=True)
class PlanTrace:
    """All deciding conditions of one planner run, in the order they were checked."""

    records: tuple
    n_blocks: int

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "winner", "loser", "lhs", "rhs"])
        for r in self.records:
            w.writerow(["" if r.block is None else r.block, r.lhs.describe(), r.rhs.describe(), repr(r.lhs_value), repr(r.rhs_value)])
        return buf.getvalue()
