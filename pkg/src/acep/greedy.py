"""Greedy generation of order-based plans, instrumented with deciding conditions."""

from __future__ import annotations

from dataclasses import dataclass

from .conditions import DecidingCondition, EvalContext, PlanTrace
from .model import OrderPlan, Pattern, StatSnapshot

__all__ = ["GreedyExpr", "eval_greedy_expr", "build_order_plan", "order_cost", "PlanningError"]


class PlanningError(ValueError):
    pass


def _step_value(rates, sel, j: int, prefix) -> float:
    v = rates[j] * sel[j][j]
    for k in prefix:
        v *= sel[k][j] if k < j else sel[j][k]
    return v


@dataclass(frozen=True)
class GreedyExpr:
    """Step expression ``r_j * sel_jj * prod(sel_kj for k in prefix)``."""

    j: int
    prefix: tuple
    names: tuple = ()
    declared: frozenset = frozenset()

    def value(self, ctx) -> float:
        s = ctx.snapshot if isinstance(ctx, EvalContext) else ctx
        return _step_value(s.rates, s.sel, self.j, self.prefix)

    def bounds(self, ctx) -> tuple:
        v = self.value(ctx)
        return v, v

    @property
    def terms(self) -> tuple:
        """``(j, ((a, b), ...))``: the rate index and the ``sel[a][b]`` factors, ``a <= b``."""
        j = self.j
        return j, ((j, j),) + tuple((k, j) if k < j else (j, k) for k in self.prefix)

    def describe(self) -> str:
        nm = self.names[self.j] if self.names else str(self.j)
        parts = [f"rate_{nm}"]
        if (self.j, self.j) in self.declared:
            parts.append(f"sel_{nm},{nm}")
        for k in self.prefix:
            if (min(k, self.j), max(k, self.j)) in self.declared:
                a, b = sorted((k, self.j))
                na = self.names[a] if self.names else str(a)
                nb = self.names[b] if self.names else str(b)
                parts.append(f"sel_{na},{nb}")
        return "*".join(parts)


def eval_greedy_expr(x: GreedyExpr, s: StatSnapshot) -> float:
    return x.value(s)


def _check_dims(p: Pattern, s: StatSnapshot):
    if s.n != len(p.positions):
        raise PlanningError(f"snapshot has {s.n} types but pattern has {len(p.positions)}")


def build_order_plan(p: Pattern, s: StatSnapshot):
    """Return ``(OrderPlan, PlanTrace)``.

    At each step the remaining type minimizing the step expression wins, ties
    going to the lowest type id. Every rejected candidate yields one deciding
    condition for the step's block, closest competitor first.
    """
    _check_dims(p, s)
    names = p.type_names
    declared = frozenset(p.pair_predicates())
    remaining = list(p.plannable)
    prefix: list = []
    records = []
    rates, sel = s.rates, s.sel
    step = 0
    while remaining:
        pre = tuple(prefix)
        vals = {j: _step_value(rates, sel, j, pre) for j in remaining}
        winner = min(remaining, key=lambda j: (vals[j], j))
        w_expr = GreedyExpr(winner, pre, names, declared)
        losers = sorted((j for j in remaining if j != winner), key=lambda j: (vals[j], j))
        for j in losers:
            records.append(
                DecidingCondition(
                    block=step,
                    lhs=w_expr,
                    rhs=GreedyExpr(j, pre, names, declared),
                    lhs_value=vals[winner],
                    rhs_value=vals[j],
                    strict=winner > j,
                    block_key=(step, winner),
                )
            )
        prefix.append(winner)
        remaining.remove(winner)
        step += 1
    plan = OrderPlan(tuple(prefix), names, p.negated)
    return plan, PlanTrace(tuple(records), len(prefix))


def order_cost(plan: OrderPlan, s: StatSnapshot) -> float:
    """Expected partial-match volume: sum over prefixes of rate and selectivity products."""
    total = 0.0
    acc = 1.0
    seen: list = []
    for j in plan.order:
        acc *= _step_value(s.rates, s.sel, j, seen)
        total += acc
        seen.append(j)
    return total
