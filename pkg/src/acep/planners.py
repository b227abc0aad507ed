"""Plan generation algorithms behind a common interface."""

from __future__ import annotations

from dataclasses import dataclass

from .greedy import build_order_plan, order_cost
from .model import Pattern, StatSnapshot
from .tree import build_tree_plan, tree_plan_cost

__all__ = ["Planner", "GreedyPlanner", "ZStreamPlanner", "get_planner", "PLANNERS"]


class Planner:
    name = "planner"

    def plan(self, p: Pattern, s: StatSnapshot):
        raise NotImplementedError

    def cost(self, plan, p: Pattern, s: StatSnapshot) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class GreedyPlanner(Planner):
    name = "greedy"

    def plan(self, p, s):
        return build_order_plan(p, s)

    def cost(self, plan, p, s):
        return order_cost(plan, s)


@dataclass(frozen=True)
class ZStreamPlanner(Planner):
    seq_factor: float = 1.0
    name = "zstream"

    def plan(self, p, s):
        return build_tree_plan(p, s, self.seq_factor)

    def cost(self, plan, p, s):
        return tree_plan_cost(plan, p, s, self.seq_factor)


PLANNERS = ("greedy", "zstream")


def get_planner(name, seq_factor: float = 1.0) -> Planner:
    if isinstance(name, Planner):
        return name
    key = str(name).lower()
    if key in ("greedy", "order"):
        return GreedyPlanner()
    if key in ("zstream", "tree", "dp"):
        return ZStreamPlanner(seq_factor)
    raise ValueError(f"unknown planner {name!r}; expected one of {', '.join(PLANNERS)}")
