"""Adaptive complex event processing with invariant-based reoptimization."""

from .decision import ConstantThreshold, InvariantBased, Static, Unconditional, decide, parse_policy
from .dsl import PatternSyntaxError, parse_pattern, render_pattern
from .engine import Engine, RunMetrics, migrate, process_event, run_loop
from .evaluation import Match
from .greedy import build_order_plan, eval_greedy_expr, order_cost
from .invariants import ALL, InvariantSet, collect_dcs, estimate_distance, select_invariants, verify
from .model import Event, EventType, OrderPlan, Pattern, PatternError, StatSnapshot, TreePlan, pattern_size
from .stats import StatCollector
from .tree import build_tree_plan, cardinality, cost

__version__ = "0.1.0"

__all__ = [
    "ALL",
    "ConstantThreshold",
    "Engine",
    "Event",
    "EventType",
    "InvariantBased",
    "InvariantSet",
    "Match",
    "OrderPlan",
    "Pattern",
    "PatternError",
    "PatternSyntaxError",
    "RunMetrics",
    "StatCollector",
    "StatSnapshot",
    "Static",
    "TreePlan",
    "Unconditional",
    "build_order_plan",
    "build_tree_plan",
    "cardinality",
    "collect_dcs",
    "cost",
    "decide",
    "estimate_distance",
    "eval_greedy_expr",
    "migrate",
    "order_cost",
    "parse_pattern",
    "parse_policy",
    "pattern_size",
    "process_event",
    "render_pattern",
    "run_loop",
    "select_invariants",
    "verify",
]
