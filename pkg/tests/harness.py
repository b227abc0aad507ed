"""Seeded (pattern, snapshot, snapshot) cases for the no-false-positive and exactness suites."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from acep import StatSnapshot
from acep.decision import InvariantBased
from acep.invariants import ALL
from acep.planners import get_planner

from oracle import random_pattern


def random_snapshot(rng: random.Random, pattern, ties: float = 0.2) -> StatSnapshot:
    n = len(pattern.positions)
    rates = [round(rng.uniform(0.5, 100.0), 2) for _ in range(n)]
    for i in range(1, n):
        if rng.random() < ties:
            rates[i] = rates[rng.randrange(i)]
    sel = [[1.0] * n for _ in range(n)]
    for a, b in pattern.pair_predicates():
        sel[a][b] = sel[b][a] = round(rng.uniform(0.02, 1.0), 3)
    return StatSnapshot(tuple(rates), tuple(map(tuple, sel)))


def perturb(rng: random.Random, s: StatSnapshot, pattern, p: float = 0.4, spread: float = 1.0) -> StatSnapshot:
    rates = list(s.rates)
    for i in range(len(rates)):
        if rng.random() < p:
            rates[i] = rates[i] * math.exp(rng.uniform(-spread, spread))
    sel = [list(row) for row in s.sel]
    for a, b in pattern.pair_predicates():
        if rng.random() < p:
            v = min(1.0, sel[a][b] * math.exp(rng.uniform(-spread, spread)))
            sel[a][b] = sel[b][a] = v
    return StatSnapshot(tuple(rates), tuple(map(tuple, sel)))


@dataclass
class Case:
    pattern: object
    s0: StatSnapshot
    s1: StatSnapshot


def cases(seed: int, count: int, n_min: int = 3, n_max: int = 8):
    rng = random.Random(seed)
    for _ in range(count):
        pattern = random_pattern(rng, n_min, n_max, negation=False, kleene=False)
        s0 = random_snapshot(rng, pattern)
        yield Case(pattern, s0, perturb(rng, s0, pattern))


@dataclass
class Tally:
    checked: int = 0
    fired: int = 0
    changed: int = 0
    false_positives: int = 0
    misses: int = 0


def run_suite(planner_name: str, K, d: float = 0.0, seed: int = 0, count: int = 1000, n_max: int = 8) -> Tally:
    """Plan under ``s0``, verify under ``s1``, re-plan under ``s1`` and compare."""
    planner = get_planner(planner_name)
    t = Tally()
    for c in cases(seed, count, n_max=n_max):
        plan0, trace = planner.plan(c.pattern, c.s0)
        policy = InvariantBased(K, d)
        policy.on_deploy(plan0, trace, c.s0)
        fired = policy.decide(c.s1)
        plan1, _ = planner.plan(c.pattern, c.s1)
        changed = plan1 != plan0
        t.checked += 1
        t.fired += fired
        t.changed += changed
        if fired and not changed:
            t.false_positives += 1
        if changed and not fired:
            t.misses += 1
    return t


__all__ = ["ALL", "Case", "Tally", "cases", "perturb", "random_snapshot", "run_suite"]
