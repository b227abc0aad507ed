"""The detection-adaptation loop and plan migration.

Every ``check_every`` events the engine takes a statistics snapshot, asks the
decision policy whether to re-plan, and deploys the planner's new plan when
it differs from the current one and is cheaper under the snapshot. On
deployment the old plan keeps running on matches that include at least one
event accepted before the switch, until the pattern window has elapsed.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .decision import DecisionPolicy, Static, parse_policy
from .evaluation import Finisher, History, Match, make_evaluator
from .model import Event, Pattern, StatSnapshot
from .planners import Planner, get_planner
from .stats import StatCollector

__all__ = ["RunMetrics", "Branch", "Engine", "process_event", "run_loop", "migrate", "write_matches", "METRICS_COLUMNS"]

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("events", "matches", "reoptimizations", "throughput_eps", "overhead_frac")


@dataclass
class RunMetrics:
    events: int = 0
    matches: int = 0
    reoptimizations: int = 0
    decisions: int = 0
    planner_calls: int = 0
    time_decision: float = 0.0
    time_planner: float = 0.0
    wall_time: float = 0.0
    rejected: int = 0
    forced_discards: int = 0
    peak_partial_matches: int = 0

    @property
    def throughput_eps(self) -> float:
        return self.events / self.wall_time if self.wall_time > 0 else 0.0

    @property
    def overhead_frac(self) -> float:
        if self.wall_time <= 0:
            return 0.0
        return (self.time_decision + self.time_planner) / self.wall_time

    def row(self) -> dict:
        return {
            "events": self.events,
            "matches": self.matches,
            "reoptimizations": self.reoptimizations,
            "throughput_eps": self.throughput_eps,
            "overhead_frac": self.overhead_frac,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerow(self.row())
        return buf.getvalue()


class Branch:
    """Evaluation state for one SEQ/AND pattern (one OR disjunct)."""

    def __init__(
        self,
        pattern: Pattern,
        planner: Planner,
        policy: DecisionPolicy,
        initial: StatSnapshot,
        stats: StatCollector | None,
    ):
        self.pattern = pattern
        self.planner = planner
        self.policy = policy
        self.stats = stats
        self.history = History(pattern)
        self.finisher = Finisher(pattern, self.history)
        self.pos_of = {pos.type_name: i for i, pos in enumerate(pattern.positions)}
        self.negated = frozenset(pattern.negated)
        self.plan, trace = planner.plan(pattern, initial)
        policy.on_deploy(self.plan, trace, initial)
        self.current = make_evaluator(pattern, self.plan, self.history, self.finisher, 0)
        self.draining = None
        self.drain_deadline = None
        self.deployed = [(0, self.plan)]

    def process(self, seq: int, e: Event, out: list):
        now = e.timestamp
        if self.draining is not None and now > self.drain_deadline:
            self.draining = None
        fin = self.finisher
        if fin.pending:
            fin.release(now, out)
        pos = self.pos_of[e.type]
        ev = self.history.add(pos, seq, e)
        if pos in self.negated:
            fin.negated_arrival(pos, ev)
        elif ev.ok:
            self.current.process(ev, pos, out)
            if self.draining is not None:
                self.draining.process(ev, pos, out)
        if self.stats is not None:
            self.stats.observe(e)

    def migrate(self, new_plan, next_seq: int, t0: int) -> bool:
        """Start running ``new_plan``; returns True if an older drain had to be dropped."""
        forced = self.draining is not None
        if forced:
            log.info("discarding draining plan %s before its deadline", self.draining.plan)
        old = self.current
        old.retire = next_seq
        self.draining = old
        self.drain_deadline = t0 + self.pattern.window
        self.current = make_evaluator(self.pattern, new_plan, self.history, self.finisher, next_seq)
        self.plan = new_plan
        self.deployed.append((next_seq, new_plan))
        return forced

    def check(self, metrics: RunMetrics, now: int, next_seq: int, snapshot: StatSnapshot | None = None):
        snap = snapshot if snapshot is not None else self.stats.snapshot(now)
        t0 = time.perf_counter()
        fire = self.policy.decide(snap)
        t1 = time.perf_counter()
        metrics.time_decision += t1 - t0
        metrics.decisions += 1
        if not fire:
            return
        new_plan, trace = self.planner.plan(self.pattern, snap)
        metrics.planner_calls += 1
        if new_plan != self.plan:
            cost = self.planner.cost
            if cost(new_plan, self.pattern, snap) < cost(self.plan, self.pattern, snap):
                if self.migrate(new_plan, next_seq, now):
                    metrics.forced_discards += 1
                self.policy.on_deploy(new_plan, trace, snap)
                metrics.reoptimizations += 1
        metrics.time_planner += time.perf_counter() - t1

    def partial_matches(self, now: int) -> int:
        n = self.current.live_partial_matches(now)
        if self.draining is not None:
            n += self.draining.live_partial_matches(now)
        return n


class Engine:
    """Adaptive evaluation of one pattern (EngineState).

    ``policy`` may be a policy object or a config string such as
    ``"invariant:K=1:d=auto"``; OR patterns get an independent copy per branch.
    ``initial`` is the snapshot (or per-branch list of snapshots) the first
    plan is built from; by default every rate and selectivity is 1. No
    decision is taken before ``warmup_ms``, nor for a branch whose previous
    plan is still draining unless ``defer_during_drain`` is off, since an
    overlapping migration would drop the older plan's partial matches.
    """

    def __init__(
        self,
        pattern: Pattern,
        planner: str | Planner = "greedy",
        policy: str | DecisionPolicy = "static",
        initial=None,
        check_every: int = 1000,
        stats_window_ms: int | None = None,
        seq_factor: float = 1.0,
        seed: int = 0,
        collect_stats: bool = True,
        stats_options: dict | None = None,
        warmup_ms: int = 0,
        defer_during_drain: bool = True,
    ):
        if check_every is not None and check_every < 1:
            raise ValueError("check_every must be at least 1")
        self.pattern = pattern
        self.planner = get_planner(planner, seq_factor)
        self.check_every = check_every
        self.warmup_ms = warmup_ms
        self.defer_during_drain = defer_during_drain
        branches = pattern.simple_branches()
        if initial is None or isinstance(initial, StatSnapshot):
            initial = [initial] * len(branches)
        if len(initial) != len(branches):
            raise ValueError("need one initial snapshot per OR branch")
        self.branches = []
        for b, (sub, snap) in enumerate(zip(branches, initial)):
            pol = parse_policy(policy) if isinstance(policy, str) else (copy.deepcopy(policy) if b else policy)
            if snap is None:
                n = len(sub.positions)
                snap = StatSnapshot.from_rates([1.0] * n)
            collector = None
            if collect_stats:
                collector = StatCollector(sub, stats_window_ms, seed=seed + b, **(stats_options or {}))
            self.branches.append(Branch(sub, self.planner, pol, snap, collector))
        self._by_type: dict = {}
        for br in self.branches:
            for name in br.pos_of:
                self._by_type.setdefault(name, []).append(br)
        self.metrics = RunMetrics()
        self.seq = 0
        self.last_ts = None
        self._since_check = 0

    @property
    def plans(self) -> list:
        return [br.plan for br in self.branches]

    def process_event(self, e: Event) -> list:
        if self.last_ts is not None and e.timestamp < self.last_ts:
            self.metrics.rejected += 1
            log.warning("rejected out-of-order event at %s (last %s)", e.timestamp, self.last_ts)
            return []
        self.last_ts = e.timestamp
        out: list = []
        seq = self.seq
        for br in self._by_type.get(e.type, ()):
            br.process(seq, e, out)
        self.seq = seq + 1
        m = self.metrics
        m.events += 1
        m.matches += len(out)
        if self.check_every:
            self._since_check += 1
            if self._since_check >= self.check_every:
                self._since_check = 0
                self.check()
        return out

    def check(self):
        if self.last_ts is None or self.last_ts < self.warmup_ms:
            return
        for br in self.branches:
            if br.stats is None and not isinstance(br.policy, Static):
                raise RuntimeError("adaptive policies need statistics collection")
            if br.stats is None:
                continue
            if self.defer_during_drain and br.draining is not None and self.last_ts <= br.drain_deadline:
                continue
            br.check(self.metrics, self.last_ts, self.seq)

    def migrate(self, new_plan, t0: int | None = None, branch: int = 0):
        t0 = self.last_ts if t0 is None else t0
        if self.branches[branch].migrate(new_plan, self.seq, t0 if t0 is not None else 0):
            self.metrics.forced_discards += 1

    def flush(self) -> list:
        out: list = []
        for br in self.branches:
            br.finisher.flush(out)
        self.metrics.matches += len(out)
        return out

    def partial_matches(self) -> int:
        if self.last_ts is None:
            return 0
        return sum(br.partial_matches(self.last_ts) for br in self.branches)

    def run(self, stream: Iterable[Event], sink: Callable | None = None, track_memory: int = 0) -> RunMetrics:
        """Process a whole stream; ``sink`` receives each batch of matches."""
        m = self.metrics
        start = time.perf_counter()
        try:
            for e in stream:
                out = self.process_event(e)
                if sink is not None and out:
                    sink(out)
                if track_memory and m.events % track_memory == 0:
                    m.peak_partial_matches = max(m.peak_partial_matches, self.partial_matches())
        finally:
            out = self.flush()
            if sink is not None and out:
                sink(out)
            m.wall_time += time.perf_counter() - start
        return m


def process_event(st: Engine, e: Event) -> list:
    return st.process_event(e)


def run_loop(st: Engine, stream: Iterable[Event], planner=None, check_every: int | None = None) -> RunMetrics:
    if planner is not None:
        st.planner = get_planner(planner)
        for br in st.branches:
            br.planner = st.planner
    if check_every is not None:
        st.check_every = check_every
    return st.run(stream)


def migrate(st: Engine, new_plan, t0: int) -> Engine:
    st.migrate(new_plan, t0)
    return st


def write_matches(matches: Iterable[Match], fh) -> int:
    """Write matches as ``detect_ts,pos1_event_ts,...`` rows; returns the row count."""
    rows = 0
    ms = list(matches)
    width = max((len(m.timestamps()) for m in ms), default=0)
    fh.write(",".join(["detect_ts"] + [f"pos{i + 1}_event_ts" for i in range(width)]) + "\n")
    for m in ms:
        fh.write(m.csv_row() + "\n")
        rows += 1
    return rows
