"""Benchmark matrix: {planner} x {decision policy} over one pattern and workload."""

from __future__ import annotations

import csv
import gc
import io
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dsl import parse_pattern
from .engine import Engine
from .invariants import ALL, collect_dcs, distance_stats, select_invariants
from .model import Pattern, PatternError, StatSnapshot, pattern_size
from .decision import PolicyError, parse_policy
from .planners import get_planner
from .stats import StatCollector
from .workload import ScriptError, generate, ingest_csv, load_script, preset, script_from_dict

__all__ = ["ConfigError", "BenchConfig", "load_config", "run_benchmark", "write_report", "explain_plan", "BENCH_COLUMNS", "warmup_snapshots"]

BENCH_COLUMNS = (
    "pattern",
    "size",
    "planner",
    "policy",
    "throughput_eps",
    "throughput_std",
    "relative_gain_vs_static",
    "reoptimizations",
    "overhead_frac",
    "matches",
)


class ConfigError(ValueError):
    pass


_KEYS = {
    "pattern", "pattern_file", "workload", "planners", "policies", "check_every", "repetitions",
    "seed", "stats_window_ms", "warmup_ms", "seq_factor", "out", "name", "warm_runs",
}


@dataclass
class BenchConfig:
    pattern: Pattern
    pattern_text: str
    events: list
    planners: tuple = ("greedy",)
    policies: tuple = ("static", "unconditional", "invariant")
    check_every: int = 200
    repetitions: int = 3
    seed: int = 0
    stats_window_ms: int | None = None
    warmup_ms: int | None = None
    seq_factor: float = 1.0
    warm_runs: int = 1
    out: str | None = None
    name: str = ""
    extra: dict = field(default_factory=dict)


def _events_for(workload, base: Path, seed: int):
    """Returns (events, pattern text or None)."""
    if not isinstance(workload, dict):
        raise ConfigError("workload must be a mapping with one of: preset, script, csv")
    try:
        if "preset" in workload:
            opts = {k: v for k, v in workload.items() if k != "preset"}
            opts.setdefault("seed", seed)
            script, text = preset(workload["preset"], **opts)
            return generate(script), text
        if "script" in workload:
            spec = workload["script"]
            script = script_from_dict(spec) if isinstance(spec, dict) else load_script(base / spec)
            return generate(script), None
        if "csv" in workload:
            path = base / workload["csv"]
            if not path.exists():
                raise ConfigError(f"missing event file {path}")
            return list(ingest_csv(path)), None
    except ScriptError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError("workload must name a preset, script or csv")


def load_config(source) -> BenchConfig:
    """Build a config from a YAML path or an already-parsed mapping."""
    base = Path(".")
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"missing config file {path}")
        base = path.parent
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    seed = int(data.get("seed", 0))
    events, preset_text = _events_for(data.get("workload"), base, seed)
    text = data.get("pattern")
    if "pattern_file" in data:
        pf = base / data["pattern_file"]
        if not pf.exists():
            raise ConfigError(f"missing pattern file {pf}")
        text = pf.read_text(encoding="utf-8").strip()
    text = text or preset_text
    if not text:
        raise ConfigError("config needs a pattern (or a preset workload that supplies one)")
    try:
        pattern = parse_pattern(text)
    except PatternError as exc:
        raise ConfigError(f"bad pattern: {exc}") from None
    planners = tuple(data.get("planners", ("greedy",)))
    for p in planners:
        try:
            get_planner(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    policies = tuple(str(x) for x in data.get("policies", ("static", "unconditional", "invariant")))
    for pol in policies:
        try:
            parse_policy(pol)
        except PolicyError as exc:
            raise ConfigError(str(exc)) from None
    check_every = int(data.get("check_every", 200))
    reps = int(data.get("repetitions", 3))
    if check_every < 1 or reps < 1:
        raise ConfigError("check_every and repetitions must be positive")
    return BenchConfig(
        pattern=pattern,
        pattern_text=text,
        events=events,
        planners=planners,
        policies=policies,
        check_every=check_every,
        repetitions=reps,
        seed=seed,
        stats_window_ms=data.get("stats_window_ms"),
        warmup_ms=data.get("warmup_ms"),
        seq_factor=float(data.get("seq_factor", 1.0)),
        warm_runs=int(data.get("warm_runs", 1)),
        out=data.get("out"),
        name=str(data.get("name", "")),
    )


def warmup_snapshots(pattern: Pattern, events: list, warmup_ms: int, stats_window_ms=None, seed: int = 0) -> list:
    """One snapshot per OR branch from the events before ``warmup_ms``."""
    snaps = []
    for b, sub in enumerate(pattern.simple_branches()):
        c = StatCollector(sub, stats_window_ms, seed=seed + b)
        for e in events:
            if e.timestamp >= warmup_ms:
                break
            c.observe(e)
        snaps.append(c.snapshot(warmup_ms))
    return snaps


def _run_cell(cfg: BenchConfig, planner: str, policy: str, initial, warmup: int):
    # The collector adds timing noise that has nothing to do with the policy.
    gc.collect()
    gc.disable()
    try:
        return _engine(cfg, planner, policy, initial, warmup).run(cfg.events)
    finally:
        gc.enable()


def _engine(cfg: BenchConfig, planner: str, policy: str, initial, warmup: int) -> Engine:
    return Engine(
        cfg.pattern,
        planner,
        policy,
        initial=initial,
        check_every=cfg.check_every,
        stats_window_ms=cfg.stats_window_ms,
        seq_factor=cfg.seq_factor,
        seed=cfg.seed,
        warmup_ms=warmup,
    )


def run_benchmark(cfg: BenchConfig, progress=None) -> list:
    """Run every (planner, policy) cell ``repetitions`` times; returns report rows.

    Every cell starts from the plan built on the warm-up prefix of the stream,
    which is also the plan the static baseline keeps for the whole run.
    """
    warmup = cfg.warmup_ms
    if warmup is None:
        warmup = cfg.stats_window_ms if cfg.stats_window_ms is not None else cfg.pattern.window * 10
    initial = warmup_snapshots(cfg.pattern, cfg.events, warmup, cfg.stats_window_ms, cfg.seed)
    rows = []
    size = pattern_size(cfg.pattern)
    for planner in cfg.planners:
        policies = list(cfg.policies)
        if "static" not in policies:
            policies.insert(0, "static")
        results = {}
        for _ in range(cfg.warm_runs):
            _run_cell(cfg, planner, "static", initial, warmup)
        for rep in range(cfg.repetitions):
            # Interleave cells so slow drifts of the machine hit all of them alike.
            for pol in policies:
                m = _run_cell(cfg, planner, pol, initial, warmup)
                results.setdefault(pol, []).append(m)
                if progress:
                    progress(planner, pol, rep, m)
        static_tp = statistics.fmean(m.throughput_eps for m in results["static"])
        for pol in policies:
            ms = results[pol]
            tps = [m.throughput_eps for m in ms]
            mean_tp = statistics.fmean(tps)
            rows.append({
                "pattern": cfg.name or cfg.pattern_text,
                "size": size,
                "planner": planner,
                "policy": pol,
                "throughput_eps": mean_tp,
                "throughput_std": statistics.stdev(tps) if len(tps) > 1 else 0.0,
                "relative_gain_vs_static": mean_tp / static_tp if static_tp > 0 else 0.0,
                "reoptimizations": statistics.fmean(m.reoptimizations for m in ms),
                "overhead_frac": statistics.fmean(m.overhead_frac for m in ms),
                "matches": ms[0].matches,
            })
    return rows


def write_report(rows: list, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in BENCH_COLUMNS})


def explain_plan(pattern_text: str, snapshot_text: str, planner: str = "greedy", K=1, d="0") -> str:
    """Human-readable plan, deciding-condition sets and selected invariants."""
    pattern = parse_pattern(pattern_text)
    out = io.StringIO()
    for b, sub in enumerate(pattern.simple_branches()):
        if pattern.op == "OR":
            out.write(f"branch {b}: {sub.render()}\n")
        snap = StatSnapshot.from_csv(snapshot_text, sub.type_names)
        pl = get_planner(planner)
        plan, trace = pl.plan(sub, snap)
        out.write(f"plan: {plan}\n")
        out.write(f"model cost: {pl.cost(plan, sub, snap):.6g}\n")
        dcs = collect_dcs(trace)
        names = sub.type_names
        blocks = plan.blocks
        for blk in blocks:
            conds = dcs.get(blk.index, [])
            body = ", ".join(c.describe() for c in conds) if conds else "(empty)"
            out.write(f"DCS block {blk.index} [{blk.describe(names)}]: {body}\n")
        if trace.records:
            d_avg, skipped = distance_stats(trace, snap)
            out.write(f"d_avg: {d_avg:.6g}" + (f" ({skipped} conditions skipped)" if skipped else "") + "\n")
        else:
            d_avg = 0.0
            out.write("d_avg: n/a\n")
        d_val = d_avg if str(d) == "auto" else float(d)
        inv = select_invariants(dcs, snap, K, d_val, created_from=str(plan))
        k_txt = "ALL" if K is ALL else str(K)
        out.write(f"invariants (K={k_txt}, d={d_val:.6g}):\n")
        out.write(inv.dump())
    return out.getvalue()
