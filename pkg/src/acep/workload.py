"""Synthetic event streams with scripted drift, and event CSV I/O.

Arrivals of each type follow a non-homogeneous Poisson process (sampled by
thinning). Every scheduled predicate owns one attribute on each side, drawn
so that a random pair passes with the scheduled probability:

* ``=``: when ``1/s`` is a whole number ``m`` both sides draw a key
  uniformly from ``m`` values; otherwise both take a shared hot key with
  probability ``sqrt(s)`` and an effectively unique value the rest of the time;
* ``<`` / ``>``: the left side is U(0, 1) and the right side U(c, c + 1)
  with ``c`` chosen so that ``P(left < right) = s``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import yaml

from .model import Event

__all__ = [
    "Schedule",
    "PredicateSpec",
    "DriftScript",
    "generate",
    "ingest_csv",
    "parse_event_line",
    "format_event",
    "write_csv",
    "load_script",
    "script_from_dict",
    "preset",
    "PRESETS",
    "IngestError",
    "ScriptError",
]


class IngestError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Piecewise schedule of ``(start_ms, value)`` points, held constant or ramped linearly."""

    points: tuple
    mode: str = "step"

    def __post_init__(self):
        pts = tuple((int(t), float(v)) for t, v in self.points)
        if not pts:
            raise ScriptError("schedule needs at least one point")
        if any(b[0] < a[0] for a, b in zip(pts, pts[1:])):
            raise ScriptError("schedule points must be time-sorted")
        if self.mode not in ("step", "ramp"):
            raise ScriptError(f"unknown schedule mode {self.mode!r}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def constant(cls, v: float) -> "Schedule":
        return cls(((0, v),))

    def at(self, t):
        """Value at time(s) ``t`` (scalar or numpy array)."""
        ts = np.array([p[0] for p in self.points], dtype=float)
        vs = np.array([p[1] for p in self.points], dtype=float)
        t_arr = np.asarray(t, dtype=float)
        if self.mode == "ramp" and len(ts) > 1:
            out = np.interp(t_arr, ts, vs)
        else:
            idx = np.searchsorted(ts, t_arr, side="right") - 1
            out = vs[np.clip(idx, 0, len(vs) - 1)]
        return out if out.ndim else float(out)

    @property
    def peak(self) -> float:
        return max(v for _, v in self.points)

    @property
    def low(self) -> float:
        return min(v for _, v in self.points)


@dataclass(frozen=True)
class PredicateSpec:
    left: tuple  # (type name, attribute)
    op: str
    right: tuple
    sel: Schedule

    def __post_init__(self):
        if self.op not in ("=", "<", ">"):
            raise ScriptError(f"generated predicates support =, < and >, not {self.op!r}")
        if self.left[0] == self.right[0]:
            raise ScriptError("generated predicates must relate two different types")
        if not 0.0 <= self.sel.low <= self.sel.peak <= 1.0:
            raise ScriptError("selectivities must lie in [0, 1]")


@dataclass(frozen=True)
class DriftScript:
    rates: dict  # type name -> Schedule (events/s)
    duration_ms: int
    predicates: tuple = ()
    seed: int = 0
    noise_attrs: tuple = ("v",)

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ScriptError("duration must be nonnegative")
        for name, sch in self.rates.items():
            if sch.low < 0:
                raise ScriptError(f"negative rate for {name}")
        owners = set()
        for pr in self.predicates:
            for side in (pr.left, pr.right):
                if side[0] not in self.rates:
                    raise ScriptError(f"predicate references unknown type {side[0]!r}")
                if side in owners:
                    raise ScriptError(f"attribute {side[0]}.{side[1]} used by two predicates")
                owners.add(side)

    @property
    def types(self) -> tuple:
        return tuple(self.rates)


def _shift_for(s):
    """Offset c with P(U1 < c + U2) = s for independent uniforms."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return np.where(s <= 0.5, np.sqrt(2.0 * s) - 1.0, 1.0 - np.sqrt(2.0 * (1.0 - s)))


def _arrivals(rng: np.random.Generator, sch: Schedule, duration_ms: int) -> np.ndarray:
    peak = sch.peak
    if peak <= 0 or duration_ms <= 0:
        return np.zeros(0)
    dur_s = duration_ms / 1000.0
    expected = peak * dur_s
    out = []
    t0 = 0.0
    while True:
        k = int(expected + 6 * math.sqrt(expected) + 16)
        gaps = rng.exponential(1.0 / peak, size=k)
        ts = t0 + np.cumsum(gaps)
        out.append(ts[ts < dur_s])
        if ts[-1] >= dur_s:
            break
        t0 = ts[-1]
    ts = np.concatenate(out) * 1000.0
    keep = rng.random(len(ts)) * peak < sch.at(ts)
    return ts[keep]


def generate(script: DriftScript) -> list:
    """Materialize the scripted stream, sorted by timestamp (ties by type order)."""
    root = np.random.SeedSequence(script.seed)
    children = root.spawn(len(script.rates) + 1)
    attr_rng = np.random.default_rng(children[-1])
    per_type = {}
    for (name, sch), ss in zip(script.rates.items(), children):
        ts = np.floor(_arrivals(np.random.default_rng(ss), sch, script.duration_ms)).astype(np.int64)
        cols = {}
        for a in script.noise_attrs:
            cols[a] = attr_rng.random(len(ts))
        per_type[name] = (ts, cols)
    for pr in script.predicates:
        (lt, la), (rt, ra) = pr.left, pr.right
        l_ts, l_cols = per_type[lt]
        r_ts, r_cols = per_type[rt]
        if pr.op == "=":
            for ts, cols, a in ((l_ts, l_cols, la), (r_ts, r_cols, ra)):
                sv = np.clip(pr.sel.at(ts), 0.0, 1.0) if len(ts) else np.zeros(0)
                m = np.where(sv > 0, np.round(1.0 / np.maximum(sv, 1e-12)), 0.0)
                uniform = (sv > 0) & (np.abs(m * sv - 1.0) < 1e-9)
                hot = attr_rng.random(len(ts)) < np.sqrt(sv)
                cold = 1.0 + attr_rng.random(len(ts)) * 1e12
                keyed = -1.0 - np.floor(attr_rng.random(len(ts)) * np.maximum(m, 1.0))
                cols[a] = np.where(uniform, keyed, np.where(hot, 0.0, np.floor(cold)))
        else:
            # Ordered comparison: the right side of "<" (left side of ">") is shifted up.
            lo_side, hi_side = ((l_ts, l_cols, la), (r_ts, r_cols, ra)) if pr.op == "<" else ((r_ts, r_cols, ra), (l_ts, l_cols, la))
            ts, cols, a = lo_side
            cols[a] = attr_rng.random(len(ts))
            ts, cols, a = hi_side
            c = _shift_for(pr.sel.at(ts)) if len(ts) else np.zeros(0)
            cols[a] = attr_rng.random(len(ts)) + c
    events = []
    for order, (name, (ts, cols)) in enumerate(per_type.items()):
        names = list(cols)
        columns = [cols[a].tolist() for a in names]
        for k, t in enumerate(ts.tolist()):
            attrs = {a: col[k] for a, col in zip(names, columns)}
            events.append((t, order, k, Event(name, t, attrs)))
    events.sort(key=lambda x: (x[0], x[1], x[2]))
    return [e for *_, e in events]


# ---------------------------------------------------------------------------
# Event CSV
# ---------------------------------------------------------------------------

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def format_event(e: Event) -> str:
    attrs = ";".join(f"{k}={float(v)!r}" for k, v in e.attrs.items())
    return f"{e.timestamp},{e.type},{attrs}"


def parse_event_line(line: str, lineno: int | None = None) -> Event:
    parts = line.rstrip("\r\n").split(",")
    if len(parts) == 2:
        parts.append("")
    if len(parts) != 3:
        raise IngestError(f"expected 'timestamp_ms,type_name,attributes', got {line.strip()!r}", lineno)
    ts_s, name, attr_s = (p.strip() for p in parts)
    try:
        ts = int(ts_s)
    except ValueError:
        raise IngestError(f"bad timestamp {ts_s!r}", lineno) from None
    if ts < 0:
        raise IngestError(f"negative timestamp {ts}", lineno)
    if not _NAME.match(name):
        raise IngestError(f"bad type name {name!r}", lineno)
    attrs = {}
    if attr_s:
        for item in attr_s.split(";"):
            key, sep, val = item.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or not key or not val:
                raise IngestError(f"malformed attribute {item!r}", lineno)
            if key in attrs:
                raise IngestError(f"duplicate attribute {key!r}", lineno)
            try:
                attrs[key] = float(val)
            except ValueError:
                raise IngestError(f"non-numeric value for {key!r}: {val!r}", lineno) from None
    return Event(name, ts, attrs)


def ingest_csv(path) -> Iterator[Event]:
    """Lazily read an event CSV, checking that timestamps never decrease."""
    last = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if lineno == 1 and s.lower().startswith("timestamp"):
                continue
            e = parse_event_line(line, lineno)
            if last is not None and e.timestamp < last:
                raise IngestError(f"timestamp {e.timestamp} precedes {last}", lineno)
            last = e.timestamp
            yield e


def write_csv(events: Iterable[Event], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(format_event(e) + "\n")
            n += 1
    return n


# ---------------------------------------------------------------------------
# Script files and presets
# ---------------------------------------------------------------------------


def _schedule(v, mode="step") -> Schedule:
    if isinstance(v, (int, float)):
        return Schedule.constant(float(v))
    if isinstance(v, dict):
        return _schedule(v.get("points", v.get("value")), v.get("mode", mode))
    try:
        return Schedule(tuple((int(t), float(x)) for t, x in v), mode)
    except (TypeError, ValueError) as exc:
        raise ScriptError(f"bad schedule {v!r}: {exc}") from None


def _side(text: str) -> tuple:
    t, sep, a = str(text).partition(".")
    if not sep or not t or not a:
        raise ScriptError(f"predicate side must look like Type.attr, got {text!r}")
    return t, a


def script_from_dict(d: dict) -> DriftScript:
    if not isinstance(d, dict):
        raise ScriptError("script must be a mapping")
    if "preset" in d:
        opts = {k: v for k, v in d.items() if k != "preset"}
        return preset(d["preset"], **opts)[0]
    try:
        duration = int(d["duration_ms"])
        types = d["types"]
    except KeyError as exc:
        raise ScriptError(f"script is missing {exc.args[0]!r}") from None
    rates = {}
    for name, spec in types.items():
        if isinstance(spec, dict):
            rates[str(name)] = _schedule(spec.get("rate"), spec.get("mode", "step"))
        else:
            rates[str(name)] = _schedule(spec)
    preds = []
    for p in d.get("predicates", ()) or ():
        try:
            preds.append(PredicateSpec(_side(p["left"]), str(p["op"]), _side(p["right"]), _schedule(p["sel"], p.get("mode", "step"))))
        except KeyError as exc:
            raise ScriptError(f"predicate is missing {exc.args[0]!r}") from None
    noise = tuple(d.get("noise_attrs", ("v",)))
    return DriftScript(rates, duration, tuple(preds), int(d.get("seed", 0)), noise)


def load_script(path) -> DriftScript:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScriptError(f"cannot parse {path}: {exc}") from None
    return script_from_dict(data)


_LETTERS = "ABCDEFGHIJKLMNOP"


def _pattern_text(names, window_ms: int, op: str = "SEQ") -> str:
    items = ", ".join(f"{n} {n.lower()}" for n in names)
    preds = " AND ".join(
        f"{a.lower()}.k{i}{j} = {b.lower()}.k{i}{j}"
        for i, a in enumerate(names)
        for j, b in enumerate(names)
        if i < j
    )
    where = f" WHERE {preds}" if preds else ""
    return f"PATTERN {op}({items}){where} WITHIN {window_ms} ms"


def _pair_predicates(names, sel) -> tuple:
    sch = sel if isinstance(sel, Schedule) else Schedule.constant(sel)
    return tuple(
        PredicateSpec((a, f"k{i}{j}"), "=", (b, f"k{i}{j}"), sch)
        for i, a in enumerate(names)
        for j, b in enumerate(names)
        if i < j
    )


def traffic_like(
    size: int = 4,
    duration_ms: int = 60_000,
    seed: int = 0,
    window_ms: int = 1000,
    base: float = 100.0,
    skew: float = 1.25,
    jump: float = 5.0,
    step_at: float = 0.3,
    sel: float = 0.1,
    op: str = "SEQ",
):
    """Skewed, otherwise stable rates with one large step change.

    Rates fall geometrically by ``skew`` along the pattern; at ``step_at`` of
    the run the rarest type jumps to ``jump`` times the most frequent one.
    """
    names = _LETTERS[:size]
    t_step = int(duration_ms * step_at)
    rates = {}
    for i, n in enumerate(names):
        r = base / skew ** i
        if i == size - 1 and size > 1:
            rates[n] = Schedule(((0, r), (t_step, base * jump)))
        else:
            rates[n] = Schedule.constant(r)
    return DriftScript(rates, duration_ms, _pair_predicates(names, sel), seed), _pattern_text(names, window_ms, op)


def stocks_like(
    size: int = 4,
    duration_ms: int = 60_000,
    seed: int = 0,
    window_ms: int = 1000,
    base: float = 100.0,
    spread: float = 0.15,
    jitter: float = 0.05,
    every_ms: int = 1000,
    sel: float = 0.1,
    op: str = "SEQ",
):
    """Nearly uniform rates with frequent small jitter."""
    names = _LETTERS[:size]
    rng = np.random.default_rng(seed + 7919)
    rates = {}
    for i, n in enumerate(names):
        mean = base * (1.0 + spread * i / max(size - 1, 1))
        pts = [(t, mean * (1.0 + rng.uniform(-jitter, jitter))) for t in range(0, max(duration_ms, 1), every_ms)]
        rates[n] = Schedule(tuple(pts))
    return DriftScript(rates, duration_ms, _pair_predicates(names, sel), seed), _pattern_text(names, window_ms, op)


def drift(
    size: int = 4,
    duration_ms: int = 60_000,
    seed: int = 0,
    window_ms: int = 1000,
    base: float = 100.0,
    spread: float = 1.4,
    period_ms: int = 20_000,
    sel: float = 0.1,
    op: str = "SEQ",
):
    """All rates fan out, converge and fan out again in reverse order.

    Type ``i`` runs at ``base * spread ** ((i - c) * phase(t))`` with ``c`` the
    middle index and ``phase`` a triangle wave between 1 and -1. Neighbouring
    types never differ by more than a factor ``spread``, while the order of the
    whole pattern flips every half period.
    """
    names = _LETTERS[:size]
    half = max(period_ms // 2, 1)
    step = max(half // 20, 1)
    mid = (size - 1) / 2.0
    times = range(0, duration_ms + step, step)

    def phase(t):
        u = (t % period_ms) / half
        return 1.0 - 2.0 * u if u <= 1.0 else 2.0 * u - 3.0

    rates = {}
    for i, n in enumerate(names):
        rates[n] = Schedule(tuple((t, base * spread ** ((i - mid) * phase(t))) for t in times), "ramp")
    return DriftScript(rates, duration_ms, _pair_predicates(names, sel), seed), _pattern_text(names, window_ms, op)


PRESETS = {"traffic-like": traffic_like, "stocks-like": stocks_like, "drift": drift}


def preset(name: str, **opts):
    """Return ``(DriftScript, pattern text)`` for a named workload preset."""
    try:
        fn = PRESETS[name]
    except KeyError:
        raise ScriptError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    try:
        return fn(**opts)
    except TypeError as exc:
        raise ScriptError(f"bad options for preset {name!r}: {exc}") from None
