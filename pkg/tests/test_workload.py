from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acep import Event, parse_pattern
from acep.workload import (
    DriftScript,
    IngestError,
    PredicateSpec,
    Schedule,
    ScriptError,
    generate,
    ingest_csv,
    load_script,
    parse_event_line,
    preset,
    script_from_dict,
    write_csv,
)


def constant_script(seed=1, duration_ms=60_000, **rates):
    return DriftScript({k: Schedule.constant(v) for k, v in rates.items()}, duration_ms, seed=seed)


def test_constant_rates_within_ten_percent():
    events = generate(constant_script(A=100, B=15, C=10))
    counts = Counter(e.type for e in events)
    for name, rate in {"A": 100, "B": 15, "C": 10}.items():
        assert counts[name] / 60 == pytest.approx(rate, rel=0.10)
    # Windowed counts too, over 10 s windows.
    for lo in range(0, 60_000, 10_000):
        a = sum(1 for e in events if e.type == "A" and lo <= e.timestamp < lo + 10_000)
        assert a / 10 == pytest.approx(100, rel=0.10)


def test_zero_rate_type_is_silent():
    events = generate(constant_script(A=5, Z=0))
    assert events and all(e.type == "A" for e in events)


def test_sorted_and_deterministic():
    script = script_from_dict(
        {
            "duration_ms": 20_000,
            "seed": 4,
            "types": {"A": 30, "B": {"rate": [[0, 10], [10_000, 40]]}},
            "predicates": [{"left": "A.k", "op": "=", "right": "B.k", "sel": 0.2}],
        }
    )
    one, two = generate(script), generate(script)
    assert one == two
    assert [e.timestamp for e in one] == sorted(e.timestamp for e in one)
    other = generate(script_from_dict({"duration_ms": 20_000, "seed": 5, "types": {"A": 30}}))
    assert [e.timestamp for e in other] != [e.timestamp for e in one if e.type == "A"]


def test_step_schedule_changes_rate():
    s = Schedule(((0, 10.0), (10_000, 50.0)), "step")
    events = generate(DriftScript({"A": s}, 20_000, seed=2))
    first = sum(1 for e in events if e.timestamp < 10_000)
    second = len(events) - first
    assert first / 10 == pytest.approx(10, rel=0.25)
    assert second / 10 == pytest.approx(50, rel=0.10)


def test_ramp_schedule_interpolates():
    s = Schedule(((0, 0.0), (10_000, 100.0)), "ramp")
    assert s.at(5000) == pytest.approx(50.0)
    assert s.at(20_000) == 100.0


def _eq_pass_rate(left, right):
    ca, cb = Counter(left), Counter(right)
    return sum(ca[k] * cb[k] for k in ca) / (len(left) * len(right))


def _lt_pass_rate(left, right):
    r = np.sort(np.asarray(right))
    return float(np.mean([len(r) - np.searchsorted(r, v, side="right") for v in left])) / len(r)


@pytest.mark.parametrize("sel", [0.05, 0.1, 0.3, 0.5, 0.9])
def test_equality_selectivity_fidelity(sel):
    script = DriftScript(
        {"A": Schedule.constant(40), "B": Schedule.constant(40)},
        30_000,
        (PredicateSpec(("A", "k"), "=", ("B", "k"), Schedule.constant(sel)),),
        seed=11,
    )
    events = generate(script)
    a = [e.attrs["k"] for e in events if e.type == "A"]
    b = [e.attrs["k"] for e in events if e.type == "B"]
    assert _eq_pass_rate(a, b) == pytest.approx(sel, abs=0.05)


@pytest.mark.parametrize("op,sel", [("<", 0.2), ("<", 0.7), (">", 0.4)])
def test_ordered_selectivity_fidelity(op, sel):
    script = DriftScript(
        {"A": Schedule.constant(30), "B": Schedule.constant(30)},
        30_000,
        (PredicateSpec(("A", "v"), op, ("B", "v"), Schedule.constant(sel)),),
        seed=12,
        noise_attrs=(),
    )
    events = generate(script)
    a = [e.attrs["v"] for e in events if e.type == "A"]
    b = [e.attrs["v"] for e in events if e.type == "B"]
    rate = _lt_pass_rate(a, b) if op == "<" else _lt_pass_rate(b, a)
    assert rate == pytest.approx(sel, abs=0.05)


def test_selectivity_step_segments():
    # Two constant segments of 30 s each.
    sch = Schedule(((0, 0.2), (30_000, 0.5)), "step")
    script = DriftScript(
        {"A": Schedule.constant(30), "B": Schedule.constant(30)},
        60_000,
        (PredicateSpec(("A", "k"), "=", ("B", "k"), sch),),
        seed=13,
    )
    events = generate(script)
    for lo, target in ((0, 0.2), (30_000, 0.5)):
        seg = [e for e in events if lo <= e.timestamp < lo + 30_000]
        a = [e.attrs["k"] for e in seg if e.type == "A"]
        b = [e.attrs["k"] for e in seg if e.type == "B"]
        assert _eq_pass_rate(a, b) == pytest.approx(target, abs=0.05)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    events = generate(preset("traffic-like", duration_ms=3000)[0])
    path = tmp_path / "ev.csv"
    assert write_csv(events, path) == len(events)
    assert list(ingest_csv(path)) == events
    first = path.read_bytes()
    write_csv(generate(preset("traffic-like", duration_ms=3000)[0]), path)
    assert path.read_bytes() == first


def test_three_line_file(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("1,A,x=1\n2,B,x=2;y=3.5\n2,C,\n")
    events = list(ingest_csv(path))
    assert [(e.timestamp, e.type) for e in events] == [(1, "A"), (2, "B"), (2, "C")]
    assert events[1].attrs == {"x": 2.0, "y": 3.5}


@pytest.mark.parametrize(
    "bad",
    ["2,B,x=", "2,B,x", "two,B,x=1", "2,B,x=abc", "2,B,x=1;x=2", "2,9B,x=1", "2,B,x=1,extra"],
)
def test_malformed_line_reports_location(tmp_path, bad):
    path = tmp_path / "ev.csv"
    path.write_text(f"1,A,x=1\n{bad}\n")
    with pytest.raises(IngestError) as err:
        list(ingest_csv(path))
    assert err.value.lineno == 2
    assert "line 2" in str(err.value)


def test_non_monotone_file(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("5,A,\n4,A,\n")
    with pytest.raises(IngestError, match="precedes"):
        list(ingest_csv(path))


@given(
    st.lists(
        st.tuples(
            st.integers(0, 10**9),
            st.sampled_from(["A", "B", "Temp_1"]),
            st.dictionaries(st.sampled_from(["x", "y", "k01"]), st.floats(allow_nan=False, allow_infinity=False)),
        ),
        max_size=30,
    )
)
@settings(max_examples=50, deadline=None)
def test_event_line_round_trip(rows):
    from acep.workload import format_event

    for ts, name, attrs in rows:
        e = Event(name, ts, attrs)
        assert parse_event_line(format_event(e)) == e


# ---------------------------------------------------------------------------
# Scripts and presets
# ---------------------------------------------------------------------------


def test_yaml_script(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(
        "duration_ms: 5000\nseed: 3\ntypes:\n  A: 20\n  B:\n    rate: [[0, 5], [2500, 15]]\n"
        "predicates:\n  - {left: A.k, op: '=', right: B.k, sel: 0.5}\n"
    )
    script = load_script(path)
    assert script.types == ("A", "B")
    assert script.rates["B"].at(3000) == 15.0
    assert generate(script)


@pytest.mark.parametrize(
    "data",
    [
        {"types": {"A": 1}},
        {"duration_ms": 10, "types": {"A": -1}},
        {"duration_ms": 10, "types": {"A": 1}, "predicates": [{"left": "A.k", "op": "=", "right": "Z.k", "sel": 0.5}]},
        {"duration_ms": 10, "types": {"A": 1, "B": 1}, "predicates": [{"left": "A.k", "op": "=", "right": "B.k", "sel": 1.5}]},
        {"duration_ms": 10, "types": {"A": 1, "B": 1}, "predicates": [{"left": "A.k", "op": "!=", "right": "B.k", "sel": 0.5}]},
        {"preset": "nope"},
        {"preset": "drift", "colour": 3},
    ],
)
def test_bad_scripts(data):
    with pytest.raises(ScriptError):
        script_from_dict(data)


@pytest.mark.parametrize("name", ["traffic-like", "stocks-like", "drift"])
def test_presets_produce_matching_streams(name):
    script, text = preset(name, duration_ms=5000)
    p = parse_pattern(text)
    assert set(p.type_names) == set(script.types)
    assert generate(script)


def test_traffic_preset_has_one_step():
    script, _ = preset("traffic-like", size=4, duration_ms=40_000)
    last = script.rates["D"]
    assert last.at(0) < script.rates["C"].at(0)
    assert last.at(39_000) > 4 * last.at(0)
    # Every other type keeps a constant rate.
    for name in "ABC":
        assert script.rates[name].low == script.rates[name].peak


def test_stocks_preset_is_low_skew():
    script, _ = preset("stocks-like", size=4, duration_ms=20_000)
    for sch in script.rates.values():
        assert sch.peak / max(sch.low, 1e-9) < 1.6


def test_drift_preset_reverses_order():
    script, _ = preset("drift", size=4, period_ms=20_000)
    r0 = [script.rates[n].at(0) for n in "ABCD"]
    r_mid = [script.rates[n].at(10_000) for n in "ABCD"]
    assert r0 == sorted(r0)
    assert r_mid == sorted(r_mid, reverse=True)
