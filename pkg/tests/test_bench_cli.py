import io
import subprocess
import sys

import pytest
import yaml

from acep import StatSnapshot
from acep.bench import BENCH_COLUMNS, ConfigError, explain_plan, load_config, run_benchmark, write_report
from acep.cli import main
from acep.workload import ingest_csv

EX1_TEXT = "PATTERN SEQ(A a, B b, C c) WITHIN 1 s"
EX1_STATS = StatSnapshot.from_rates([100.0, 15.0, 10.0]).to_csv()


def small_config(**kw):
    cfg = {
        "workload": {"preset": "stocks-like", "size": 3, "duration_ms": 4000},
        "planners": ["greedy"],
        "policies": ["unconditional", "invariant"],
        "check_every": 100,
        "repetitions": 1,
        "warm_runs": 0,
        "stats_window_ms": 1000,
        "seed": 3,
    }
    cfg.update(kw)
    return cfg


def test_report_header_is_stable():
    buf = io.StringIO()
    write_report([], buf)
    assert buf.getvalue() == (
        "pattern,size,planner,policy,throughput_eps,throughput_std,"
        "relative_gain_vs_static,reoptimizations,overhead_frac,matches\n"
    )
    assert len(BENCH_COLUMNS) == 10


def test_static_baseline_is_added():
    rows = run_benchmark(load_config(small_config()))
    assert [r["policy"] for r in rows] == ["static", "unconditional", "invariant"]
    static = rows[0]
    assert static["reoptimizations"] == 0
    assert static["relative_gain_vs_static"] == pytest.approx(1.0)
    # Every policy reports the same matches.
    assert len({r["matches"] for r in rows}) == 1


def test_invariant_overhead_below_unconditional():
    cfg = small_config(workload={"script": {"duration_ms": 20_000, "seed": 1, "types": {"A": 100, "B": 15, "C": 10}}}, pattern=EX1_TEXT.replace("1 s", "50 ms"))
    rows = {r["policy"]: r for r in run_benchmark(load_config(cfg))}
    assert rows["invariant"]["overhead_frac"] < rows["unconditional"]["overhead_frac"]


def test_zero_event_run(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    cfg = load_config({"pattern": EX1_TEXT, "workload": {"csv": str(empty)}, "repetitions": 1, "policies": ["invariant"]})
    rows = run_benchmark(cfg)
    assert all(r["throughput_eps"] == 0 and r["matches"] == 0 for r in rows)


def test_reports_are_deterministic_apart_from_timing():
    def stable(rows):
        return [(r["policy"], r["reoptimizations"], r["matches"]) for r in rows]

    cfg = small_config(workload={"preset": "traffic-like", "size": 3, "duration_ms": 6000})
    assert stable(run_benchmark(load_config(cfg))) == stable(run_benchmark(load_config(cfg)))


@pytest.mark.parametrize(
    "patch",
    [
        {"colour": "blue"},
        {"planners": ["simulated-annealing"]},
        {"policies": ["sometimes"]},
        {"check_every": 0},
        {"repetitions": 0},
        {"workload": {"preset": "nope"}},
        {"workload": "traffic"},
        {"workload": {"csv": "no/such/file.csv"}},
    ],
)
def test_config_errors(patch):
    with pytest.raises(ConfigError):
        load_config(small_config(**patch))


def test_pattern_required_without_preset():
    with pytest.raises(ConfigError):
        load_config({"workload": {"script": {"duration_ms": 10, "types": {"A": 1}}}})


# ---------------------------------------------------------------------------
# explain_plan
# ---------------------------------------------------------------------------


def test_explain_example():
    text = explain_plan(EX1_TEXT, EX1_STATS)
    lines = text.splitlines()
    assert lines[0] == "plan: C,B,A"
    assert "DCS block 0 [type C at position 1]: rate_C < rate_B, rate_C < rate_A" in lines
    assert "DCS block 2 [type A at position 3]: (empty)" in lines
    assert "d_avg: 5.05556" in lines
    assert lines[-2:] == ["block 0: rate_C < rate_B [gap=5]", "block 1: rate_B < rate_A [gap=85]"]


def test_explain_auto_distance_and_k_all():
    text = explain_plan(EX1_TEXT, EX1_STATS, K=None, d="auto")
    assert "invariants (K=ALL, d=5.05556):" in text
    assert text.count("block 0: ") == 2


def test_explain_single_type():
    text = explain_plan("PATTERN SEQ(A a) WITHIN 1 s", StatSnapshot.from_rates([3.0]).to_csv())
    assert "plan: A" in text
    assert "d_avg: n/a" in text
    assert text.endswith("no invariants\n")


def test_explain_tree_is_bottom_up():
    text = explain_plan(EX1_TEXT, EX1_STATS, planner="zstream", K=None)
    assert text.splitlines()[0] == "plan: (A,(B,C))"
    blocks = [int(line.split(":")[0].split()[1]) for line in text.splitlines() if line.startswith("block ")]
    assert blocks == sorted(blocks) and blocks


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_plan(tmp_path, capsys):
    pat = _write(tmp_path, "p.txt", EX1_TEXT)
    stats = _write(tmp_path, "s.csv", EX1_STATS)
    assert main(["plan", "--pattern", pat, "--stats", stats, "--planner", "greedy", "--k", "1", "--d", "0"]) == 0
    assert "plan: C,B,A" in capsys.readouterr().out


def test_cli_plan_missing_file(tmp_path):
    pat = _write(tmp_path, "p.txt", EX1_TEXT)
    assert main(["plan", "--pattern", pat, "--stats", str(tmp_path / "nope.csv")]) == 2


def test_cli_plan_bad_pattern(tmp_path):
    pat = _write(tmp_path, "p.txt", "PATTERN SEQ(A a WITHIN 1 s")
    stats = _write(tmp_path, "s.csv", EX1_STATS)
    assert main(["plan", "--pattern", pat, "--stats", stats]) == 2


def test_cli_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["plan", "--k", "0"])
    assert err.value.code == 2


def test_cli_bench(tmp_path):
    cfg = _write(tmp_path, "c.yaml", yaml.safe_dump(small_config()))
    out = tmp_path / "r.csv"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("pattern,size,planner,policy")
    assert len(lines) == 4


def test_cli_bench_config_error(tmp_path):
    cfg = _write(tmp_path, "c.yaml", yaml.safe_dump(small_config(colour=1)))
    assert main(["bench", "--config", cfg]) == 2
    assert main(["bench", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_bench_bad_events_is_runtime_error(tmp_path):
    ev = _write(tmp_path, "e.csv", "1,A,x=1\n2,B,x=oops\n")
    cfg = _write(tmp_path, "c.yaml", yaml.safe_dump({"pattern": EX1_TEXT, "workload": {"csv": ev}}))
    assert main(["bench", "--config", cfg]) == 1


def test_cli_gen(tmp_path):
    script = _write(tmp_path, "s.yaml", "duration_ms: 2000\nseed: 2\ntypes:\n  A: 50\n  B: 5\n")
    out = tmp_path / "ev.csv"
    assert main(["gen", "--script", script, "--out", str(out)]) == 0
    events = list(ingest_csv(out))
    assert {e.type for e in events} == {"A", "B"}
    assert main(["gen", "--script", str(tmp_path / "none.yaml"), "--out", str(out)]) == 2


def test_console_entry_point(tmp_path):
    pat = _write(tmp_path, "p.txt", EX1_TEXT)
    stats = _write(tmp_path, "s.csv", EX1_STATS)
    res = subprocess.run([sys.executable, "-m", "acep.cli", "plan", "--pattern", pat, "--stats", stats, "--planner", "zstream"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "plan: (A,(B,C))" in res.stdout
