"""``acep`` command line: bench, plan and gen."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import ConfigError, explain_plan, load_config, run_benchmark, write_report
from .invariants import ALL
from .model import PatternError, StatsError
from .workload import IngestError, ScriptError, generate, load_script, write_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _k_arg(text: str):
    if text.upper() == "ALL":
        return ALL
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"K must be a positive integer or ALL, not {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("K must be at least 1")
    return k


def _d_arg(text: str):
    if text == "auto":
        return text
    try:
        d = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"d must be a number or 'auto', not {text!r}") from None
    if d < 0:
        raise argparse.ArgumentTypeError("d must be nonnegative")
    return text


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad usage, which doubles as the config-error code.
    ap = argparse.ArgumentParser(prog="acep", description="Adaptive complex event processing with invariant-based re-planning.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bench", help="run a planner x policy benchmark matrix")
    b.add_argument("--config", required=True, help="YAML benchmark config")
    b.add_argument("--out", help="report CSV (default: the config's out, else stdout)")

    p = sub.add_parser("plan", help="explain the plan and invariants for one snapshot")
    p.add_argument("--pattern", required=True, help="file holding the pattern text")
    p.add_argument("--stats", required=True, help="statistics snapshot CSV")
    p.add_argument("--planner", default="greedy", choices=("greedy", "zstream"))
    p.add_argument("--k", type=_k_arg, default=1, help="conditions kept per block, or ALL")
    p.add_argument("--d", type=_d_arg, default="0", help="invariant distance, or auto")

    g = sub.add_parser("gen", help="generate an event CSV from a drift script")
    g.add_argument("--script", required=True, help="YAML drift script")
    g.add_argument("--out", required=True, help="output event CSV")
    return ap


def _read(path: str) -> str:
    f = Path(path)
    if not f.exists():
        raise ConfigError(f"missing file {f}")
    return f.read_text(encoding="utf-8")


def _bench(args) -> int:
    cfg = load_config(args.config)
    log = logging.getLogger("acep.bench")

    def progress(planner, policy, rep, m):
        log.info("%s %s rep %d: %.0f events/s, %d reoptimizations", planner, policy, rep, m.throughput_eps, m.reoptimizations)

    rows = run_benchmark(cfg, progress)
    out = args.out or cfg.out
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_report(rows, fh)
    else:
        write_report(rows, sys.stdout)
    return EXIT_OK


def _plan(args) -> int:
    pattern = _read(args.pattern).strip()
    stats = _read(args.stats)
    sys.stdout.write(explain_plan(pattern, stats, args.planner, args.k, args.d))
    return EXIT_OK


def _gen(args) -> int:
    if not Path(args.script).exists():
        raise ConfigError(f"missing file {args.script}")
    script = load_script(args.script)
    n = write_csv(generate(script), args.out)
    logging.getLogger("acep.gen").info("wrote %s events to %s", n, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handler = {"bench": _bench, "plan": _plan, "gen": _gen}[args.cmd]
    try:
        return handler(args)
    except (ConfigError, ScriptError, PatternError, StatsError) as exc:
        print(f"acep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as exc:
        print(f"acep: bad input: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"acep: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
