"""Reoptimizing decision functions: when should the planner be invoked again?"""

from __future__ import annotations

import math
import re

from .invariants import InvariantSet, estimate_distance, select_invariants, verify, collect_dcs
from .model import StatSnapshot

__all__ = [
    "DecisionPolicy",
    "Unconditional",
    "Static",
    "ConstantThreshold",
    "InvariantBased",
    "decide",
    "parse_policy",
    "PolicyError",
]

_EPS = 1e-9


class PolicyError(ValueError):
    pass


class DecisionPolicy:
    """Base class. ``on_deploy`` is called whenever a plan goes live (including the first)."""

    name = "policy"

    def decide(self, s: StatSnapshot) -> bool:
        raise NotImplementedError

    def on_deploy(self, plan, trace, s: StatSnapshot) -> None:
        pass

    def label(self) -> str:
        return self.name


class Unconditional(DecisionPolicy):
    name = "unconditional"

    def decide(self, s):
        return True


class Static(DecisionPolicy):
    """Never re-plans; the reference point for relative gain."""

    name = "static"

    def decide(self, s):
        return False


class ConstantThreshold(DecisionPolicy):
    """True once any rate or selectivity moved by at least ``t`` from its baseline.

    The deviation is relative to the baseline value unless ``absolute`` is set.
    The baseline is the snapshot under which the current plan was deployed.
    """

    name = "threshold"

    def __init__(self, t: float, absolute: bool = False, baseline: StatSnapshot | None = None):
        if not t > 0:
            raise PolicyError(f"threshold must be positive, got {t}")
        self.t = float(t)
        self.absolute = absolute
        self.baseline = baseline

    def on_deploy(self, plan, trace, s):
        self.baseline = s

    def _values(self, s: StatSnapshot):
        yield from s.rates
        for i in range(s.n):
            yield from s.sel[i][i:]

    def decide(self, s):
        if self.baseline is None:
            return True
        if math.isinf(self.t):
            return False
        for v0, v in zip(self._values(self.baseline), self._values(s)):
            dev = abs(v - v0) if self.absolute else abs(v - v0) / max(v0, _EPS)
            if dev >= self.t:
                return True
        return False

    def label(self):
        return f"threshold:{self.t:g}" + (":abs" if self.absolute else "")


class InvariantBased(DecisionPolicy):
    """Verifies invariants selected from the deciding conditions of the current plan.

    ``d="auto"`` sets the distance from the average relative gap of the trace
    each time a plan is deployed.
    """

    name = "invariant"

    def __init__(self, K: int | None = 1, d: float | str = 0.0, tree_mode: str = "exact"):
        if K is not None and (not isinstance(K, int) or K < 1):
            raise PolicyError(f"K must be a positive integer or ALL, got {K!r}")
        if d != "auto" and (not isinstance(d, (int, float)) or d < 0):
            raise PolicyError(f"d must be nonnegative or 'auto', got {d!r}")
        self.K = K
        self.d = d
        self.tree_mode = tree_mode
        self.inv: InvariantSet | None = None
        self.d_used = 0.0 if d == "auto" else float(d)

    def on_deploy(self, plan, trace, s):
        if self.d == "auto":
            try:
                self.d_used = estimate_distance(trace, s, self.tree_mode)
            except ValueError:
                self.d_used = 0.0
        self.inv = select_invariants(
            collect_dcs(trace), s, self.K, self.d_used, self.tree_mode, created_from=str(plan)
        )

    def decide(self, s):
        if self.inv is None:
            return True
        return not verify(self.inv, s).intact

    def label(self):
        k = "ALL" if self.K is None else str(self.K)
        d = "auto" if self.d == "auto" else f"{float(self.d):g}"
        return f"invariant:K={k}:d={d}"


def decide(p: DecisionPolicy, s: StatSnapshot) -> bool:
    return p.decide(s)


_K_RE = re.compile(r"^k=(all|\d+)$", re.I)
_D_RE = re.compile(r"^d=(auto|[0-9.eE+-]+)$", re.I)


def parse_policy(text: str) -> DecisionPolicy:
    """Build a policy from ``unconditional | static | threshold:<t>[:abs] | invariant[:K=<k>][:d=<d>|d=auto]``."""
    parts = [x.strip() for x in str(text).strip().split(":")]
    head = parts[0].lower()
    rest = parts[1:]
    if head == "unconditional" and not rest:
        return Unconditional()
    if head in ("static", "never") and not rest:
        return Static()
    if head == "threshold":
        if not rest:
            raise PolicyError("threshold policy needs a value, e.g. threshold:0.3")
        try:
            t = float(rest[0])
        except ValueError:
            raise PolicyError(f"bad threshold value {rest[0]!r}") from None
        flags = [r.lower() for r in rest[1:]]
        if any(f not in ("abs", "absolute") for f in flags):
            raise PolicyError(f"unknown threshold option in {text!r}")
        return ConstantThreshold(t, absolute=bool(flags))
    if head == "invariant":
        K: int | None = 1
        d: float | str = 0.0
        mode = "exact"
        for r in rest:
            if m := _K_RE.match(r):
                K = None if m.group(1).lower() == "all" else int(m.group(1))
            elif m := _D_RE.match(r):
                v = m.group(1).lower()
                d = "auto" if v == "auto" else _float(v, text)
            elif r.lower() in ("exact", "frozen"):
                mode = r.lower()
            else:
                raise PolicyError(f"unknown invariant option {r!r} in {text!r}")
        return InvariantBased(K, d, mode)
    raise PolicyError(f"unknown decision policy {text!r}")


def _float(v: str, text: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise PolicyError(f"bad number {v!r} in {text!r}") from None
