"""Domain types: events, patterns, predicates, statistics snapshots and plans."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

__all__ = [
    "OPS",
    "EventType",
    "Event",
    "Position",
    "Predicate",
    "Pattern",
    "pattern_size",
    "StatSnapshot",
    "BuildingBlock",
    "OrderPlan",
    "Leaf",
    "Node",
    "TreePlan",
    "Plan",
    "PatternError",
    "StatsError",
]


class PatternError(ValueError):
    """Raised for structurally invalid patterns."""


class StatsError(ValueError):
    """Raised for statistics that violate snapshot invariants."""


OPS = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
    "!=": operator.ne,
}

# Mirror of each comparison when its operands are swapped.
FLIPPED = {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<", "!=": "!="}


@dataclass(frozen=True)
class EventType:
    id: int
    name: str

    def __post_init__(self):
        if not self.name:
            raise PatternError("event type name must be nonempty")


@dataclass(frozen=True, eq=True)
class Event:
    """A primitive event. ``type`` is the type name; ids are pattern-local."""

    type: str
    timestamp: int
    attrs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")

    __hash__ = object.__hash__


@dataclass(frozen=True)
class Position:
    type_name: str
    var: str
    negated: bool = False
    kleene: bool = False


Operand = tuple  # (position index, attribute name)


@dataclass(frozen=True)
class Predicate:
    """Binary comparison ``left op right``; ``right`` is an operand or a constant."""

    left: Operand
    op: str
    right: Union[Operand, float]

    def __post_init__(self):
        if self.op not in OPS:
            raise PatternError(f"unknown comparison operator {self.op!r}")

    @property
    def positions(self) -> frozenset:
        ps = {self.left[0]}
        if isinstance(self.right, tuple):
            ps.add(self.right[0])
        return frozenset(ps)

    def evaluate(self, binding: Mapping[int, Event]) -> bool:
        lhs = binding[self.left[0]].attrs[self.left[1]]
        if isinstance(self.right, tuple):
            rhs = binding[self.right[0]].attrs[self.right[1]]
        else:
            rhs = self.right
        return OPS[self.op](lhs, rhs)


@dataclass(frozen=True)
class Pattern:
    """A declarative pattern.

    ``op`` is SEQ or AND for a simple pattern over ``positions``; for OR the
    pattern holds ``branches`` (simple patterns) and no positions of its own.
    Within a simple pattern the event type id of a position is its index.
    """

    op: str
    positions: tuple = ()
    predicates: tuple = ()
    window: int = 0
    branches: tuple = ()

    def __post_init__(self):
        if self.window <= 0:
            raise PatternError(f"window must be positive, got {self.window}")
        if self.op == "OR":
            if len(self.branches) < 1 or self.positions:
                raise PatternError("OR pattern needs branches and no direct positions")
            for b in self.branches:
                if b.op not in ("SEQ", "AND"):
                    raise PatternError("OR branches must be SEQ or AND patterns")
                if b.window != self.window:
                    raise PatternError("all OR branches share the pattern window")
            seen: set = set()
            for b in self.branches:
                names = {p.var for p in b.positions}
                if names & seen:
                    raise PatternError(f"variables reused across branches: {sorted(names & seen)}")
                seen |= names
            return
        if self.op not in ("SEQ", "AND"):
            raise PatternError(f"unknown operator {self.op!r}")
        if self.branches:
            raise PatternError(f"{self.op} pattern cannot have branches")
        self._validate_simple()

    def _validate_simple(self):
        if not self.positions:
            raise PatternError("pattern needs at least one position")
        if all(p.negated for p in self.positions):
            raise PatternError("pattern needs at least one non-negated position")
        names = [p.type_name for p in self.positions]
        if len(set(names)) != len(names):
            raise PatternError(f"event types must be distinct within a pattern: {names}")
        vars_ = [p.var for p in self.positions]
        if len(set(vars_)) != len(vars_):
            raise PatternError(f"duplicate variable names: {vars_}")
        for p in self.positions:
            if p.negated and p.kleene:
                raise PatternError(f"position {p.var} cannot be both negated and Kleene")
        kleene = [i for i, p in enumerate(self.positions) if p.kleene]
        if len(kleene) > 1:
            raise PatternError("at most one Kleene position per pattern is supported")
        n = len(self.positions)
        for pred in self.predicates:
            ps = pred.positions
            if any(not 0 <= i < n for i in ps):
                raise PatternError(f"predicate references unknown position: {pred}")
            if len(ps) == 2:
                a, b = sorted(ps)
                pa, pb = self.positions[a], self.positions[b]
                if pa.negated and pb.negated:
                    raise PatternError("predicates between two negated positions are not supported")
                if (pa.negated and pb.kleene) or (pa.kleene and pb.negated):
                    raise PatternError("predicates between negated and Kleene positions are not supported")

    # -- helpers -----------------------------------------------------------

    @property
    def is_simple(self) -> bool:
        return self.op != "OR"

    def simple_branches(self) -> tuple:
        return self.branches if self.op == "OR" else (self,)

    @property
    def event_types(self) -> tuple:
        self._require_simple()
        return tuple(EventType(i, p.type_name) for i, p in enumerate(self.positions))

    @property
    def type_names(self) -> tuple:
        self._require_simple()
        return tuple(p.type_name for p in self.positions)

    @property
    def plannable(self) -> tuple:
        """Type ids taking part in plans: every non-negated position."""
        self._require_simple()
        return tuple(i for i, p in enumerate(self.positions) if not p.negated)

    @property
    def negated(self) -> tuple:
        self._require_simple()
        return tuple(i for i, p in enumerate(self.positions) if p.negated)

    @property
    def kleene(self):
        self._require_simple()
        for i, p in enumerate(self.positions):
            if p.kleene:
                return i
        return None

    def var_index(self) -> dict:
        self._require_simple()
        return {p.var: i for i, p in enumerate(self.positions)}

    def pair_predicates(self) -> dict:
        """Predicates grouped by the (sorted) pair of positions they touch.

        Single-position predicates are keyed ``(i, i)``.
        """
        self._require_simple()
        out: dict = {}
        for pred in self.predicates:
            ps = sorted(pred.positions)
            key = (ps[0], ps[-1])
            out.setdefault(key, []).append(pred)
        return out

    def _require_simple(self):
        if self.op == "OR":
            raise PatternError("operation requires a SEQ or AND pattern; use simple_branches()")

    def render(self) -> str:
        from .dsl import render_pattern

        return render_pattern(self)


def pattern_size(p: Pattern) -> int:
    """Number of positions, Kleene included and negated excluded.

    For OR patterns the size of the largest branch is reported.
    """
    if p.op == "OR":
        return max(pattern_size(b) for b in p.branches)
    return sum(1 for pos in p.positions if not pos.negated)


@dataclass(frozen=True)
class StatSnapshot:
    """Arrival rates (events/s) and a symmetric selectivity matrix."""

    rates: tuple
    sel: tuple
    taken_at: int = 0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        n = len(rates)
        rows = [list(map(float, row)) for row in self.sel]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise StatsError(f"selectivity matrix must be {n}x{n}")
        for r in rates:
            if not r >= 0 or math.isinf(r):
                raise StatsError(f"rates must be finite and nonnegative, got {r}")
        for i in range(n):
            for j in range(n):
                v = rows[i][j]
                if not 0.0 <= v <= 1.0:
                    raise StatsError(f"selectivity sel[{i}][{j}]={v} outside [0,1]")
        # Upper triangle wins; lower triangle mirrors it.
        for i in range(n):
            for j in range(i + 1, n):
                rows[j][i] = rows[i][j]
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "sel", tuple(tuple(r) for r in rows))

    @property
    def n(self) -> int:
        return len(self.rates)

    @classmethod
    def from_rates(cls, rates: Sequence[float], taken_at: int = 0) -> "StatSnapshot":
        n = len(rates)
        return cls(tuple(rates), tuple((1.0,) * n for _ in range(n)), taken_at)

    def replace(self, rates=None, sel=None) -> "StatSnapshot":
        return StatSnapshot(
            self.rates if rates is None else tuple(rates),
            self.sel if sel is None else sel,
            self.taken_at,
        )

    def to_csv(self) -> str:
        lines = ["kind,i,j,value"]
        for i, r in enumerate(self.rates):
            lines.append(f"rate,{i},,{r!r}")
        for i in range(self.n):
            for j in range(i, self.n):
                lines.append(f"sel,{i},{j},{self.sel[i][j]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, names: Sequence[str] = ()) -> "StatSnapshot":
        """Parse the ``kind,i,j,value`` dump. Indices may be ids or type names.

        Missing selectivities default to 1. With ``names`` given, the snapshot
        is sized to them and rows naming unknown types are ignored.
        """
        rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0].replace(" ", "") != "kind,i,j,value":
            raise StatsError("stats file must start with header 'kind,i,j,value'")
        index = {nm: k for k, nm in enumerate(names)}

        def resolve(tok: str):
            tok = tok.strip()
            if tok in index:
                return index[tok]
            try:
                return int(tok)
            except ValueError:
                if names:
                    return None
                raise StatsError(f"unknown type reference {tok!r}")

        rates: dict = {}
        sels: dict = {}
        for lineno, row in enumerate(rows[1:], start=2):
            parts = row.split(",")
            if len(parts) != 4:
                raise StatsError(f"line {lineno}: expected 4 fields")
            kind, i, j, value = parts
            i_ = resolve(i)
            if i_ is None:
                continue
            if kind == "rate":
                rates[i_] = float(value)
            elif kind == "sel":
                j_ = resolve(j)
                if j_ is None:
                    continue
                sels[(min(i_, j_), max(i_, j_))] = float(value)
            else:
                raise StatsError(f"line {lineno}: unknown kind {kind!r}")
        n = len(names) if names else (max(list(rates) + [k for pair in sels for k in pair], default=-1) + 1)
        sel = [[1.0] * n for _ in range(n)]
        for (i, j), v in sels.items():
            if i < n and j < n:
                sel[i][j] = sel[j][i] = v
        return cls(tuple(rates.get(i, 0.0) for i in range(n)), tuple(map(tuple, sel)))


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BuildingBlock:
    """One indivisible plan step.

    ``descriptor`` is ``(position, type id)`` for order plans and
    ``(left leafset, right leafset)`` for tree plans.
    """

    index: int
    descriptor: tuple

    def describe(self, names: Sequence[str]) -> str:
        a, b = self.descriptor
        if isinstance(a, int):
            return f"type {names[b]} at position {a + 1}"
        return "(" + ",".join(names[i] for i in sorted(a)) + " | " + ",".join(names[i] for i in sorted(b)) + ")"


@dataclass(frozen=True)
class OrderPlan:
    order: tuple
    names: tuple
    filters: tuple = ()

    @property
    def blocks(self) -> tuple:
        return tuple(BuildingBlock(i, (i, t)) for i, t in enumerate(self.order))

    def canonical(self) -> str:
        return ",".join(self.names[t] for t in self.order)

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class Leaf:
    type_id: int

    @property
    def leafset(self) -> frozenset:
        return frozenset((self.type_id,))

    @property
    def leftmost(self) -> int:
        return self.type_id

    def internal_nodes(self):
        return iter(())

    def render(self, names) -> str:
        return names[self.type_id]


@dataclass(frozen=True)
class Node:
    left: Union["Node", Leaf]
    right: Union["Node", Leaf]
    leafset: frozenset = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        a, b = self.left.leafset, self.right.leafset
        if a & b:
            raise PatternError("tree children must have disjoint leafsets")
        object.__setattr__(self, "leafset", a | b)

    @property
    def leftmost(self) -> int:
        return self.left.leftmost

    def internal_nodes(self):
        yield from self.left.internal_nodes()
        yield from self.right.internal_nodes()
        yield self

    def render(self, names) -> str:
        return f"({self.left.render(names)},{self.right.render(names)})"


def block_order_key(node: Node) -> tuple:
    """Bottom-up verification order: smaller leafsets first, then smallest id."""
    return (len(node.leafset), min(node.leafset))


@dataclass(frozen=True)
class TreePlan:
    root: Union[Node, Leaf]
    names: tuple
    filters: tuple = ()

    @property
    def nodes(self) -> tuple:
        return tuple(sorted(self.root.internal_nodes(), key=block_order_key))

    @property
    def blocks(self) -> tuple:
        return tuple(
            BuildingBlock(i, (nd.left.leafset, nd.right.leafset)) for i, nd in enumerate(self.nodes)
        )

    def block_index(self) -> dict:
        """Map from a node's leafset to its block index."""
        return {nd.leafset: i for i, nd in enumerate(self.nodes)}

    @property
    def leaves(self) -> tuple:
        out = []

        def walk(t):
            if isinstance(t, Leaf):
                out.append(t.type_id)
            else:
                walk(t.left)
                walk(t.right)

        walk(self.root)
        return tuple(out)

    def canonical(self) -> str:
        return self.root.render(self.names)

    def __str__(self) -> str:
        return self.canonical()


Plan = Union[OrderPlan, TreePlan]


def parse_tree(text: str, names: Sequence[str]):
    """Inverse of the canonical tree rendering, e.g. ``((A,B),C)``."""
    index = {nm: i for i, nm in enumerate(names)}
    pos = 0
    text = text.replace(" ", "")

    def parse():
        nonlocal pos
        if text[pos] == "(":
            pos += 1
            left = parse()
            if text[pos] != ",":
                raise ValueError(f"expected ',' at {pos} in {text!r}")
            pos += 1
            right = parse()
            if text[pos] != ")":
                raise ValueError(f"expected ')' at {pos} in {text!r}")
            pos += 1
            return Node(left, right)
        start = pos
        while pos < len(text) and text[pos] not in "(),":
            pos += 1
        return Leaf(index[text[start:pos]])

    tree = parse()
    if pos != len(text):
        raise ValueError(f"trailing input in {text!r}")
    return tree


def compile_pair_test(predicates, i: int, j: int):
    """Compile predicates over positions ``i`` and ``j`` into ``test(ev_i, ev_j)``.

    For single-position predicates pass ``i == j``; the test is then called
    as ``test(ev, ev)``.
    """
    items = []
    for pr in predicates:
        lp, la = pr.left
        fn = OPS[pr.op]
        if isinstance(pr.right, tuple):
            rp, ra = pr.right
            items.append((lp == j and lp != i, la, fn, rp == j and rp != i, ra, None))
        else:
            items.append((lp == j and lp != i, la, fn, None, None, pr.right))
    if not items:
        return None

    def test(ev_i, ev_j):
        for l_is_j, la, fn, r_is_j, ra, const in items:
            lv = (ev_j if l_is_j else ev_i).attrs[la]
            rv = const if r_is_j is None else (ev_j if r_is_j else ev_i).attrs[ra]
            if not fn(lv, rv):
                return False
        return True

    return test
