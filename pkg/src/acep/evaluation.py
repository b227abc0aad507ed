"""Incremental evaluation of order-based and tree-based plans.

Matching is skip-till-any-match: every combination of events satisfying the
pattern is reported once. All plan instances of a pattern share one event
history, so a plan switch never loses buffered events.

A Kleene position is bound to a single representative event while a match
is assembled; the full set is collected when the match closes and the
representative must be its latest member. Negated positions never enter a
plan; they are checked when a match closes, or afterwards for a trailing
negation whose window is still open.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

from .model import Event, Leaf, OrderPlan, Pattern, TreePlan, compile_pair_test

__all__ = ["Ev", "Buffer", "History", "Match", "Finisher", "OrderEvaluator", "TreeEvaluator", "make_evaluator"]

_INF = float("inf")


class Ev:
    """An event as stored by the engine: arrival number, timestamp and unary-filter result."""

    __slots__ = ("seq", "ts", "attrs", "event", "ok")

    def __init__(self, seq: int, event: Event, ok: bool = True):
        self.seq = seq
        self.ts = event.timestamp
        self.attrs = event.attrs
        self.event = event
        self.ok = ok

    def __repr__(self):
        return f"Ev({self.seq}, {self.event.type}@{self.ts})"


class Buffer:
    """Arrival-ordered events of one position; both seq and ts are nondecreasing."""

    __slots__ = ("seqs", "tss", "evs", "start")

    def __init__(self):
        self.seqs: list = []
        self.tss: list = []
        self.evs: list = []
        self.start = 0

    def append(self, ev: Ev):
        self.seqs.append(ev.seq)
        self.tss.append(ev.ts)
        self.evs.append(ev)

    def expire(self, min_ts):
        start = bisect_left(self.tss, min_ts, self.start)
        if start > 512 and start * 2 > len(self.evs):
            del self.seqs[:start], self.tss[:start], self.evs[:start]
            start = 0
        self.start = start

    def span(self, lo_seq, hi_seq, min_ts, max_ts) -> tuple:
        """Index range of events with lo_seq < seq < hi_seq and min_ts <= ts <= max_ts."""
        seqs, tss = self.seqs, self.tss
        start, end = self.start, len(seqs)
        i = max(bisect_right(seqs, lo_seq, start, end), bisect_left(tss, min_ts, start, end))
        j = end
        if hi_seq != _INF:
            j = bisect_left(seqs, hi_seq, i, end)
        if max_ts != _INF:
            j = min(j, bisect_right(tss, max_ts, i, end))
        return i, max(i, j)

    def __len__(self):
        return len(self.evs) - self.start

    def live(self):
        return self.evs[self.start:]


def _pair_tests(p: Pattern) -> dict:
    """``(i, j) -> test(ev_i, ev_j)`` for every predicate pair, in both directions."""
    out = {}
    for (i, j), preds in p.pair_predicates().items():
        if i == j:
            continue
        t = compile_pair_test(preds, i, j)
        out[(i, j)] = t
        out[(j, i)] = (lambda f: lambda a, b: f(b, a))(t)
    return out


class History:
    """Per-position buffers shared by every plan instance of one simple pattern."""

    def __init__(self, p: Pattern):
        self.window = p.window
        self.buffers = [Buffer() for _ in p.positions]
        preds = p.pair_predicates()
        self.unary = [compile_pair_test(preds[(i, i)], i, i) if (i, i) in preds else None for i in range(len(p.positions))]

    def add(self, pos: int, seq: int, event: Event) -> Ev:
        ev = Ev(seq, event)
        u = self.unary[pos]
        if u is not None:
            ev.ok = bool(u(ev, ev))
        buf = self.buffers[pos]
        buf.expire(ev.ts - self.window)
        buf.append(ev)
        return ev

    def expire(self, now: int):
        for b in self.buffers:
            b.expire(now - self.window)


@dataclass(frozen=True)
class Match:
    """A complete match. ``events`` and ``key`` hold one entry per position:
    an event (seq) for regular positions, a tuple for the Kleene position and
    None for negated ones."""

    events: tuple
    key: tuple
    detect_ts: int

    def timestamps(self) -> list:
        out = []
        for e in self.events:
            if e is None:
                continue
            if isinstance(e, tuple):
                out.append("|".join(str(x.timestamp) for x in e))
            else:
                out.append(str(e.timestamp))
        return out

    def csv_row(self) -> str:
        return ",".join([str(self.detect_ts)] + self.timestamps())


@dataclass
class _Neg:
    pos: int
    kind: str  # middle | leading | trailing | and
    prev: int | None
    next: int | None
    tests: tuple


@dataclass
class Pending:
    """A match waiting for its trailing-negation window to close."""

    match: Match
    deadline: int
    binding: tuple
    guards: tuple  # (neg spec, seq after which a negated event kills the match)
    alive: bool = True


class Finisher:
    """Closes matches: Kleene collection, negation checks, instance ownership."""

    def __init__(self, p: Pattern, history: History):
        self.p = p
        self.history = history
        self.W = p.window
        self.seq = p.op == "SEQ"
        self.n = len(p.positions)
        tests = _pair_tests(p)
        plannable = p.plannable
        self.k = p.kleene
        self.pending: list = []
        if self.k is not None:
            k = self.k
            self.k_tests = tuple((q, tests[(k, q)]) for q in plannable if q != k and (k, q) in tests)
            self.k_before = tuple(q for q in plannable if q < k) if self.seq else ()
            self.k_after = tuple(q for q in plannable if q > k) if self.seq else ()
        self.negs = []
        for q in p.negated:
            qt = tuple((r, tests[(q, r)]) for r in plannable if (q, r) in tests)
            if self.seq:
                prev = max((r for r in plannable if r < q), default=None)
                nxt = min((r for r in plannable if r > q), default=None)
                kind = "middle" if prev is not None and nxt is not None else ("leading" if prev is None else "trailing")
            else:
                prev = nxt = None
                kind = "and"
            self.negs.append(_Neg(q, kind, prev, nxt, qt))
        self.closed_negs = tuple(g for g in self.negs if g.kind != "trailing")
        self.trailing = tuple(g for g in self.negs if g.kind == "trailing")
        self.trailing_by_pos = {}
        for g in self.trailing:
            self.trailing_by_pos.setdefault(g.pos, []).append(g)

    def _k_ok(self, y: Ev, b) -> bool:
        if not y.ok:
            return False
        for q, t in self.k_tests:
            if not t(y, b[q]):
                return False
        return True

    def complete(self, b: tuple, mn: int, cur: Ev, inst, out: list):
        W = self.W
        min_seq = min(e.seq for e in b if e is not None)
        kset = None
        if self.k is not None:
            x = b[self.k]
            lo, hi = -1, _INF
            for q in self.k_before:
                lo = max(lo, b[q].seq)
            for q in self.k_after:
                hi = min(hi, b[q].seq)
            buf = self.history.buffers[self.k]
            i, j = buf.span(lo, hi, cur.ts - W, _INF)
            evs = buf.evs
            ix = bisect_left(buf.seqs, x.seq, i, j)
            for idx in range(ix + 1, j):
                if self._k_ok(evs[idx], b):
                    return  # a later Kleene event closes this set instead
            kset = [y for y in evs[i:ix + 1] if self._k_ok(y, b)]
            min_seq = min(min_seq, kset[0].seq)
            mn = min(mn, kset[0].ts)
        if min_seq < inst.birth or (inst.retire is not None and min_seq >= inst.retire):
            return
        for g in self.closed_negs:
            if self._negated_present(g, b, kset, min_seq, cur):
                return
        events = []
        key = []
        for pos in range(self.n):
            e = b[pos]
            if pos == self.k:
                events.append(tuple(y.event for y in kset))
                key.append(tuple(y.seq for y in kset))
            elif e is None:
                events.append(None)
                key.append(None)
            else:
                events.append(e.event)
                key.append(e.seq)
        m = Match(tuple(events), tuple(key), cur.ts)
        if self.trailing:
            guards = []
            for g in self.trailing:
                after = kset[-1].seq if g.prev == self.k else b[g.prev].seq
                if self._scan(g, b, after, _INF, -_INF):
                    return
                guards.append((g, after))
            self.pending.append(Pending(m, mn + W, b, tuple(guards)))
            return
        out.append(m)

    def _bound_seq(self, b, kset, pos, last: bool) -> int:
        if pos == self.k:
            return kset[-1].seq if last else kset[0].seq
        return b[pos].seq

    def _negated_present(self, g: _Neg, b, kset, min_seq: int, cur: Ev) -> bool:
        if g.kind == "middle":
            return self._scan(g, b, self._bound_seq(b, kset, g.prev, True), self._bound_seq(b, kset, g.next, False), -_INF)
        if g.kind == "leading":
            return self._scan(g, b, -1, self._bound_seq(b, kset, g.next, False), cur.ts - self.W)
        return self._scan(g, b, min_seq, cur.seq, -_INF)

    def _scan(self, g: _Neg, b, lo_seq, hi_seq, min_ts) -> bool:
        buf = self.history.buffers[g.pos]
        i, j = buf.span(lo_seq, hi_seq, min_ts, _INF)
        evs = buf.evs
        for idx in range(i, j):
            y = evs[idx]
            if y.ok and all(t(y, b[r]) for r, t in g.tests):
                return True
        return False

    # -- deferred trailing negation -------------------------------------------

    def release(self, now: int, out: list):
        """Emit pending matches whose negation window closed before ``now``."""
        if not self.pending:
            return
        keep = []
        for pm in self.pending:
            if not pm.alive:
                continue
            if pm.deadline < now:
                out.append(pm.match)
            else:
                keep.append(pm)
        self.pending[:] = keep

    def negated_arrival(self, pos: int, ev: Ev):
        specs = self.trailing_by_pos.get(pos)
        if not specs or not ev.ok or not self.pending:
            return
        for pm in self.pending:
            if not pm.alive or ev.ts > pm.deadline:
                continue
            for g, after in pm.guards:
                if g.pos == pos and ev.seq > after and all(t(ev, pm.binding[r]) for r, t in g.tests):
                    pm.alive = False
                    break

    def flush(self, out: list):
        for pm in self.pending:
            if pm.alive:
                out.append(pm.match)
        self.pending.clear()


class _Instance:
    birth = 0
    retire = None

    def live_partial_matches(self, now: int) -> int:
        raise NotImplementedError


class OrderEvaluator(_Instance):
    """Lazy chain evaluation following the plan order.

    A partial match over the first ``k`` plan types is extended at creation
    from the buffered history of type ``k + 1`` and kept to be extended by
    later arrivals of that type.
    """

    def __init__(self, p: Pattern, plan: OrderPlan, history: History, finisher: Finisher, birth: int = 0):
        self.W = p.window
        self.n = len(p.positions)
        self.history = history
        self.finisher = finisher
        self.birth = birth
        self.retire = None
        self.plan = plan
        seq = p.op == "SEQ"
        tests = _pair_tests(p)
        order = plan.order
        self.m = len(order)
        self.level_of = {t: k for k, t in enumerate(order)}
        self.steps = []
        for k, t in enumerate(order):
            bound = order[:k]
            self.steps.append((
                t,
                tuple((q, tests[(t, q)]) for q in bound if (t, q) in tests),
                tuple(q for q in bound if q < t) if seq else (),
                tuple(q for q in bound if q > t) if seq else (),
            ))
        # A prefix is worth keeping only if a later arrival can still extend it.
        self.store_ok = [True] + [not seq or order[k] > max(order[:k]) for k in range(1, self.m)]
        self.stored = [[] for _ in range(self.m)]
        self.peak = 0

    def process(self, ev: Ev, pos: int, out: list):
        k = self.level_of[pos]
        if k == 0:
            b = [None] * self.n
            b[pos] = ev
            self._grow(tuple(b), ev.ts, ev.ts, 1, ev, out)
            return
        _, tests, _, _ = self.steps[k]
        lim = ev.ts - self.W
        keep = []
        for pm in self.stored[k]:
            b, mn, mx = pm
            if mn < lim:
                continue
            keep.append(pm)
            for q, t in tests:
                if not t(ev, b[q]):
                    break
            else:
                nb = list(b)
                nb[pos] = ev
                self._grow(tuple(nb), mn, ev.ts, k + 1, ev, out)
        self.stored[k] = keep

    def _grow(self, b, mn, mx, k, cur, out):
        if k == self.m:
            self.finisher.complete(b, mn, cur, self, out)
            return
        if self.store_ok[k]:
            self.stored[k].append((b, mn, mx))
        t, tests, before, after = self.steps[k]
        lo = self.birth - 1
        hi = _INF
        for q in before:
            s = b[q].seq
            if s > lo:
                lo = s
        for q in after:
            s = b[q].seq
            if s < hi:
                hi = s
        W = self.W
        buf = self.history.buffers[t]
        i, j = buf.span(lo, hi, mx - W, mn + W)
        evs = buf.evs
        for idx in range(i, j):
            x = evs[idx]
            if not x.ok:
                continue
            for q, test in tests:
                if not test(x, b[q]):
                    break
            else:
                nb = list(b)
                nb[t] = x
                xt = x.ts
                self._grow(tuple(nb), mn if mn < xt else xt, mx if mx > xt else xt, k + 1, cur, out)

    def live_partial_matches(self, now: int) -> int:
        lim = now - self.W
        for k in range(1, self.m):
            self.stored[k] = [pm for pm in self.stored[k] if pm[1] >= lim]
        return sum(len(s) for s in self.stored)

    def stored_partial_matches(self) -> int:
        return sum(len(s) for s in self.stored)

    def oldest_partial_match(self):
        return min((pm[1] for s in self.stored for pm in s), default=None)


class _TNode:
    __slots__ = ("left", "right", "leafset", "parent", "side", "is_root", "stored", "store_ok", "join")

    def __init__(self, left, right, leafset):
        self.left = left
        self.right = right
        self.leafset = leafset
        self.parent = None
        self.side = 0
        self.is_root = False
        self.stored = []
        self.store_ok = False
        self.join = [None, None]


class TreeEvaluator(_Instance):
    """Bottom-up join evaluation of a tree plan.

    Each arrival enters its leaf and is joined with the stored partial
    matches (or buffered leaf events) of the sibling at every ancestor.
    """

    def __init__(self, p: Pattern, plan: TreePlan, history: History, finisher: Finisher, birth: int = 0):
        self.W = p.window
        self.n = len(p.positions)
        self.history = history
        self.finisher = finisher
        self.birth = birth
        self.retire = None
        self.plan = plan
        self.seq = p.op == "SEQ"
        self.tests = _pair_tests(p)
        self.leaf_parent = {}
        self.nodes = []
        self.root_leaf = None
        if isinstance(plan.root, Leaf):
            self.root_leaf = plan.root.type_id
        else:
            root = self._build(plan.root)
            root.is_root = True

    def _build(self, t):
        if isinstance(t, Leaf):
            return t.type_id
        left, right = self._build(t.left), self._build(t.right)
        node = _TNode(left, right, t.leafset)
        self.nodes.append(node)
        for side, child, sib in ((0, left, right), (1, right, left)):
            if isinstance(child, int):
                self.leaf_parent[child] = (node, side)
                cset = frozenset((child,))
            else:
                child.parent, child.side = node, side
                cset = child.leafset
            sset = frozenset((sib,)) if isinstance(sib, int) else sib.leafset
            tests = tuple((a, c, self.tests[(a, c)]) for a in sorted(cset) for c in sorted(sset) if (a, c) in self.tests)
            pairs = tuple((a, c, a < c) for a in sorted(cset) for c in sorted(sset)) if self.seq else ()
            node.join[side] = (sib, tests, pairs)
        return node

    def _finalize_storage(self):
        for node in self.nodes:
            if node.parent is None:
                continue
            sib = node.parent.join[node.side][0]
            sset = frozenset((sib,)) if isinstance(sib, int) else sib.leafset
            node.store_ok = not self.seq or max(sset) > max(node.leafset)

    def process(self, ev: Ev, pos: int, out: list):
        b = [None] * self.n
        b[pos] = ev
        if self.root_leaf is not None:
            self.finisher.complete(tuple(b), ev.ts, ev, self, out)
            return
        node, side = self.leaf_parent[pos]
        self._up(tuple(b), ev.ts, ev.ts, node, side, ev, out)

    def _up(self, b, mn, mx, node, side, cur, out):
        sib, tests, pairs = node.join[side]
        W = self.W
        if isinstance(sib, int):
            lo = self.birth - 1
            hi = _INF
            for a, c, lt in pairs:
                s = b[a].seq
                if lt:
                    if s > lo:
                        lo = s
                elif s < hi:
                    hi = s
            buf = self.history.buffers[sib]
            i, j = buf.span(lo, hi, mx - W, mn + W)
            evs = buf.evs
            for idx in range(i, j):
                x = evs[idx]
                if not x.ok:
                    continue
                for a, c, t in tests:
                    if not t(b[a], x):
                        break
                else:
                    nb = list(b)
                    nb[sib] = x
                    xt = x.ts
                    self._emit(tuple(nb), mn if mn < xt else xt, mx if mx > xt else xt, node, cur, out)
            return
        lim = cur.ts - W
        keep = []
        for pm in sib.stored:
            ob, omn, omx = pm
            if omn < lim:
                continue
            keep.append(pm)
            lo_ts = mn if mn < omn else omn
            hi_ts = mx if mx > omx else omx
            if hi_ts - lo_ts > W:
                continue
            ok = True
            for a, c, lt in pairs:
                if (b[a].seq < ob[c].seq) != lt:
                    ok = False
                    break
            if not ok:
                continue
            for a, c, t in tests:
                if not t(b[a], ob[c]):
                    ok = False
                    break
            if not ok:
                continue
            nb = tuple(x if x is not None else y for x, y in zip(b, ob))
            self._emit(nb, lo_ts, hi_ts, node, cur, out)
        sib.stored = keep

    def _emit(self, b, mn, mx, node, cur, out):
        if node.is_root:
            self.finisher.complete(b, mn, cur, self, out)
            return
        if node.store_ok:
            node.stored.append((b, mn, mx))
        self._up(b, mn, mx, node.parent, node.side, cur, out)

    def live_partial_matches(self, now: int) -> int:
        lim = now - self.W
        for node in self.nodes:
            node.stored = [pm for pm in node.stored if pm[1] >= lim]
        return sum(len(nd.stored) for nd in self.nodes)

    def stored_partial_matches(self) -> int:
        return sum(len(nd.stored) for nd in self.nodes)

    def oldest_partial_match(self):
        return min((pm[1] for nd in self.nodes for pm in nd.stored), default=None)


def make_evaluator(p: Pattern, plan, history: History, finisher: Finisher, birth: int = 0):
    if isinstance(plan, OrderPlan):
        return OrderEvaluator(p, plan, history, finisher, birth)
    if isinstance(plan, TreePlan):
        ev = TreeEvaluator(p, plan, history, finisher, birth)
        ev._finalize_storage()
        return ev
    raise TypeError(f"not a plan: {plan!r}")
