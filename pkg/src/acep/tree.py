"""Dynamic-programming generation of tree-based plans (ZStream cost model).

Sequences are planned over contiguous spans of the pattern order; conjunctions
over all leaf subsets. Cardinality depends only on the leafset, so a node's
cost is ``Cost(L) + Cost(R) + Card(L ∪ R)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .conditions import DecidingCondition, EvalContext, PlanTrace
from .greedy import PlanningError
from .model import Leaf, Node, Pattern, StatSnapshot, TreePlan

__all__ = [
    "cardinality",
    "cost",
    "TreeModel",
    "TreeCoster",
    "TreeCostExpr",
    "build_tree_plan",
    "tree_plan_cost",
]


# ---------------------------------------------------------------------------
# Standalone cost model over explicit trees
# ---------------------------------------------------------------------------


def _card_tree(t, s: StatSnapshot, seq_factor: float) -> float:
    if isinstance(t, Leaf):
        return s.rates[t.type_id] * s.sel[t.type_id][t.type_id]
    return cardinality(t.left, t.right, s, seq_factor)


def cardinality(l, r, s: StatSnapshot, seq_factor: float = 1.0) -> float:
    """``Card(L) * Card(R) * SEL(L, R)``, times ``seq_factor`` for sequence nodes."""
    if l.leafset & r.leafset:
        raise PlanningError("cardinality of overlapping subtrees is undefined")
    v = _card_tree(l, s, seq_factor) * _card_tree(r, s, seq_factor)
    for i in sorted(l.leafset):
        for j in sorted(r.leafset):
            v *= s.sel[i][j]
    return v * seq_factor


def cost(t, s: StatSnapshot, seq_factor: float = 1.0) -> float:
    if isinstance(t, Leaf):
        return s.rates[t.type_id]
    return cost(t.left, s, seq_factor) + cost(t.right, s, seq_factor) + cardinality(t.left, t.right, s, seq_factor)


# ---------------------------------------------------------------------------
# Memoized DP shared by the planner and invariant verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeModel:
    leaves: tuple
    seq: bool
    seq_factor: float
    names: tuple

    @classmethod
    def for_pattern(cls, p: Pattern, seq_factor: float = 1.0) -> "TreeModel":
        return cls(p.plannable, p.op == "SEQ", float(seq_factor), p.type_names)


@dataclass
class Cell:
    cost: float
    tree: object
    count: int
    candidates: list = field(default_factory=list)  # (split key, cost, tree), in key order


def _split_key(left: frozenset) -> tuple:
    return (len(left), tuple(sorted(left)))


class TreeCoster:
    """Best subtree per leafset under one snapshot, computed on demand."""

    def __init__(self, model: TreeModel, s: StatSnapshot):
        self.model = model
        self.rates = s.rates
        self.sel = s.sel
        self.cells: dict = {}
        self._cards: dict = {}
        self._tree_costs: dict = {}
        self._pos = {t: k for k, t in enumerate(model.leaves)}

    def card(self, leafset: frozenset) -> float:
        v = self._cards.get(leafset)
        if v is None:
            ids = sorted(leafset)
            rates, sel = self.rates, self.sel
            v = 1.0
            for i in ids:
                v *= rates[i] * sel[i][i]
            for a in range(len(ids)):
                row = sel[ids[a]]
                for b in range(a + 1, len(ids)):
                    v *= row[ids[b]]
            if self.model.seq and len(ids) > 1:
                v *= self.model.seq_factor ** (len(ids) - 1)
            self._cards[leafset] = v
        return v

    def splits(self, leafset: frozenset):
        """Candidate (left, right) splits in tie-break order."""
        if self.model.seq:
            ids = sorted(leafset, key=self._pos.__getitem__)
            for k in range(1, len(ids)):
                yield frozenset(ids[:k]), frozenset(ids[k:])
        else:
            ids = sorted(leafset)
            head, rest = ids[0], ids[1:]
            for size in range(0, len(rest)):
                for combo in combinations(rest, size):
                    left = frozenset((head,) + combo)
                    yield left, leafset - left

    def best(self, leafset: frozenset) -> Cell:
        cell = self.cells.get(leafset)
        if cell is not None:
            return cell
        if len(leafset) == 1:
            (i,) = leafset
            cell = Cell(self.rates[i], Leaf(i), 1)
        else:
            card = self.card(leafset)
            best_cost = None
            best_tree = None
            count = 0
            cands = []
            for left, right in self.splits(leafset):
                lc, rc = self.best(left), self.best(right)
                c = lc.cost + rc.cost + card
                tree = Node(lc.tree, rc.tree)
                cands.append((_split_key(left), c, tree))
                count += lc.count * rc.count
                if best_cost is None or c < best_cost:
                    best_cost, best_tree = c, tree
            cell = Cell(best_cost, best_tree, count, cands)
        self.cells[leafset] = cell
        return cell

    def tree_cost(self, t) -> float:
        """Cost of a fixed tree shape under this snapshot (same arithmetic as the DP)."""
        if isinstance(t, Leaf):
            return self.rates[t.type_id]
        v = self._tree_costs.get(t)
        if v is None:
            v = self.tree_cost(t.left) + self.tree_cost(t.right) + self.card(t.leafset)
            self._tree_costs[t] = v
        return v

    def lower_bound(self, leafset: frozenset) -> float:
        cell = self.cells.get(leafset)
        if cell is not None:
            return cell.cost
        v = sum(self.rates[i] for i in leafset)
        if len(leafset) > 1:
            v += self.card(leafset)
        return v

    def all_leafsets(self):
        """Every DP cell in evaluation order: by size, then span start or lexicographically."""
        leaves = self.model.leaves
        n = len(leaves)
        for size in range(1, n + 1):
            if self.model.seq:
                for start in range(0, n - size + 1):
                    yield frozenset(leaves[start:start + size])
            else:
                for combo in combinations(sorted(leaves), size):
                    yield frozenset(combo)


def _coster(ctx: EvalContext, model: TreeModel) -> TreeCoster:
    key = ("tree-coster", id(model))
    c = ctx.cache.get(key)
    if c is None:
        c = ctx.cache[key] = TreeCoster(model, ctx.snapshot)
    return c


@dataclass(frozen=True, eq=False)
class TreeCostExpr:
    """Cost of the candidate tree ``tree`` for its leafset.

    ``frozen`` holds (cost, cardinality) of both children at planning time,
    used only in frozen mode and only for internal children.
    """

    tree: Node
    model: TreeModel
    frozen: tuple

    def value(self, ctx) -> float:
        if not isinstance(ctx, EvalContext):
            ctx = EvalContext(ctx)
        if ctx.tree_mode == "frozen":
            return self._frozen_value(ctx.snapshot)
        c = _coster(ctx, self.model)
        t = self.tree
        return c.best(t.left.leafset).cost + c.best(t.right.leafset).cost + c.card(t.leafset)

    def bounds(self, ctx) -> tuple:
        if ctx.tree_mode == "frozen":
            v = self._frozen_value(ctx.snapshot)
            return v, v
        c = _coster(ctx, self.model)
        t = self.tree
        card = c.card(t.leafset)
        lo = c.lower_bound(t.left.leafset) + c.lower_bound(t.right.leafset) + card
        hi = c.tree_cost(t.left) + c.tree_cost(t.right) + card
        return lo, hi

    def _frozen_value(self, s: StatSnapshot) -> float:
        (lcost, lcard), (rcost, rcard) = self.frozen
        sides = []
        for child, fc, fk in ((self.tree.left, lcost, lcard), (self.tree.right, rcost, rcard)):
            if isinstance(child, Leaf):
                i = child.type_id
                sides.append((s.rates[i], s.rates[i] * s.sel[i][i]))
            else:
                sides.append((fc, fk))
        v = sides[0][1] * sides[1][1]
        for i in sorted(self.tree.left.leafset):
            for j in sorted(self.tree.right.leafset):
                v *= s.sel[i][j]
        if self.model.seq:
            v *= self.model.seq_factor
        return sides[0][0] + sides[1][0] + v

    def describe(self) -> str:
        return f"Cost{self.tree.render(self.model.names)}"


def _check(p: Pattern, s: StatSnapshot):
    if s.n != len(p.positions):
        raise PlanningError(f"snapshot has {s.n} types but pattern has {len(p.positions)}")


def plan_tree_dp(p: Pattern, s: StatSnapshot, seq_factor: float = 1.0) -> TreeCoster:
    """Run the full DP eagerly and return the populated table."""
    _check(p, s)
    coster = TreeCoster(TreeModel.for_pattern(p, seq_factor), s)
    for leafset in coster.all_leafsets():
        coster.best(leafset)
    return coster


def build_tree_plan(p: Pattern, s: StatSnapshot, seq_factor: float = 1.0):
    """Return ``(TreePlan, PlanTrace)``.

    For every DP cell the winning split is compared against each other split;
    each comparison becomes a deciding condition of the winning node, with a
    block index when that node belongs to the returned plan.
    """
    coster = plan_tree_dp(p, s, seq_factor)
    model = coster.model
    full = frozenset(model.leaves)
    plan = TreePlan(coster.best(full).tree, p.type_names, p.negated)
    block_of = plan.block_index()
    records = []
    for leafset in coster.all_leafsets():
        cell = coster.cells[leafset]
        if len(leafset) < 2:
            continue
        win_key, win_cost, win_tree = next(c for c in cell.candidates if c[2] == cell.tree)
        w_expr = _expr(win_tree, model, coster)
        block = block_of.get(leafset)
        losers = sorted((c for c in cell.candidates if c[0] != win_key), key=lambda c: (c[1], c[0]))
        for key, c_cost, c_tree in losers:
            records.append(
                DecidingCondition(
                    block=block,
                    lhs=w_expr,
                    rhs=_expr(c_tree, model, coster),
                    lhs_value=win_cost,
                    rhs_value=c_cost,
                    strict=win_key > key,
                    block_key=(win_tree.left.leafset, win_tree.right.leafset),
                )
            )
    return plan, PlanTrace(tuple(records), len(plan.nodes))


def _expr(tree: Node, model: TreeModel, coster: TreeCoster) -> TreeCostExpr:
    frozen = []
    for child in (tree.left, tree.right):
        cell = coster.best(child.leafset)
        frozen.append((cell.cost, coster.card(child.leafset)))
    return TreeCostExpr(tree, model, tuple(frozen))


def tree_plan_cost(plan: TreePlan, p: Pattern, s: StatSnapshot, seq_factor: float = 1.0) -> float:
    return TreeCoster(TreeModel.for_pattern(p, seq_factor), s).tree_cost(plan.root)
