"""SASE-style pattern language.

    PATTERN SEQ(A a, ~B b, C+ c) WHERE (a.id = b.id) AND (c.v < 3) WITHIN 10 minutes

Operators: SEQ, AND, OR (of SEQ/AND sub-patterns). Negation is written
``~T v``, ``!T v``, ``NOT T v`` or ``NOT(T v)``; Kleene closure ``T+ v``,
``T* v`` or ``KL(T v)``. The WHERE clause is a conjunction of binary
comparisons, optionally parenthesized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import FLIPPED, Pattern, PatternError, Position, Predicate

__all__ = ["PatternSyntaxError", "parse_pattern", "render_pattern"]


class PatternSyntaxError(PatternError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<op><=|>=|!=|<>|==|&&|=|<|>|≤|≥|≠|∧)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),.~+*!;])
    """,
    re.VERBOSE,
)

_OP_ALIASES = {"==": "=", "<>": "!=", "≤": "<=", "≥": ">=", "≠": "!="}

_UNITS = {
    "ms": 1, "msec": 1, "millisecond": 1, "milliseconds": 1,
    "s": 1000, "sec": 1000, "secs": 1000, "second": 1000, "seconds": 1000,
    "m": 60_000, "min": 60_000, "mins": 60_000, "minute": 60_000, "minutes": 60_000,
    "h": 3_600_000, "hr": 3_600_000, "hrs": 3_600_000, "hour": 3_600_000, "hours": 3_600_000,
}


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PatternSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    # -- token helpers -----------------------------------------------------

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def is_kw(self, *words, tok=None) -> bool:
        tok = tok or self.cur
        return tok.kind == "ident" and tok.text.upper() in words

    def expect_kw(self, word: str) -> _Tok:
        if not self.is_kw(word):
            raise PatternSyntaxError(f"unexpected {self.cur.text or 'end of input'!r}", self.cur.offset, word)
        return self.advance()

    def expect_punct(self, ch: str) -> _Tok:
        if not (self.cur.kind == "punct" and self.cur.text == ch):
            raise PatternSyntaxError(f"unexpected {self.cur.text or 'end of input'!r}", self.cur.offset, repr(ch))
        return self.advance()

    def is_punct(self, ch: str) -> bool:
        return self.cur.kind == "punct" and self.cur.text == ch

    def advance(self) -> _Tok:
        tok = self.cur
        self.i += 1
        return tok

    def ident(self, what: str) -> _Tok:
        if self.cur.kind != "ident":
            raise PatternSyntaxError(f"unexpected {self.cur.text or 'end of input'!r}", self.cur.offset, what)
        return self.advance()

    # -- grammar -----------------------------------------------------------

    def parse(self) -> Pattern:
        self.expect_kw("PATTERN")
        tree = self.expr()
        raw_preds = []
        if self.is_kw("WHERE"):
            self.advance()
            self.conjunction(raw_preds)
        self.expect_kw("WITHIN")
        if self.cur.kind != "num":
            raise PatternSyntaxError("unexpected token", self.cur.offset, "window length")
        num_tok = self.advance()
        amount = float(num_tok.text)
        unit_tok = self.ident("time unit")
        unit = _UNITS.get(unit_tok.text.lower())
        if unit is None:
            raise PatternSyntaxError(f"unknown time unit {unit_tok.text!r}", unit_tok.offset, "ms/s/m/h")
        window = amount * unit
        if window <= 0:
            raise PatternError(f"window must be positive, got {num_tok.text} {unit_tok.text}")
        if window != int(window):
            raise PatternError(f"window must be a whole number of milliseconds, got {window}")
        while self.is_punct(".") or self.is_punct(";"):
            self.advance()
        if self.cur.kind != "eof":
            raise PatternSyntaxError(f"unexpected {self.cur.text!r}", self.cur.offset, "end of input")
        return _build(tree, raw_preds, int(window))

    def expr(self):
        tok = self.cur
        if self.is_kw("SEQ", "AND"):
            op = self.advance().text.upper()
            self.expect_punct("(")
            items = [self.item()]
            while self.is_punct(","):
                self.advance()
                items.append(self.item())
            self.expect_punct(")")
            return (op, items, tok.offset)
        if self.is_kw("OR"):
            self.advance()
            self.expect_punct("(")
            subs = [self.expr()]
            while self.is_punct(","):
                self.advance()
                subs.append(self.expr())
            self.expect_punct(")")
            for s in subs:
                if s[0] == "OR":
                    raise PatternSyntaxError("nested OR is not supported", s[2])
            return ("OR", subs, tok.offset)
        raise PatternSyntaxError(f"unexpected {tok.text or 'end of input'!r}", tok.offset, "SEQ, AND or OR")

    def item(self) -> Position:
        negated = False
        if self.cur.kind == "punct" and self.cur.text in ("~", "!"):
            self.advance()
            negated = True
        elif self.is_kw("NOT") and self.peek().kind in ("ident", "punct"):
            self.advance()
            negated = True
        if self.is_kw("KL") and self.peek().kind == "punct" and self.peek().text == "(":
            self.advance()
            self.expect_punct("(")
            pos = self.core()
            self.expect_punct(")")
            return Position(pos.type_name, pos.var, negated, True)
        if self.is_punct("("):
            self.advance()
            pos = self.item()
            self.expect_punct(")")
            return Position(pos.type_name, pos.var, negated or pos.negated, pos.kleene)
        pos = self.core()
        return Position(pos.type_name, pos.var, negated, pos.kleene)

    def core(self) -> Position:
        type_tok = self.ident("event type")
        kleene = False
        if self.cur.kind == "punct" and self.cur.text in ("+", "*"):
            self.advance()
            kleene = True
        var_tok = self.ident("variable name")
        return Position(type_tok.text, var_tok.text, False, kleene)

    def conjunction(self, out: list):
        self.term(out)
        while self.is_kw("AND") or (self.cur.kind == "op" and self.cur.text in ("&&", "∧")):
            self.advance()
            self.term(out)

    def term(self, out: list):
        if self.is_punct("("):
            self.advance()
            self.conjunction(out)
            self.expect_punct(")")
            return
        left = self.operand()
        if self.cur.kind != "op" or self.cur.text in ("&&", "∧"):
            raise PatternSyntaxError(f"unexpected {self.cur.text or 'end of input'!r}", self.cur.offset, "comparison operator")
        op_tok = self.advance()
        right = self.operand()
        out.append((left, _OP_ALIASES.get(op_tok.text, op_tok.text), right, op_tok.offset))

    def operand(self):
        tok = self.cur
        if tok.kind == "num":
            self.advance()
            return float(tok.text)
        if tok.kind == "ident":
            self.advance()
            self.expect_punct(".")
            attr = self.ident("attribute name")
            return (tok.text, attr.text, tok.offset)
        raise PatternSyntaxError(f"unexpected {tok.text or 'end of input'!r}", tok.offset, "operand")


def _build(tree, raw_preds, window: int) -> Pattern:
    op, items, _ = tree
    if op == "OR":
        groups = [(sub[0], sub[1]) for sub in items]
    else:
        groups = [(op, items)]
    var_branch = {}
    for b, (_, positions) in enumerate(groups):
        for k, p in enumerate(positions):
            if p.var in var_branch:
                raise PatternError(f"duplicate variable {p.var!r}")
            var_branch[p.var] = (b, k)
    per_branch = [[] for _ in groups]
    for left, cmp, right, offset in raw_preds:
        if not isinstance(left, tuple):
            if not isinstance(right, tuple):
                raise PatternSyntaxError("comparison between two constants", offset)
            left, right, cmp = right, left, FLIPPED[cmp]
        refs = [left] + ([right] if isinstance(right, tuple) else [])
        for var, _, off in refs:
            if var not in var_branch:
                raise PatternSyntaxError(f"unknown variable {var!r} in WHERE clause", off)
        branches = {var_branch[v][0] for v, _, _ in refs}
        if len(branches) > 1:
            raise PatternError("a predicate cannot relate variables of different OR branches")
        b = branches.pop()
        lhs = (var_branch[left[0]][1], left[1])
        rhs = (var_branch[right[0]][1], right[1]) if isinstance(right, tuple) else float(right)
        per_branch[b].append(Predicate(lhs, cmp, rhs))
    simple = [
        Pattern(gop, tuple(positions), tuple(per_branch[b]), window)
        for b, (gop, positions) in enumerate(groups)
    ]
    if op == "OR":
        return Pattern("OR", window=window, branches=tuple(simple))
    return simple[0]


def parse_pattern(text: str) -> Pattern:
    """Parse pattern text into a :class:`Pattern`."""
    return _Parser(text).parse()


def _render_position(p: Position) -> str:
    return f"{'~' if p.negated else ''}{p.type_name}{'+' if p.kleene else ''} {p.var}"


def _render_window(ms: int) -> str:
    for unit, size in (("hours", 3_600_000), ("minutes", 60_000), ("seconds", 1000)):
        if ms % size == 0:
            return f"{ms // size} {unit}"
    return f"{ms} ms"


def _render_operand(pattern: Pattern, operand) -> str:
    if isinstance(operand, tuple):
        return f"{pattern.positions[operand[0]].var}.{operand[1]}"
    return repr(float(operand))


def render_pattern(p: Pattern) -> str:
    """Canonical text form; parses back to an equal pattern."""
    branches = p.simple_branches()
    bodies = [f"{b.op}({', '.join(_render_position(pos) for pos in b.positions)})" for b in branches]
    body = bodies[0] if p.op != "OR" else f"OR({', '.join(bodies)})"
    preds = [
        f"{_render_operand(b, pr.left)} {pr.op} {_render_operand(b, pr.right)}"
        for b in branches
        for pr in b.predicates
    ]
    where = f" WHERE {' AND '.join(preds)}" if preds else ""
    return f"PATTERN {body}{where} WITHIN {_render_window(p.window)}"
