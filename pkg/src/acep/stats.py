"""Sliding-window estimation of arrival rates and predicate selectivities."""

from __future__ import annotations

import random
from collections import deque

from .model import Event, Pattern, StatSnapshot, compile_pair_test

__all__ = ["StatCollector"]


class _Windowed:
    """Per-bucket counters with a running total over the sliding window."""

    __slots__ = ("buckets", "totals")

    def __init__(self, width: int):
        self.buckets = deque()  # [bucket index, c0, c1, ...]
        self.totals = [0] * width

    def add(self, bucket: int, *amounts):
        if self.buckets and self.buckets[-1][0] == bucket:
            row = self.buckets[-1]
        else:
            row = [bucket] + [0] * len(self.totals)
            self.buckets.append(row)
        for k, a in enumerate(amounts):
            row[k + 1] += a
            self.totals[k] += a

    def expire(self, first_bucket: int):
        b = self.buckets
        while b and b[0][0] < first_bucket:
            row = b.popleft()
            for k in range(len(self.totals)):
                self.totals[k] -= row[k + 1]


class StatCollector:
    """Online statistics for one SEQ/AND pattern.

    Rates come from per-bucket event counters; selectivities from testing each
    new event against a few events sampled from the counterpart type's
    reservoir, so estimates do not depend on the plan in use.
    """

    def __init__(
        self,
        pattern: Pattern,
        window_ms: int | None = None,
        reservoir: int = 64,
        samples: int = 4,
        min_samples: int = 20,
        bucket_ms: int = 1000,
        seed: int = 0,
    ):
        self.pattern = pattern
        self.n = len(pattern.positions)
        self.window_ms = int(window_ms if window_ms is not None else pattern.window * 10)
        if self.window_ms <= 0 or bucket_ms <= 0:
            raise ValueError("statistics window and bucket width must be positive")
        self.reservoir_size = reservoir
        self.samples = samples
        self.min_samples = min_samples
        self.bucket_ms = bucket_ms
        self._rng = random.Random(seed)
        self._index = {nm: i for i, nm in enumerate(pattern.type_names)}
        self._counts = [_Windowed(1) for _ in range(self.n)]
        self._reservoirs = [[] for _ in range(self.n)]
        # Lower bound on the oldest timestamp held by each reservoir.
        self._res_min = [None] * self.n
        self._seen = [0] * self.n
        self._pairs = {}
        self._partners = [[] for _ in range(self.n)]
        self._unary = [None] * self.n
        for (i, j), preds in pattern.pair_predicates().items():
            if i == j:
                self._unary[i] = (compile_pair_test(preds, i, i), _Windowed(2))
            else:
                counter = _Windowed(2)
                self._pairs[(i, j)] = counter
                self._partners[i].append((j, compile_pair_test(preds, i, j), counter))
                self._partners[j].append((i, _swap(compile_pair_test(preds, i, j)), counter))
        self._confident = {}
        self.last_ts = None
        self.rejected = 0
        self.observed = 0

    def _first_bucket(self, now: int) -> int:
        # Buckets starting before now - W may hold events older than W.
        return -((self.window_ms - now) // self.bucket_ms)

    def observe(self, e: Event) -> bool:
        """Fold one event into the statistics. Returns False if rejected."""
        i = self._index.get(e.type)
        if i is None:
            return False
        ts = e.timestamp
        if self.last_ts is not None and ts < self.last_ts:
            self.rejected += 1
            return False
        self.last_ts = ts
        self.observed += 1
        bucket = ts // self.bucket_ms
        first = self._first_bucket(ts)
        counts = self._counts[i]
        counts.expire(first)
        counts.add(bucket, 1)

        horizon = ts - self.window_ms
        unary = self._unary[i]
        if unary is not None:
            test, counter = unary
            counter.expire(first)
            counter.add(bucket, 1, 1 if test(e, e) else 0)
        for j, test, counter in self._partners[i]:
            res = self._live_reservoir(j, horizon)
            if not res:
                continue
            picked = res if len(res) <= self.samples else self._rng.sample(res, self.samples)
            ok = 0
            for other in picked:
                if test(e, other):
                    ok += 1
            counter.expire(first)
            counter.add(bucket, len(picked), ok)

        res = self._live_reservoir(i, horizon)
        self._seen[i] += 1
        if not res:
            self._res_min[i] = ts
        if len(res) < self.reservoir_size:
            res.append(e)
        else:
            k = self._rng.randrange(self._seen[i])
            if k < self.reservoir_size:
                res[k] = e
        return True

    def _live_reservoir(self, j: int, horizon: int) -> list:
        res = self._reservoirs[j]
        lo = self._res_min[j]
        if res and lo < horizon:
            res[:] = [ev for ev in res if ev.timestamp >= horizon]
            self._res_min[j] = min((ev.timestamp for ev in res), default=None)
            # Keep the sample uniform over the window rather than all history.
            self._seen[j] = min(self._seen[j], max(self._counts[j].totals[0], len(res)))
        return res

    def snapshot(self, now: int | None = None) -> StatSnapshot:
        if now is None:
            now = self.last_ts if self.last_ts is not None else 0
        first = self._first_bucket(now)
        span_s = (now - first * self.bucket_ms) / 1000.0
        rates = []
        for c in self._counts:
            c.expire(first)
            rates.append(c.totals[0] / span_s if span_s > 0 else 0.0)
        sel = [[1.0] * self.n for _ in range(self.n)]
        for i, unary in enumerate(self._unary):
            if unary is not None:
                sel[i][i] = self._estimate((i, i), unary[1], first)
        for key, counter in self._pairs.items():
            i, j = key
            sel[i][j] = sel[j][i] = self._estimate(key, counter, first)
        return StatSnapshot(tuple(rates), tuple(map(tuple, sel)), now)

    def _estimate(self, key, counter: _Windowed, first: int) -> float:
        counter.expire(first)
        tried, ok = counter.totals
        if tried >= self.min_samples:
            value = ok / tried
            self._confident[key] = value
            return value
        return self._confident.get(key, 1.0)

    def pair_counts(self, i: int, j: int) -> tuple:
        """(tried, satisfied) currently inside the window for a predicate pair."""
        key = (min(i, j), max(i, j))
        counter = self._unary[i][1] if i == j else self._pairs[key]
        return tuple(counter.totals)


def _swap(test):
    return lambda a, b: test(b, a)
