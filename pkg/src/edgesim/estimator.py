"""Dispatcher-side delay estimation.

Each dispatcher keeps, per computer, a moving window of (input size,
communication latency) samples and, per (computer, class, size bucket), a
moving window of (reported load, processing time) samples. Both are fitted
with ordinary least squares; the estimated delay of a job on a computer is
the latency line at the job's input size plus the processing line at the
computer's last reported load.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Container, Hashable, Iterable, NamedTuple, Sequence

from edgesim.core import TransactionRecord, derive_comm_latency


class LinearFit(NamedTuple):
    intercept: float
    slope: float

    def __call__(self, x: float) -> float:
        return self.intercept + self.slope * x


class _Fresh:
    """Sentinel score for a computer without usable measurements."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FRESH"

    def __reduce__(self):
        return (_Fresh, ())


FRESH = _Fresh()


class NoDestinationError(LookupError):
    """No candidate computer offers the requested lambda class."""


class MovingWindow:
    """Bounded FIFO of (x, y, stamp) samples with incremental OLS statistics.

    Means and co-moments are updated Welford-style on insertion and removal,
    and rebuilt from scratch every ``capacity`` updates so that rounding
    cannot accumulate.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.samples: deque[tuple[float, float, float]] = deque()
        self._n = 0
        self._mx = self._my = self._sxx = self._sxy = 0.0
        self._updates = 0

    def __len__(self):
        return len(self.samples)

    def __bool__(self):
        return bool(self.samples)

    def add(self, x: float, y: float, stamp: float):
        if len(self.samples) == self.capacity:
            self._remove_oldest()
        self.samples.append((x, y, stamp))
        self._n += 1
        dx = x - self._mx
        self._mx += dx / self._n
        self._my += (y - self._my) / self._n
        self._sxx += dx * (x - self._mx)
        self._sxy += dx * (y - self._my)
        self._tick()

    def _remove_oldest(self):
        x, y, _ = self.samples.popleft()
        self._n -= 1
        if self._n == 0:
            self._mx = self._my = self._sxx = self._sxy = 0.0
            return
        mx_before, my_before = self._mx, self._my
        self._mx -= (x - self._mx) / self._n
        self._my -= (y - self._my) / self._n
        self._sxx -= (x - self._mx) * (x - mx_before)
        self._sxy -= (x - self._mx) * (y - my_before)
        self._tick()

    def _tick(self):
        self._updates += 1
        if self._updates >= self.capacity:
            self._rebuild()

    def _rebuild(self):
        self._updates = 0
        n = len(self.samples)
        self._n = n
        if n == 0:
            self._mx = self._my = self._sxx = self._sxy = 0.0
            return
        mx = math.fsum(s[0] for s in self.samples) / n
        my = math.fsum(s[1] for s in self.samples) / n
        self._mx, self._my = mx, my
        self._sxx = math.fsum((s[0] - mx) ** 2 for s in self.samples)
        self._sxy = math.fsum((s[0] - mx) * (s[1] - my) for s in self.samples)

    def expire(self, cutoff: float) -> int:
        """Drop samples stamped strictly before ``cutoff``; return how many went."""
        dropped = 0
        while self.samples and self.samples[0][2] < cutoff:
            self._remove_oldest()
            dropped += 1
        return dropped

    def fit(self) -> LinearFit | None:
        """Least-squares line through the samples; ``None`` when empty."""
        n = self._n
        if n == 0:
            return None
        # a spread this small relative to the magnitude of x is rounding noise
        if n == 1 or self._sxx <= 1e-20 * n * max(self._mx * self._mx, 1e-12):
            return LinearFit(self._my, 0.0)
        slope = self._sxy / self._sxx
        return LinearFit(self._my - slope * self._mx, slope)


def fit(window: MovingWindow) -> LinearFit | None:
    return window.fit()


def quantize(size: float, buckets: Sequence[float]) -> float:
    """Closest bucket to ``size``; a tie between two buckets goes to the smaller."""
    if not buckets:
        raise ValueError("bucket set is empty")
    i = bisect.bisect_left(buckets, size)
    if i == 0:
        return buckets[0]
    if i == len(buckets):
        return buckets[-1]
    lo, hi = buckets[i - 1], buckets[i]
    return lo if size - lo <= hi - size else hi


@dataclass
class EstimatorConfig:
    latency_window: int = 100
    ptime_window: int = 100
    buckets: tuple[float, ...] = (1000.0,)
    latency_lifetime: float = 10.0
    ptime_lifetime: float = 10.0

    def __post_init__(self):
        self.buckets = tuple(sorted(float(b) for b in self.buckets))
        if not self.buckets:
            raise ValueError("bucket set must be non-empty")
        if any(b2 <= b1 for b1, b2 in zip(self.buckets, self.buckets[1:])):
            raise ValueError(f"buckets must be strictly increasing: {self.buckets}")
        if self.latency_window < 1 or self.ptime_window < 1:
            raise ValueError("window sizes must be >= 1")
        if self.latency_lifetime <= 0 or self.ptime_lifetime <= 0:
            raise ValueError("lifetimes must be positive")


@dataclass
class EstimatorState:
    """Everything one dispatcher knows about the computers it has used."""

    config: EstimatorConfig = field(default_factory=EstimatorConfig)
    latency_windows: dict = field(default_factory=dict)
    ptime_windows: dict = field(default_factory=dict)
    last_load: dict = field(default_factory=dict)
    # number of candidate scores evaluated; instrumentation for scaling checks
    score_ops: int = 0

    def _latency_window(self, k: Hashable) -> MovingWindow:
        w = self.latency_windows.get(k)
        if w is None:
            w = self.latency_windows[k] = MovingWindow(self.config.latency_window)
        return w

    def _ptime_window(self, key: tuple) -> MovingWindow:
        w = self.ptime_windows.get(key)
        if w is None:
            w = self.ptime_windows[key] = MovingWindow(self.config.ptime_window)
        return w

    def house_keeping(self, record: TransactionRecord, now: float):
        """Fold one successful transaction into the estimates."""
        k = record.response.executor_id
        if k is None:
            raise ValueError("record has no executor")
        tau = derive_comm_latency(record)
        size = record.request.input_size
        self._latency_window(k).add(size, tau, now)
        bucket = quantize(size, self.config.buckets)
        load = record.response.reported_load
        self._ptime_window((k, record.request.cls.name, bucket)).add(
            load, record.response.processing_time, now)
        self.last_load[k] = load

    def purge(self, now: float):
        """Discard every sample older than its lifetime."""
        self._expire(self.latency_windows.values(), now - self.config.latency_lifetime)
        self._expire(self.ptime_windows.values(), now - self.config.ptime_lifetime)

    @staticmethod
    def _expire(windows: Iterable[MovingWindow], cutoff: float):
        for w in windows:
            w.expire(cutoff)

    def is_fresh(self, k: Hashable) -> bool:
        """True when nothing at all is known about computer ``k``."""
        if self.latency_windows.get(k):
            return False
        return not any(w for key, w in self.ptime_windows.items() if key[0] == k)

    def score(self, k: Hashable, cls: str, size: float, now: float):
        """Estimated delay of a ``cls`` job of ``size`` bytes on ``k``, or FRESH."""
        self.score_ops += 1
        cfg = self.config
        lat = self.latency_windows.get(k)
        if lat is not None:
            lat.expire(now - cfg.latency_lifetime)
        bucket = quantize(size, cfg.buckets)
        pt = self.ptime_windows.get((k, cls, bucket))
        if pt is not None:
            pt.expire(now - cfg.ptime_lifetime)
        if not lat or not pt:
            return FRESH
        tau = max(0.0, lat.fit()(size))
        ptime = max(0.0, pt.fit()(self.last_load.get(k, 0.0)))
        return tau + ptime

    def select(self, candidates: Sequence[Hashable], cls: str, size: float, now: float,
               exploring: Container = frozenset()):
        """Pick the destination: first FRESH candidate if any, else the lowest score.

        ``candidates`` must be ordered by id; ties go to the earliest.
        Candidates in ``exploring`` are not picked for being FRESH (an
        exploratory request to them is still outstanding); they are picked
        only when no candidate has a score.
        """
        return self.choose(candidates, cls, size, now, exploring)[0]

    def choose(self, candidates: Sequence[Hashable], cls: str, size: float, now: float,
               exploring: Container = frozenset()) -> tuple[Hashable, bool]:
        """Like :meth:`select`, also telling whether the pick was an exploration."""
        if not candidates:
            raise NoDestinationError(cls)
        best, best_score = None, math.inf
        for k in candidates:
            s = self.score(k, cls, size, now)
            if s is FRESH:
                if k not in exploring:
                    return k, True
                continue
            if s < best_score:
                best, best_score = k, s
        if best is None:
            return candidates[0], False
        return best, False

    def sample_count(self, k: Hashable) -> int:
        n = len(self.latency_windows.get(k, ()))
        return n + sum(len(w) for key, w in self.ptime_windows.items() if key[0] == k)
