"""Request arrival processes and Monte Carlo session drops."""

from __future__ import annotations

import math
import random
import zlib
from dataclasses import dataclass, field

import numpy as np

WORKLOAD_KINDS = ("Poisson", "UniformInterval", "Session")


def stream(seed: int, name: str) -> random.Random:
    """Independent generator for one stochastic source of a run."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, zlib.crc32(name.encode())])
    return random.Random(int.from_bytes(ss.generate_state(4).tobytes(), "little"))


@dataclass
class WorkloadSpec:
    kind: str
    cls: str
    sizes: tuple[int, ...]
    rate: float | None = None
    mean_interval: float | None = None
    period: float = 0.033
    start: float = 0.0
    stop: float | None = None
    # optional follow-up lambda issued when the first one returns
    chain: dict | None = None

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"workload kind must be one of {WORKLOAD_KINDS}, got {self.kind!r}")
        self.sizes = tuple(int(s) for s in self.sizes)
        if not self.sizes or any(s <= 0 for s in self.sizes):
            raise ValueError(f"workload sizes must be a non-empty list of positive sizes: {self.sizes}")
        if self.kind == "Poisson" and not (self.rate and self.rate > 0):
            raise ValueError("Poisson workload needs rate > 0")
        if self.kind == "UniformInterval" and not (self.mean_interval and self.mean_interval > 0):
            raise ValueError("UniformInterval workload needs mean_interval > 0")
        if self.kind == "Session" and not self.period > 0:
            raise ValueError("Session workload needs period > 0")
        if self.stop is not None and self.stop < self.start:
            raise ValueError("workload stops before it starts")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "class": self.cls, "sizes": list(self.sizes),
               "start": self.start, "stop": self.stop}
        if self.kind == "Poisson":
            out["rate"] = self.rate
        elif self.kind == "UniformInterval":
            out["mean_interval"] = self.mean_interval
        else:
            out["period"] = self.period
        if self.chain:
            out["chain"] = dict(self.chain)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> WorkloadSpec:
        return cls(kind=d["kind"], cls=d["class"], sizes=tuple(d["sizes"]),
                   rate=d.get("rate"), mean_interval=d.get("mean_interval"),
                   period=d.get("period", 0.033), start=d.get("start", 0.0),
                   stop=d.get("stop"), chain=d.get("chain"))


class Arrivals:
    """Yields (issue time, input size) pairs for one client."""

    def __init__(self, spec: WorkloadSpec, stop: float, times: random.Random, sizes: random.Random):
        self.spec = spec
        self.stop = stop if spec.stop is None else min(stop, spec.stop)
        self._times = times
        self._sizes = sizes
        self._session_size = sizes.choice(spec.sizes) if spec.kind == "Session" else None
        self._count = 0
        self._next = self._first()

    def _gap(self) -> float:
        if self.spec.kind == "Poisson":
            return self._times.expovariate(self.spec.rate)
        return self._times.uniform(0.0, 2.0 * self.spec.mean_interval)

    def _first(self) -> float:
        if self.spec.kind == "Session":
            return self.spec.start
        return self.spec.start + self._gap()

    def pop(self) -> tuple[float, int] | None:
        t = self._next
        if t >= self.stop:
            return None
        self._count += 1
        if self._session_size is not None:
            # multiply rather than accumulate so long sessions keep their phase
            self._next = self.spec.start + self._count * self.spec.period
            return t, self._session_size
        self._next = t + self._gap()
        return t, self._sizes.choice(self.spec.sizes)


def default_rate_map(rows: int = 10, cols: int = 10, seed: int = 2015) -> np.ndarray:
    """Synthetic per-cell activity: smooth hot spots over a lognormal floor, mean 1."""
    rng = np.random.default_rng(seed)
    base = rng.lognormal(mean=0.0, sigma=0.8, size=(rows, cols))
    yy, xx = np.mgrid[0:rows, 0:cols]
    for _ in range(3):
        cy, cx = rng.uniform(0, rows), rng.uniform(0, cols)
        base += 4.0 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 4.0)
    return base / base.mean()


def default_daily_profile(slots: int = 144) -> np.ndarray:
    """Relative activity per 10-minute slot: quiet night, busy afternoon, mean 1."""
    hours = np.arange(slots) * 24.0 / slots
    profile = 0.15 + np.clip(np.sin((hours - 6.0) / 16.0 * math.pi), 0.0, None) ** 1.5
    return profile / profile.mean()


@dataclass
class DropPlan:
    """Where and when one Monte Carlo snapshot is taken, and who shows up."""

    origin: tuple[int, int]
    slot: int
    cell_rates: list[list[float]]
    sessions: list[dict] = field(default_factory=list)


def plan_drop(rng: random.Random, rate_map: np.ndarray, profile: np.ndarray, region: int,
              sessions_per_unit: float, duration: float, session_range=(30.0, 60.0),
              sizes=tuple(range(5000, 15001, 1000)), prefill: bool = True,
              period: float = 0.033) -> DropPlan:
    """Draw location, time of day and session arrivals for one drop.

    Sessions in cell (i, j) arrive as a Poisson process of intensity
    ``sessions_per_unit * activity * profile[slot]`` per second. With
    ``prefill`` the system starts in steady state: sessions already in
    progress at time 0 are drawn with their residual durations and a random
    phase within one request ``period``.
    """
    rate_map = np.asarray(rate_map, float)
    rows, cols = rate_map.shape
    if rows < region or cols < region:
        raise ValueError(f"rate map {rows}x{cols} smaller than the {region}x{region} region")
    i0 = rng.randrange(rows - region + 1)
    j0 = rng.randrange(cols - region + 1)
    slot = rng.randrange(len(profile))
    lo, hi = session_range
    cell_rates = [[sessions_per_unit * float(rate_map[i0 + a, j0 + b]) * float(profile[slot])
                   for b in range(region)] for a in range(region)]
    sessions = []
    for di in range(region):
        for dj in range(region):
            lam = cell_rates[di][dj]
            cell = (di, dj)
            if lam <= 0:
                continue
            if prefill:
                # in-progress sessions: Poisson count, length-biased residual time
                n0 = _poisson(rng, lam * (lo + hi) / 2.0)
                for _ in range(n0):
                    length = _length_biased(rng, lo, hi)
                    start = rng.uniform(0.0, period)
                    stop = min(duration, max(start, rng.uniform(0.0, length)))
                    sessions.append(dict(cell=cell, start=start, stop=stop,
                                         size=rng.choice(sizes)))
            t = rng.expovariate(lam)
            while t < duration:
                length = rng.uniform(lo, hi)
                sessions.append(dict(cell=cell, start=t, stop=min(duration, t + length),
                                     size=rng.choice(sizes)))
                t += rng.expovariate(lam)
    return DropPlan((i0, j0), slot, cell_rates, sessions)


def _poisson(rng: random.Random, mean: float) -> int:
    # inversion by sequential search; means here are small
    limit = math.exp(-mean)
    k, p = 0, rng.random()
    acc = limit
    while p > acc:
        k += 1
        limit *= mean / k
        acc += limit
        if k > 10_000:
            break
    return k


def _length_biased(rng: random.Random, lo: float, hi: float) -> float:
    """Length of the session covering a fixed instant when lengths are U(lo, hi)."""
    # density proportional to x on [lo, hi]
    u = rng.random()
    return math.sqrt(lo * lo + u * (hi * hi - lo * lo))
