"""Dispatch policies.

Every policy picks one computer out of an ordered candidate list (all the
computers offering the requested class, lowest id first) and may learn from
the responses that come back through its dispatcher.
"""

from __future__ import annotations

import enum
import math
import statistics
from collections.abc import Callable, Sequence

from edgesim.core import LambdaRequest, TransactionRecord
from edgesim.estimator import EstimatorConfig, EstimatorState, NoDestinationError, quantize
from edgesim.network import Topology


class PolicyKind(enum.Enum):
    EST = "Est"
    PROBE = "Probe"
    RPI = "RPI"
    RR = "RR"
    LEGACY = "Legacy"
    CENTRALIZED = "Centralized"

    @classmethod
    def parse(cls, name: str) -> PolicyKind:
        for kind in cls:
            if kind.value.lower() == name.lower():
                return kind
        raise ValueError(f"unknown policy {name!r}; expected one of "
                         f"{', '.join(k.value for k in cls)}")


class Policy:
    kind: PolicyKind
    needs_probe = False

    def choose(self, request: LambdaRequest, candidates: Sequence[str], now: float) -> str:
        raise NotImplementedError

    def on_response(self, record: TransactionRecord, now: float):
        pass


def _require(candidates, request):
    if not candidates:
        raise NoDestinationError(request.cls.name)


class EstPolicy(Policy):
    """Estimated shortest delay: latency regression plus per-bucket processing regression.

    While an exploratory request to a FRESH computer is outstanding, the
    same (computer, class, bucket) is not explored again; otherwise every
    request arriving before the first response would pile onto it.
    """

    kind = PolicyKind.EST

    def __init__(self, config: EstimatorConfig | None = None):
        self.state = EstimatorState(config or EstimatorConfig())
        # (class, bucket) -> computer -> outstanding exploratory requests
        self._exploring: dict[tuple, dict] = {}

    def choose(self, request, candidates, now):
        key = (request.cls.name, quantize(request.input_size, self.state.config.buckets))
        pending = self._exploring.setdefault(key, {})
        k, explored = self.state.choose(candidates, request.cls.name, request.input_size, now,
                                        pending)
        if explored:
            pending[k] = pending.get(k, 0) + 1
        return k

    def on_response(self, record, now):
        self.state.house_keeping(record, now)
        key = (record.request.cls.name,
               quantize(record.request.input_size, self.state.config.buckets))
        pending = self._exploring.get(key)
        k = record.response.executor_id
        if pending and k in pending:
            pending[k] -= 1
            if pending[k] <= 0:
                del pending[k]

    def estimate(self, k: str, request: LambdaRequest, now: float):
        return self.state.score(k, request.cls.name, request.input_size, now)


class CentralizedPolicy(EstPolicy):
    """Est run by the single dispatcher at the root of the topology."""

    kind = PolicyKind.CENTRALIZED


class ProbePolicy(Policy):
    """Poll every candidate for its exact completion time and take the smallest.

    The engine carries out the polling; :meth:`choose_from` receives the
    advertised delays in candidate order.
    """

    kind = PolicyKind.PROBE
    needs_probe = True

    def __init__(self, probe_size: int = 100):
        if probe_size <= 0:
            raise ValueError("probe size must be positive")
        self.probe_size = probe_size

    def choose(self, request, candidates, now):
        _require(candidates, request)
        if len(candidates) == 1:
            return candidates[0]
        raise RuntimeError("Probe needs advertised times; use choose_from")

    # advertised times closer than this (relative) count as equal
    TIE_RTOL = 1e-9

    @classmethod
    def choose_from(cls, advertised: Sequence[tuple[str, float]]) -> str:
        """Smallest advertised completion time; near-equal values go to the earliest."""
        best, best_t = None, math.inf
        for k, t in advertised:
            margin = cls.TIE_RTOL * best_t if math.isfinite(best_t) else 0.0
            if best is None or t < best_t - margin:
                best, best_t = k, t
        if best is None:
            raise NoDestinationError("no probe replies")
        return best


def rpi_profile(candidates: Sequence[str], zero_load_time: Callable[[str], float]) -> dict[str, float]:
    """Weights inversely proportional to each computer's zero-load response time.

    The fastest computer gets weight 1.
    """
    times = {k: zero_load_time(k) for k in candidates}
    for k, t in times.items():
        if not t > 0:
            raise ValueError(f"zero-load time of {k} must be positive, got {t}")
    fastest = min(times.values())
    return {k: fastest / t for k, t in times.items()}


class SmoothWRR:
    """Smooth weighted round robin (deterministic, interleaves heavy and light)."""

    def __init__(self, weights: dict[str, float]):
        if not weights or any(w <= 0 for w in weights.values()):
            raise ValueError(f"weights must be positive: {weights}")
        self.weights = dict(weights)
        self.current = {k: 0.0 for k in weights}
        self.total = sum(weights.values())

    def next(self) -> str:
        best = None
        for k, w in self.weights.items():
            self.current[k] += w
            if best is None or self.current[k] > self.current[best]:
                best = k
        self.current[best] -= self.total
        return best


class RPIPolicy(Policy):
    """Weighted round robin with weights from an initial zero-load profiling run."""

    kind = PolicyKind.RPI

    def __init__(self, weights: dict[str, dict[str, float]] | None = None):
        # class name -> computer -> weight
        self.weights = weights or {}
        self._schedulers: dict[tuple, SmoothWRR] = {}

    def set_weights(self, cls: str, weights: dict[str, float]):
        self.weights[cls] = dict(weights)
        self._schedulers = {k: v for k, v in self._schedulers.items() if k[0] != cls}

    def choose(self, request, candidates, now):
        _require(candidates, request)
        cls = request.cls.name
        key = (cls, tuple(candidates))
        wrr = self._schedulers.get(key)
        if wrr is None:
            table = self.weights.get(cls)
            if table is None:
                raise KeyError(f"RPI has no profile for class {cls}")
            wrr = self._schedulers[key] = SmoothWRR({k: table[k] for k in candidates})
        return wrr.next()


class RRPolicy(Policy):
    """Round robin over the computers whose recent response time is in the lower half.

    Keeps an exponential moving average of the delay observed by this
    dispatcher for each computer; a computer without history counts as fast.
    """

    kind = PolicyKind.RR

    def __init__(self, alpha: float = 0.2):
        if not 0 < alpha <= 1:
            raise ValueError("EMA factor must be in (0, 1]")
        self.alpha = alpha
        self.ema: dict[str, float] = {}
        self._last: dict[tuple, str] = {}

    def lower_category(self, candidates: Sequence[str]) -> list[str]:
        known = [self.ema[k] for k in candidates if k in self.ema]
        if not known:
            return list(candidates)
        median = statistics.median(known)
        return [k for k in candidates if k not in self.ema or self.ema[k] <= median]

    def choose(self, request, candidates, now):
        _require(candidates, request)
        lower = set(self.lower_category(candidates))
        key = tuple(candidates)
        last = self._last.get(key)
        start = candidates.index(last) + 1 if last in candidates else 0
        n = len(candidates)
        for i in range(n):
            k = candidates[(start + i) % n]
            if k in lower:
                self._last[key] = k
                return k
        raise AssertionError("lower category is never empty")

    def on_response(self, record, now):
        k = record.response.executor_id
        prev = self.ema.get(k)
        self.ema[k] = record.delay if prev is None else (
            self.alpha * record.delay + (1 - self.alpha) * prev)


class LegacyPolicy(Policy):
    """Closest computer in hops from the dispatcher; stateless."""

    kind = PolicyKind.LEGACY

    def __init__(self, topology: Topology, node: str):
        self.topology = topology
        self.node = node

    def choose(self, request, candidates, now):
        _require(candidates, request)
        return min(candidates, key=lambda k: (self.topology.hops(self.node, k),
                                              candidates.index(k)))


def make_policy(kind: PolicyKind, params: dict, topology: Topology, node: str) -> Policy:
    """Instantiate the policy of one dispatcher at ``node``."""
    if kind in (PolicyKind.EST, PolicyKind.CENTRALIZED):
        cfg = EstimatorConfig(
            latency_window=params.get("latency_window", 100),
            ptime_window=params.get("ptime_window", 100),
            buckets=tuple(params.get("buckets", (1000.0,))),
            latency_lifetime=params.get("latency_lifetime", 10.0),
            ptime_lifetime=params.get("ptime_lifetime", 10.0),
        )
        return EstPolicy(cfg) if kind is PolicyKind.EST else CentralizedPolicy(cfg)
    if kind is PolicyKind.PROBE:
        return ProbePolicy(params.get("probe_size", 100))
    if kind is PolicyKind.RPI:
        return RPIPolicy()
    if kind is PolicyKind.RR:
        return RRPolicy(params.get("ema_alpha", 0.2))
    if kind is PolicyKind.LEGACY:
        return LegacyPolicy(topology, node)
    raise ValueError(kind)
