"""Discrete-event run of one scenario.

A lambda transaction goes client -> dispatcher -> computer -> dispatcher ->
client. Each leg is a message through the simulated network; the computer
in the middle is a :class:`SimComputer`. Probe dispatchers additionally
poll every candidate before forwarding.
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from edgesim.core import LambdaRequest, LambdaResponse, ReturnCode, TransactionRecord
from edgesim.events import EventQueue
from edgesim.network import Message, MessageKind, Network, Role
from edgesim.policies import PolicyKind, ProbePolicy, make_policy, rpi_profile
from edgesim.scenario import ClientConfig, Scenario
from edgesim.simcomputer import CapacityError, SimComputer
from edgesim.workloads import (Arrivals, WorkloadSpec, default_daily_profile, default_rate_map,
                               plan_drop, stream)

TRANSACTION_COLUMNS = ("id", "client", "tagged", "parent", "issue_time", "class", "size",
                       "dispatcher", "executor", "return_code", "delay", "tau", "p", "u")
RESOURCE_COLUMNS = ("kind", "id", "bytes", "throughput_bps", "cores", "utilization",
                    "mean_busy_cores", "tagged_executed")


def percentile(samples, q: float) -> float:
    """Nearest-rank percentile: the sorted sample at 1-based rank ceil(q/100 * n)."""
    if not samples:
        raise ValueError("percentile of an empty sample")
    if not 0 < q <= 100:
        raise ValueError(f"q must be in (0, 100], got {q}")
    ordered = sorted(samples)
    # exact decimal arithmetic so that e.g. q=70, n=10 gives rank 7
    rank = math.ceil(Fraction(str(q)) * len(ordered) / 100)
    return ordered[max(rank, 1) - 1]


@dataclass
class Transaction:
    id: int
    client: str
    terminal: str
    dispatcher: str
    request: LambdaRequest
    tagged: bool
    parent: int | None = None
    executor: str | None = None
    code: ReturnCode | None = None
    t_dispatcher: float | None = None
    t_forward: float | None = None
    t_computer: float | None = None
    t_done: float | None = None
    t_back: float | None = None
    t_client: float | None = None
    load: float = 0.0
    processing_time: float = 0.0
    pending: int = 0
    advertised: dict = field(default_factory=dict)

    @property
    def delay(self) -> float | None:
        if self.t_client is None:
            return None
        return self.t_client - self.request.issue_time

    @property
    def legs(self) -> dict[str, float]:
        """Time spent in each stage of a completed transaction."""
        return {
            "uplink": self.t_dispatcher - self.request.issue_time,
            "dispatch": self.t_forward - self.t_dispatcher,
            "to_computer": self.t_computer - self.t_forward,
            "processing": self.t_done - self.t_computer,
            "to_dispatcher": self.t_back - self.t_done,
            "downlink": self.t_client - self.t_back,
        }


@dataclass
class RunResult:
    """Everything measured in one run."""

    scenario: str
    seed: int
    config_hash: str
    config: dict
    window: tuple[float, float]
    transactions: list[Transaction]
    delays: list[float]
    issued: int
    ok: int
    no_destination: int
    dropped: int
    link_bytes: dict
    link_throughput: dict
    total_throughput: float
    utilization: dict
    mean_busy_cores: dict
    tagged_executed: dict
    load_series: list
    events: int
    drop_info: dict | None = None

    def percentile(self, q: float = 90.0) -> float:
        return percentile(self.delays, q) if self.delays else math.nan

    def summary(self) -> dict:
        d = self.delays
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "window": list(self.window),
            "issued": self.issued,
            "ok": self.ok,
            "no_destination": self.no_destination,
            "dropped": self.dropped,
            "delay_samples": len(d),
            "delay_mean": statistics.fmean(d) if d else None,
            "delay_p50": percentile(d, 50) if d else None,
            "delay_p90": percentile(d, 90) if d else None,
            "delay_p99": percentile(d, 99) if d else None,
            "total_throughput_bps": self.total_throughput,
            "utilization": dict(self.utilization),
            "mean_busy_cores": dict(self.mean_busy_cores),
            "tagged_executed": dict(self.tagged_executed),
            "events": self.events,
            "drop": self.drop_info,
            "config": self.config,
        }

    def write(self, out_dir: str, prefix: str = "") -> list[str]:
        """Write ``transactions.csv``, ``resources.csv`` and ``summary.json``."""
        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, prefix + name)
                 for name in ("transactions.csv", "resources.csv", "summary.json")]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRANSACTION_COLUMNS)
            for t in self.transactions:
                ok = t.code is ReturnCode.OK
                w.writerow([t.id, t.client, int(t.tagged), "" if t.parent is None else t.parent,
                            repr(t.request.issue_time), t.request.cls.name, t.request.input_size,
                            t.dispatcher, t.executor or "", t.code.value,
                            repr(t.delay) if ok else "",
                            repr(t.delay - t.processing_time) if ok else "",
                            repr(t.processing_time) if ok else "",
                            repr(t.load) if ok else ""])
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESOURCE_COLUMNS)
            for (a, b), nbytes in self.link_bytes.items():
                w.writerow(["link", f"{a}-{b}", nbytes, repr(self.link_throughput[(a, b)]),
                            "", "", "", ""])
            for node, util in self.utilization.items():
                w.writerow(["computer", node, "", "", self.config_cores(node), repr(util),
                            repr(self.mean_busy_cores[node]), self.tagged_executed.get(node, 0)])
        with open(paths[2], "w") as fh:
            json.dump(self.summary(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return paths

    def config_cores(self, node: str) -> int:
        for c in self.config["computers"]:
            if c["node"] == node:
                return c["cores"]
        return 0


class _Client:
    def __init__(self, cfg: ClientConfig, arrivals: Arrivals, roam_rng):
        self.cfg = cfg
        self.arrivals = arrivals
        self.roam_rng = roam_rng
        terms = cfg.terminals
        self.terminal = roam_rng.choice(terms) if len(terms) > 1 else terms[0]
        self.next_roam = cfg.roam_interval if cfg.roam_interval and len(terms) > 1 else math.inf

    def terminal_at(self, now: float) -> str:
        while now >= self.next_roam:
            self.terminal = self.roam_rng.choice(self.cfg.terminals)
            self.next_roam += self.cfg.roam_interval
        return self.terminal


class Simulation:
    """One run of a scenario with a given seed."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.queue = EventQueue()
        self.window = scenario.window
        self.topology = scenario.topology
        self.network = Network(self.topology, self.queue, *self.window)
        for bg in scenario.background:
            self.network.add_background(bg.a, bg.b, bg.background)
        self.computers = {node: SimComputer(spec, node) for node, spec in scenario.computers.items()}
        self._gen = dict.fromkeys(self.computers, 0)
        index = self.topology.index
        self.candidates = {
            name: sorted((n for n, spec in scenario.computers.items() if spec.offers(name)),
                         key=index)
            for name in scenario.classes}
        self.dispatchers = {}
        self.transactions: list[Transaction] = []
        self.drop_info = None
        self.clients = list(scenario.clients)
        if scenario.drop is not None:
            self.clients += self._drop_clients()
        self._client_state = {}
        self._busy_at = {}
        self.load_series = []

    # -- set-up -------------------------------------------------------------

    def _drop_clients(self) -> list[ClientConfig]:
        drop = self.scenario.drop
        rng = stream(self.seed, "drop")
        rate_map = default_rate_map() if drop.rate_map is None else np.asarray(drop.rate_map, float)
        plan = plan_drop(rng, rate_map, default_daily_profile(), drop.region,
                         drop.sessions_per_unit, self.scenario.duration, drop.session_range,
                         drop.sizes, drop.prefill, drop.period)
        stations = self.topology.meta["base_stations"]
        sectors = self.topology.meta["sectors"]
        clients = []
        for i, s in enumerate(plan.sessions):
            di, dj = s["cell"]
            bs = stations[di * drop.region + dj]
            terminal = f"{bs}s{rng.randint(1, sectors)}"
            wl = WorkloadSpec("Session", drop.cls, (s["size"],), period=drop.period,
                              start=s["start"], stop=s["stop"])
            clients.append(ClientConfig(f"u{i}", wl, (terminal,), tagged=True))
        self.drop_info = {"origin": list(plan.origin), "slot": plan.slot,
                          "sessions": len(plan.sessions), "cell_rates": plan.cell_rates}
        return clients

    def _dispatcher_node(self, client: ClientConfig, terminal: str) -> str:
        if self.scenario.policy is PolicyKind.CENTRALIZED:
            return self.topology.nodes_with_role(Role.ROOT)[0]
        if client.dispatcher is not None:
            return client.dispatcher
        if self.topology.nodes[terminal].role is Role.CLIENT:
            return self.topology.neighbors(terminal)[0]
        return terminal

    def _dispatcher(self, node: str):
        policy = self.dispatchers.get(node)
        if policy is None:
            sc = self.scenario
            policy = make_policy(sc.policy, sc.policy_params, self.topology, node)
            if sc.policy is PolicyKind.RPI:
                for name, cands in self.candidates.items():
                    if cands:
                        policy.set_weights(name, self._rpi_weights(node, name, cands))
            self.dispatchers[node] = policy
        return policy

    def _profile_size(self, cls: str) -> int:
        size = self.scenario.policy_params.get("profile_size")
        if size:
            return int(size)
        sizes = [s for c in self.clients if c.workload.cls == cls for s in c.workload.sizes]
        return int(statistics.median_low(sizes)) if sizes else 1

    def _rpi_weights(self, node: str, cls: str, cands) -> dict[str, float]:
        lam = self.scenario.classes[cls]
        size = self._profile_size(cls)
        req = LambdaRequest(lam, size, "profile", 0.0)
        out = lam.output_size(size)

        def zero_load(k):
            fresh = SimComputer(self.scenario.computers[k], k)
            return (self.topology.idle_delay(size, node, k) + fresh.probe_completion(req, 0.0)
                    + self.topology.idle_delay(out, k, node))

        return rpi_profile(cands, zero_load)

    # -- run ----------------------------------------------------------------

    def run(self) -> RunResult:
        sc = self.scenario
        q = self.queue
        for c in self.clients:
            arrivals = Arrivals(c.workload, sc.duration, stream(self.seed, f"arrivals:{c.id}"),
                                stream(self.seed, f"sizes:{c.id}"))
            state = _Client(c, arrivals, stream(self.seed, f"roam:{c.id}"))
            self._client_state[c.id] = state
            first = arrivals.pop()
            if first is not None:
                q.schedule(first[0], self._issue, state, first[1])
        start, end = self.window
        q.schedule(start, self._snapshot, "start")
        q.schedule(end, self._snapshot, "end")
        if sc.load_sample_interval > 0:
            q.schedule(start, self._sample_load)
        q.run(until=sc.duration + sc.drain)
        return self._collect()

    def _snapshot(self, label: str):
        now = self.queue.now
        for node, comp in self.computers.items():
            comp._advance_to(now)
            self._busy_at[(label, node)] = comp.busy_core_time

    def _sample_load(self):
        now = self.queue.now
        row = {"time": now}
        for node, comp in self.computers.items():
            row[node] = comp.reported_load(now)
        self.load_series.append(row)
        nxt = now + self.scenario.load_sample_interval
        if nxt <= self.window[1]:
            self.queue.schedule(nxt, self._sample_load)

    # transaction legs, in order

    def _issue(self, client: _Client, size: int):
        now = self.queue.now
        nxt = client.arrivals.pop()
        if nxt is not None:
            self.queue.schedule(nxt[0], self._issue, client, nxt[1])
        self._start(client, client.cfg.workload.cls, size, now, None)

    def _start(self, client: _Client, cls: str, size: int, now: float, parent: int | None):
        terminal = client.terminal_at(now)
        dispatcher = self._dispatcher_node(client.cfg, terminal)
        req = LambdaRequest(self.scenario.classes[cls], size, client.cfg.id, now)
        txn = Transaction(len(self.transactions), client.cfg.id, terminal, dispatcher, req,
                          client.cfg.tagged, parent)
        self.transactions.append(txn)
        self.network.send(Message(size, terminal, dispatcher, MessageKind.REQUEST, txn), now,
                          self._at_dispatcher)

    def _at_dispatcher(self, delivery):
        txn = delivery.message.payload
        now = self.queue.now
        txn.t_dispatcher = now
        overhead = self.scenario.dispatch_overhead
        if overhead > 0:
            self.queue.schedule(now + overhead, self._dispatch, txn)
        else:
            self._dispatch(txn)

    def _dispatch(self, txn: Transaction):
        now = self.queue.now
        policy = self._dispatcher(txn.dispatcher)
        cands = self.candidates[txn.request.cls.name]
        if not cands:
            txn.code = ReturnCode.NO_DESTINATION
            self.network.send(Message(self.scenario.control_size, txn.dispatcher, txn.terminal,
                                      MessageKind.RESPONSE, txn), now, self._at_client)
            return
        if policy.needs_probe and len(cands) > 1:
            txn.pending = len(cands)
            for k in cands:
                self.network.send(Message(policy.probe_size, txn.dispatcher, k, MessageKind.PROBE,
                                          (txn, k)), now, self._probe_at_computer)
            return
        self._forward(txn, policy.choose(txn.request, cands, now))

    def _probe_at_computer(self, delivery):
        txn, k = delivery.message.payload
        now = self.queue.now
        try:
            t = self.computers[k].probe_completion(txn.request, now)
        except CapacityError:
            t = math.inf
        size = self._dispatcher(txn.dispatcher).probe_size
        self.network.send(Message(size, k, txn.dispatcher, MessageKind.PROBE_REPLY, (txn, k, t)),
                          now, self._probe_reply)

    def _probe_reply(self, delivery):
        txn, k, t = delivery.message.payload
        txn.advertised[k] = t
        txn.pending -= 1
        if txn.pending == 0:
            cands = self.candidates[txn.request.cls.name]
            self._forward(txn, ProbePolicy.choose_from([(c, txn.advertised[c]) for c in cands]))

    def _forward(self, txn: Transaction, k: str):
        now = self.queue.now
        txn.t_forward = now
        txn.executor = k
        self.network.send(Message(txn.request.input_size, txn.dispatcher, k,
                                  MessageKind.REQUEST, txn), now, self._at_computer)

    def _at_computer(self, delivery):
        txn = delivery.message.payload
        now = self.queue.now
        comp = self.computers[txn.executor]
        txn.t_computer = now
        # load as seen just before this task starts
        txn.load = comp.reported_load(now)
        try:
            comp.submit(txn.request, now, payload=txn)
        except CapacityError:
            txn.code = ReturnCode.DROPPED
            return
        self._service(txn.executor)

    def _service(self, node: str):
        now = self.queue.now
        comp = self.computers[node]
        for task in comp.advance(now):
            self._completed(node, task)
        self._gen[node] += 1
        t = comp.next_completion()
        if t < math.inf:
            self.queue.schedule(max(t, now), self._wake, node, self._gen[node])

    def _wake(self, node: str, gen: int):
        if gen == self._gen[node]:
            self._service(node)

    def _completed(self, node: str, task):
        txn = task.payload
        now = self.queue.now
        txn.t_done = task.completion_time
        txn.processing_time = task.processing_time
        out = txn.request.cls.output_size(txn.request.input_size)
        self.network.send(Message(out, node, txn.dispatcher, MessageKind.RESPONSE, txn), now,
                          self._back_at_dispatcher)

    def _back_at_dispatcher(self, delivery):
        txn = delivery.message.payload
        now = self.queue.now
        txn.t_back = now
        response = LambdaResponse(ReturnCode.OK, delivery.message.size, txn.executor,
                                  txn.processing_time, txn.load)
        # the dispatcher times the round trip it can see: forward to response
        record = TransactionRecord(txn.request, response, now - txn.t_forward)
        self._dispatcher(txn.dispatcher).on_response(record, now)
        self.network.send(Message(delivery.message.size, txn.dispatcher, txn.terminal,
                                  MessageKind.RESPONSE, txn), now, self._at_client)

    def _at_client(self, delivery):
        txn = delivery.message.payload
        now = self.queue.now
        txn.t_client = now
        if txn.code is None:
            txn.code = ReturnCode.OK
            chain = self.clients_by_id(txn.client).workload.chain
            if chain and txn.parent is None and now < self.scenario.duration:
                self._start(self._client_state[txn.client], chain["class"], int(chain["size"]),
                            now, txn.id)

    def clients_by_id(self, cid: str) -> ClientConfig:
        return self._client_state[cid].cfg

    # -- results ------------------------------------------------------------

    def _collect(self) -> RunResult:
        for txn in self.transactions:
            if txn.code is None or (txn.code is ReturnCode.OK and txn.t_client is None):
                txn.code = ReturnCode.DROPPED
        counts = {code: 0 for code in ReturnCode}
        for txn in self.transactions:
            counts[txn.code] += 1
        start, end = self.window
        delays = [t.delay for t in self.transactions
                  if t.tagged and t.code is ReturnCode.OK and start <= t.request.issue_time <= end]
        span = end - start
        util, busy = {}, {}
        for node, spec in self.scenario.computers.items():
            b = self._busy_at.get(("end", node), 0.0) - self._busy_at.get(("start", node), 0.0)
            busy[node] = b / span
            util[node] = b / (spec.cores * span)
        executed = dict.fromkeys(self.computers, 0)
        for t in self.transactions:
            if t.tagged and t.code is ReturnCode.OK and start <= t.request.issue_time <= end:
                executed[t.executor] += 1
        link_bytes = self.network.link_bytes()
        per_link, total = self.network.throughput(start, end)
        return RunResult(
            scenario=self.scenario.name, seed=self.seed,
            config_hash=self.scenario.config_hash(), config=self._echo(),
            window=self.window, transactions=self.transactions, delays=delays,
            issued=len(self.transactions), ok=counts[ReturnCode.OK],
            no_destination=counts[ReturnCode.NO_DESTINATION], dropped=counts[ReturnCode.DROPPED],
            link_bytes=link_bytes, link_throughput=per_link, total_throughput=total,
            utilization=util, mean_busy_cores=busy, tagged_executed=executed,
            load_series=self.load_series, events=self.queue.processed,
            drop_info=self.drop_info)

    def _echo(self) -> dict:
        cfg = self.scenario.to_dict()
        cfg["seed"] = self.seed
        return cfg


def run(scenario: Scenario, seed: int | None = None) -> RunResult:
    """Simulate ``scenario``; the same (scenario, seed) always gives the same result."""
    return Simulation(scenario, seed).run()


def derive_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th replication or drop of a batch started from ``seed``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


def _run_job(job):
    scenario, seed, reduce = job
    result = run(scenario, seed)
    return reduce(result) if reduce else result


def run_many(jobs, parallel: int = 1, reduce=None) -> list:
    """Run ``(scenario, seed)`` pairs, optionally in worker processes; keeps input order.

    ``reduce`` (a picklable top-level function) shrinks each result before it
    is sent back, which matters for large transaction lists.
    """
    jobs = [(sc, seed, reduce) for sc, seed in jobs]
    if parallel <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_job, jobs))


def monte_carlo_drops(scenario: Scenario, drop_count: int, seed: int | None = None,
                      parallel: int = 1, reduce=None) -> list:
    """Independent drops of a scenario with a ``drop`` section, one result per drop."""
    if scenario.drop is None:
        raise ValueError("scenario has no drop section")
    if drop_count < 1:
        raise ValueError("need at least one drop")
    base = scenario.seed if seed is None else seed
    return run_many([(scenario, derive_seed(base, i)) for i in range(drop_count)],
                    parallel, reduce)
