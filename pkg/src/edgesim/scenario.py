"""Scenario description: what to simulate, parsed from and echoed to JSON.

Every section is validated before a run starts; errors name the offending
field. :meth:`Scenario.to_dict` returns the fully resolved configuration
(defaults filled in), which is enough to repeat a run exactly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from edgesim.core import LambdaClass
from edgesim.network import (Background, Role, Topology, build_clique, build_dumbbell_het,
                             build_fat_tree)
from edgesim.policies import PolicyKind
from edgesim.simcomputer import ComputerSpec, ContainerSpec
from edgesim.workloads import WorkloadSpec

BUILDERS = {
    "clique": build_clique,
    "fat_tree": build_fat_tree,
    "dumbbell_het": build_dumbbell_het,
}


class ConfigError(ValueError):
    """Invalid scenario; the message starts with the path of the bad field."""


def _num(value, path: str, *, minimum: float | None = None, positive: bool = False,
         allow_inf: bool = False) -> float:
    if value is None and allow_inf:
        return math.inf
    if isinstance(value, str) and allow_inf and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(f"{path}: must be finite, got {value}")
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be > 0, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _json_num(x: float):
    return "inf" if math.isinf(x) else x


@dataclass
class ClientConfig:
    id: str
    workload: WorkloadSpec
    # access nodes the client may send from; more than one means it roams
    terminals: tuple[str, ...] = ()
    dispatcher: str | None = None
    tagged: bool = False
    roam_interval: float | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "terminals": list(self.terminals), "dispatcher": self.dispatcher,
                "tagged": self.tagged, "roam_interval": self.roam_interval,
                "workload": self.workload.to_dict()}


@dataclass
class DropConfig:
    """Monte Carlo drop: sessions appear on base stations of a fat tree."""

    cls: str
    sizes: tuple[int, ...] = tuple(range(5000, 15001, 1000))
    sessions_per_unit: float = 0.1
    region: int = 3
    session_range: tuple[float, float] = (30.0, 60.0)
    period: float = 0.033
    rate_map: list | None = None  # None: bundled synthetic map
    prefill: bool = True

    def to_dict(self) -> dict:
        return {"class": self.cls, "sizes": list(self.sizes),
                "sessions_per_unit": self.sessions_per_unit, "region": self.region,
                "session_range": list(self.session_range), "period": self.period,
                "rate_map": self.rate_map, "prefill": self.prefill}


@dataclass
class BackgroundConfig:
    a: str
    b: str
    background: Background

    def to_dict(self) -> dict:
        bg = self.background
        return {"a": self.a, "b": self.b, "fraction": bg.fraction, "on": bg.on,
                "period": bg.period, "start": bg.start}


@dataclass
class Scenario:
    name: str
    topology_config: dict
    topology: Topology
    classes: dict[str, LambdaClass]
    computers: dict[str, ComputerSpec]
    policy: PolicyKind
    policy_params: dict
    clients: list[ClientConfig]
    duration: float
    warmup: float = 0.1
    drain: float = 5.0
    seed: int = 1
    dispatch_overhead: float = 0.0
    load_sample_interval: float = 1.0
    control_size: int = 100
    background: list[BackgroundConfig] = field(default_factory=list)
    drop: DropConfig | None = None

    @property
    def window(self) -> tuple[float, float]:
        """Measurement interval: after warm-up until issuing stops."""
        return self.warmup * self.duration, self.duration

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        comps = []
        for node, spec in self.computers.items():
            comps.append({
                "node": node, "cores": spec.cores, "core_speed": spec.core_speed,
                "memory": _json_num(spec.memory), "load_window": spec.load_window,
                "containers": [{"class": c.cls, "workers": c.workers,
                                "ops_offset": c.ops_offset, "ops_slope": c.ops_slope,
                                "mem_offset": c.mem_offset, "mem_slope": c.mem_slope}
                               for c in spec.containers]})
        return {
            "name": self.name,
            "duration": self.duration,
            "warmup": self.warmup,
            "drain": self.drain,
            "seed": self.seed,
            "dispatch_overhead": self.dispatch_overhead,
            "load_sample_interval": self.load_sample_interval,
            "control_size": self.control_size,
            "topology": copy.deepcopy(self.topology_config),
            "classes": [{"name": c.name, "output_ratio": c.output_ratio}
                        for c in self.classes.values()],
            "computers": comps,
            "policy": {"kind": self.policy.value, "params": dict(self.policy_params)},
            "clients": [c.to_dict() for c in self.clients],
            "background": [b.to_dict() for b in self.background],
            "drop": self.drop.to_dict() if self.drop else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **changes) -> Scenario:
        """Re-parse the echoed configuration with top-level fields overridden."""
        d = self.to_dict()
        for key, value in changes.items():
            if key == "policy":
                d["policy"] = value if isinstance(value, dict) else {
                    "kind": value, "params": d["policy"]["params"]}
            else:
                d[key] = value
        return Scenario.from_dict(d)

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<file>: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        if not isinstance(data, dict):
            raise ConfigError("<root>: expected a JSON object")
        known = {"name", "duration", "warmup", "drain", "seed", "dispatch_overhead",
                 "load_sample_interval", "control_size", "topology", "classes", "computers",
                 "policy", "clients", "background", "drop"}
        for key in data:
            if key not in known:
                raise ConfigError(f"{key}: unknown section")
        for key in ("duration", "topology", "classes", "computers", "policy"):
            if key not in data:
                raise ConfigError(f"{key}: missing")

        duration = _num(data["duration"], "duration", positive=True)
        warmup = _num(data.get("warmup", 0.1), "warmup", minimum=0.0)
        if warmup >= 1.0:
            raise ConfigError(f"warmup: fraction of duration must be < 1, got {warmup}")
        drain = _num(data.get("drain", 5.0), "drain", minimum=0.0)
        seed = data.get("seed", 1)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
        overhead = _num(data.get("dispatch_overhead", 0.0), "dispatch_overhead", minimum=0.0)
        sample = _num(data.get("load_sample_interval", 1.0), "load_sample_interval", minimum=0.0)
        control = int(_num(data.get("control_size", 100), "control_size", positive=True))

        topo_cfg = copy.deepcopy(data["topology"])
        topology = _build_topology(topo_cfg)

        classes = {}
        for i, c in enumerate(data["classes"]):
            path = f"classes[{i}]"
            name = c.get("name")
            if not isinstance(name, str) or not name:
                raise ConfigError(f"{path}.name: expected a non-empty string")
            if name in classes:
                raise ConfigError(f"{path}.name: duplicate class {name!r}")
            ratio = _num(c.get("output_ratio", 1.0), f"{path}.output_ratio", minimum=0.0)
            classes[name] = LambdaClass(name, ratio)

        computers = {}
        for i, c in enumerate(data["computers"]):
            path = f"computers[{i}]"
            node = c.get("node")
            if node not in topology.nodes:
                raise ConfigError(f"{path}.node: unknown node {node!r}")
            if node in computers:
                raise ConfigError(f"{path}.node: two computers on {node!r}")
            containers = []
            for j, ct in enumerate(c.get("containers", [])):
                cp = f"{path}.containers[{j}]"
                cname = ct.get("class")
                if cname not in classes:
                    raise ConfigError(f"{cp}.class: unknown class {cname!r}")
                try:
                    containers.append(ContainerSpec(
                        cname, int(ct.get("workers", 1)),
                        _num(ct.get("ops_offset", 0.0), f"{cp}.ops_offset", minimum=0.0),
                        _num(ct.get("ops_slope", 0.0), f"{cp}.ops_slope", minimum=0.0),
                        _num(ct.get("mem_offset", 0.0), f"{cp}.mem_offset", minimum=0.0),
                        _num(ct.get("mem_slope", 0.0), f"{cp}.mem_slope", minimum=0.0)))
                except ValueError as exc:
                    if isinstance(exc, ConfigError):
                        raise
                    raise ConfigError(f"{cp}: {exc}") from None
            try:
                computers[node] = ComputerSpec(
                    cores=int(_num(c.get("cores", 1), f"{path}.cores", positive=True)),
                    core_speed=_num(c.get("core_speed", 1e9), f"{path}.core_speed", positive=True),
                    memory=_num(c.get("memory"), f"{path}.memory", positive=True, allow_inf=True),
                    containers=tuple(containers),
                    load_window=_num(c.get("load_window", 1.0), f"{path}.load_window",
                                     positive=True))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}: {exc}") from None

        pol = data["policy"]
        if isinstance(pol, str):
            pol = {"kind": pol}
        try:
            kind = PolicyKind.parse(str(pol.get("kind")))
        except ValueError as exc:
            raise ConfigError(f"policy.kind: {exc}") from None
        params = dict(pol.get("params", {}))
        _check_policy_params(kind, params, topology)

        clients = []
        seen = set()
        for i, c in enumerate(data.get("clients", [])):
            client = _parse_client(c, f"clients[{i}]", topology, classes, computers, kind)
            if client.id in seen:
                raise ConfigError(f"clients[{i}].id: duplicate client {client.id!r}")
            seen.add(client.id)
            clients.append(client)

        background = []
        for i, b in enumerate(data.get("background", [])):
            path = f"background[{i}]"
            a, bnode = b.get("a"), b.get("b")
            if (a, bnode) not in topology.links and (bnode, a) not in topology.links:
                raise ConfigError(f"{path}: no link between {a!r} and {bnode!r}")
            try:
                bg = Background(
                    fraction=_num(b.get("fraction", 0.8), f"{path}.fraction", minimum=0.0),
                    on=_num(b.get("on", 3.0), f"{path}.on", minimum=0.0),
                    period=_num(b.get("period", 5.0), f"{path}.period", positive=True),
                    start=_num(b.get("start", 0.0), f"{path}.start", minimum=0.0))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}: {exc}") from None
            background.append(BackgroundConfig(a, bnode, bg))

        drop = None
        if data.get("drop") is not None:
            drop = _parse_drop(data["drop"], topology, classes)

        return cls(
            name=str(data.get("name", "scenario")), topology_config=topo_cfg,
            topology=topology, classes=classes, computers=computers, policy=kind,
            policy_params=params, clients=clients, duration=duration, warmup=warmup,
            drain=drain, seed=seed, dispatch_overhead=overhead, load_sample_interval=sample,
            control_size=control, background=background, drop=drop)


def _build_topology(cfg: dict) -> Topology:
    if not isinstance(cfg, dict):
        raise ConfigError("topology: expected an object")
    try:
        if "builder" in cfg:
            builder = BUILDERS.get(cfg["builder"])
            if builder is None:
                raise ConfigError(f"topology.builder: unknown builder {cfg['builder']!r}; "
                                  f"expected one of {', '.join(BUILDERS)}")
            topo = builder(**cfg.get("params", {}))
        else:
            topo = Topology.from_dict(cfg)
        for i, t in enumerate(cfg.get("terminals", [])):
            if t.get("to") not in topo.nodes:
                raise ConfigError(f"topology.terminals[{i}].to: unknown node {t.get('to')!r}")
            topo.attach(t["id"], t["to"], t.get("capacity", topo.meta.get("access_capacity", 25e6)),
                        t.get("latency", topo.meta.get("access_latency", 100e-6)))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"topology: {exc}") from None
    if not topo.is_connected():
        raise ConfigError("topology: graph is not connected")
    return topo


def _check_policy_params(kind: PolicyKind, params: dict, topology: Topology):
    allowed = {
        PolicyKind.EST: {"latency_window", "ptime_window", "buckets", "latency_lifetime",
                         "ptime_lifetime"},
        PolicyKind.PROBE: {"probe_size"},
        PolicyKind.RPI: {"profile_size"},
        PolicyKind.RR: {"ema_alpha"},
        PolicyKind.LEGACY: set(),
    }
    allowed[PolicyKind.CENTRALIZED] = allowed[PolicyKind.EST]
    for key in params:
        if key not in allowed[kind]:
            raise ConfigError(f"policy.params.{key}: not a parameter of {kind.value}")
    if kind is PolicyKind.CENTRALIZED and len(topology.nodes_with_role(Role.ROOT)) != 1:
        raise ConfigError("policy.kind: Centralized needs exactly one root node")
    buckets = params.get("buckets")
    if buckets is not None:
        if not buckets or any(b2 <= b1 for b1, b2 in zip(buckets, buckets[1:])):
            raise ConfigError("policy.params.buckets: must be non-empty and strictly increasing")
    for key in ("latency_lifetime", "ptime_lifetime"):
        if key in params:
            params[key] = _num(params[key], f"policy.params.{key}", positive=True, allow_inf=True)


def _parse_client(c: dict, path: str, topology: Topology, classes, computers,
                  kind: PolicyKind) -> ClientConfig:
    cid = c.get("id")
    if not isinstance(cid, str) or not cid:
        raise ConfigError(f"{path}.id: expected a non-empty string")
    terminals = tuple(c.get("terminals") or (cid,))
    for t in terminals:
        if t not in topology.nodes:
            raise ConfigError(f"{path}.terminals: unknown node {t!r}")
    dispatcher = c.get("dispatcher")
    if dispatcher is not None and dispatcher not in topology.nodes:
        raise ConfigError(f"{path}.dispatcher: unknown node {dispatcher!r}")
    if "workload" not in c:
        raise ConfigError(f"{path}.workload: missing")
    w = c["workload"]
    try:
        workload = WorkloadSpec.from_dict(w)
    except KeyError as exc:
        raise ConfigError(f"{path}.workload.{exc.args[0]}: missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.workload: {exc}") from None
    if workload.cls not in classes:
        raise ConfigError(f"{path}.workload.class: unknown class {workload.cls!r}")
    if workload.chain:
        ch = workload.chain
        if ch.get("class") not in classes:
            raise ConfigError(f"{path}.workload.chain.class: unknown class {ch.get('class')!r}")
        _num(ch.get("size"), f"{path}.workload.chain.size", positive=True)
    roam = c.get("roam_interval")
    if roam is not None:
        roam = _num(roam, f"{path}.roam_interval", positive=True)
    return ClientConfig(cid, workload, terminals, dispatcher, bool(c.get("tagged", False)), roam)


def _parse_drop(d: dict, topology: Topology, classes) -> DropConfig:
    if d.get("class") not in classes:
        raise ConfigError(f"drop.class: unknown class {d.get('class')!r}")
    region = int(d.get("region", 3))
    stations = topology.meta.get("base_stations")
    sectors = topology.meta.get("sectors", 0)
    if not stations or sectors < 1:
        raise ConfigError("drop: needs a fat_tree topology with sectors >= 1")
    if len(stations) != region * region:
        raise ConfigError(f"drop.region: {region}x{region} cells but {len(stations)} base stations")
    lo, hi = d.get("session_range", (30.0, 60.0))
    if not 0 < lo <= hi:
        raise ConfigError("drop.session_range: need 0 < low <= high")
    sizes = tuple(int(s) for s in d.get("sizes", range(5000, 15001, 1000)))
    if not sizes or min(sizes) <= 0:
        raise ConfigError("drop.sizes: need positive sizes")
    rate_map = d.get("rate_map")
    if rate_map is not None:
        if not rate_map or not rate_map[0]:
            raise ConfigError("drop.rate_map: must be a non-empty 2-D list")
        if len(rate_map) < region or len(rate_map[0]) < region:
            raise ConfigError(f"drop.rate_map: smaller than the {region}x{region} region")
    return DropConfig(
        cls=d["class"], sizes=sizes,
        sessions_per_unit=_num(d.get("sessions_per_unit", 0.1), "drop.sessions_per_unit",
                               minimum=0.0),
        region=region, session_range=(float(lo), float(hi)),
        period=_num(d.get("period", 0.033), "drop.period", positive=True),
        rate_map=rate_map, prefill=bool(d.get("prefill", True)))
