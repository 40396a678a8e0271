"""Simulated communication substrate.

Links are full duplex; each direction is a FIFO served store-and-forward:
a message waits behind whatever is already queued, occupies the link for
``size * 8 / capacity`` seconds, then propagates for the link latency.
Routes are hop-count shortest paths fixed at construction, ties broken by
the lowest node index.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from edgesim.events import EventQueue


class Role(enum.Enum):
    CLIENT = "Client"
    DISPATCHER = "Dispatcher"
    COMPUTER = "Computer"
    SWITCH = "Switch"
    ROOT = "Root"


class MessageKind(enum.Enum):
    REQUEST = "Request"
    RESPONSE = "Response"
    PROBE = "Probe"
    PROBE_REPLY = "ProbeReply"


class UndeliverableError(LookupError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    role: Role


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity: float
    latency: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"link {self.a}-{self.b}: capacity must be positive")
        if self.latency < 0:
            raise ValueError(f"link {self.a}-{self.b}: latency must be >= 0")
        if self.a == self.b:
            raise ValueError(f"self-loop on {self.a}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


@dataclass
class Message:
    size: int
    src: str
    dst: str
    kind: MessageKind = MessageKind.REQUEST
    payload: object = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"message size must be positive, got {self.size}")


class Topology:
    """Undirected graph of nodes and capacitated links, with static routing."""

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self._adj: dict[str, list[str]] = {}
        self._index: dict[str, int] = {}
        self._next_hop: dict[str, dict[str, str]] = {}
        self._dist: dict[str, dict[str, int]] = {}
        self.meta: dict = {}

    def add_node(self, node_id: str, role: Role) -> Node:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node {node_id}")
        node = Node(node_id, role)
        self.nodes[node_id] = node
        self._adj[node_id] = []
        self._index[node_id] = len(self._index)
        self._invalidate()
        return node

    def add_link(self, a: str, b: str, capacity: float, latency: float) -> Link:
        for n in (a, b):
            if n not in self.nodes:
                raise ValueError(f"link endpoint {n} is not a node")
        link = Link(a, b, float(capacity), float(latency))
        if link.key in self.links:
            raise ValueError(f"duplicate link {a}-{b}")
        self.links[link.key] = link
        self._adj[a].append(b)
        self._adj[b].append(a)
        self._invalidate()
        return link

    def attach(self, node_id: str, to: str, capacity: float, latency: float,
               role: Role = Role.CLIENT) -> Node:
        node = self.add_node(node_id, role)
        self.add_link(node_id, to, capacity, latency)
        return node

    def _invalidate(self):
        self._next_hop.clear()
        self._dist.clear()

    def index(self, node_id: str) -> int:
        return self._index[node_id]

    def link(self, a: str, b: str) -> Link:
        return self.links[(a, b) if a <= b else (b, a)]

    def nodes_with_role(self, role: Role) -> list[str]:
        return [n.id for n in self.nodes.values() if n.role is role]

    def neighbors(self, node_id: str) -> list[str]:
        return list(self._adj[node_id])

    def _routes_to(self, dst: str):
        if dst not in self._next_hop:
            if dst not in self.nodes:
                raise UndeliverableError(f"unknown node {dst}")
            dist = {dst: 0}
            frontier = deque([dst])
            while frontier:
                u = frontier.popleft()
                for v in self._adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        frontier.append(v)
            hops = {}
            for u, d in dist.items():
                if d > 0:
                    hops[u] = min((v for v in self._adj[u] if dist.get(v) == d - 1),
                                  key=self._index.__getitem__)
            self._dist[dst] = dist
            self._next_hop[dst] = hops
        return self._dist[dst], self._next_hop[dst]

    def next_hop(self, src: str, dst: str) -> str:
        _, hops = self._routes_to(dst)
        try:
            return hops[src]
        except KeyError:
            raise UndeliverableError(f"no path from {src} to {dst}") from None

    def hops(self, src: str, dst: str) -> int:
        dist, _ = self._routes_to(dst)
        if src not in dist:
            raise UndeliverableError(f"no path from {src} to {dst}")
        return dist[src]

    def path(self, src: str, dst: str) -> list[str]:
        path = [src]
        while path[-1] != dst:
            path.append(self.next_hop(path[-1], dst))
        return path

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        first = next(iter(self.nodes))
        dist, _ = self._routes_to(first)
        return len(dist) == len(self.nodes)

    def idle_delay(self, size: float, src: str, dst: str) -> float:
        """One-way delay of a ``size``-byte message on an empty network."""
        path = self.path(src, dst)
        total = 0.0
        for u, v in zip(path, path[1:]):
            link = self.link(u, v)
            total += size * 8.0 / link.capacity + link.latency
        return total

    @classmethod
    def from_dict(cls, data: dict) -> Topology:
        """Build from ``{"nodes": [{"id", "role"}], "links": [{"a", "b", "capacity", "latency"}]}``."""
        topo = cls()
        for n in data["nodes"]:
            topo.add_node(str(n["id"]), Role(n.get("role", "Switch")))
        for link in data["links"]:
            topo.add_link(str(link["a"]), str(link["b"]), link["capacity"], link["latency"])
        return topo


@dataclass
class Background:
    """Periodic cross traffic taking a fixed share of a link's capacity.

    During ``[start + n * period, start + n * period + on)`` only
    ``1 - fraction`` of the capacity is left to simulated messages.
    """

    fraction: float = 0.8
    on: float = 3.0
    period: float = 5.0
    start: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise ValueError("background fraction must be in [0, 1)")
        if not 0 < self.on <= self.period:
            raise ValueError("need 0 < on <= period")

    def active(self, t: float) -> bool:
        if t < self.start:
            return False
        return (t - self.start) % self.period < self.on

    def next_change(self, t: float) -> float:
        if t < self.start:
            return self.start
        base = self.start + math.floor((t - self.start) / self.period) * self.period
        phase = t - base
        return base + self.on if phase < self.on else base + self.period


@dataclass
class _Channel:
    """One direction of a link."""

    capacity: float
    latency: float
    busy_until: float = 0.0
    background: Background | None = None
    bytes_delivered: int = 0
    messages: int = 0

    def transmission_end(self, start: float, size: int) -> float:
        bits = size * 8.0
        bg = self.background
        if bg is None:
            return start + bits / self.capacity
        t = start
        while True:
            rate = self.capacity * (1.0 - bg.fraction) if bg.active(t) else self.capacity
            change = bg.next_change(t)
            if t + bits / rate <= change:
                return t + bits / rate
            bits -= (change - t) * rate
            t = change


@dataclass
class Delivery:
    message: Message
    sent: float
    delivered: float | None = None
    hops: list = field(default_factory=list)


class Network:
    """Moves messages across a :class:`Topology`, scheduling hops on an event queue."""

    def __init__(self, topology: Topology, queue: EventQueue,
                 measure_from: float = 0.0, measure_until: float = math.inf):
        self.topology = topology
        self.queue = queue
        self.measure_from = measure_from
        self.measure_until = measure_until
        self._channels: dict[tuple[str, str], _Channel] = {}
        for link in topology.links.values():
            self._channels[(link.a, link.b)] = _Channel(link.capacity, link.latency)
            self._channels[(link.b, link.a)] = _Channel(link.capacity, link.latency)

    def add_background(self, a: str, b: str, background: Background, both_directions=True):
        self.topology.link(a, b)
        self._channels[(a, b)].background = background
        if both_directions:
            self._channels[(b, a)].background = background

    def send(self, msg: Message, now: float, on_delivery=None) -> Delivery:
        """Start ``msg`` on its way; ``on_delivery(delivery)`` fires at the destination."""
        delivery = Delivery(msg, now)
        if msg.src == msg.dst:
            delivery.delivered = now
            if on_delivery is not None:
                self.queue.schedule(now, on_delivery, delivery)
            return delivery
        # fail early rather than mid-route
        self.topology.hops(msg.src, msg.dst)
        self._forward(delivery, msg.src, now, on_delivery)
        return delivery

    # FIFO order on a channel is decided when the message reaches it
    def _forward(self, delivery: Delivery, at: str, now: float, on_delivery):
        msg = delivery.message
        if at == msg.dst:
            delivery.delivered = now
            if on_delivery is not None:
                on_delivery(delivery)
            return
        nxt = self.topology.next_hop(at, msg.dst)
        ch = self._channels[(at, nxt)]
        start = now if now > ch.busy_until else ch.busy_until
        end = ch.transmission_end(start, msg.size)
        ch.busy_until = end
        arrival = end + ch.latency
        delivery.hops.append((at, nxt, now, start, arrival))
        if self.measure_from <= arrival <= self.measure_until:
            ch.bytes_delivered += msg.size
            ch.messages += 1
        self.queue.schedule(arrival, self._forward, delivery, nxt, arrival, on_delivery)

    def link_bytes(self) -> dict[tuple[str, str], int]:
        """Bytes delivered per undirected link inside the measurement window."""
        out = {}
        for link in self.topology.links.values():
            out[link.key] = (self._channels[(link.a, link.b)].bytes_delivered
                             + self._channels[(link.b, link.a)].bytes_delivered)
        return out

    def throughput(self, start: float | None = None, end: float | None = None):
        """Per-link and total throughput in bit/s over ``[start, end]``.

        Only deliveries inside the network's measurement window are counted,
        so the interval should match it.
        """
        start = self.measure_from if start is None else start
        end = self.measure_until if end is None else end
        span = end - start
        if span <= 0 or math.isinf(span):
            raise ValueError(f"bad throughput interval [{start}, {end}]")
        per_link = {k: b * 8.0 / span for k, b in self.link_bytes().items()}
        return per_link, sum(per_link.values())


def build_clique(n: int, capacity: float = 100e6, latency: float = 1e-6,
                 access_capacity: float = 25e6, access_latency: float = 100e-6) -> Topology:
    """``n`` fully meshed edge nodes ``n1..nN``, each with one client node ``c1..cN``."""
    if n < 2:
        raise ValueError("a clique needs at least 2 nodes")
    topo = Topology()
    names = [f"n{i}" for i in range(1, n + 1)]
    for name in names:
        topo.add_node(name, Role.COMPUTER)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            topo.add_link(a, b, capacity, latency)
    for i, name in enumerate(names, start=1):
        topo.attach(f"c{i}", name, access_capacity, access_latency)
    topo.meta.update(kind="clique", edge_nodes=names,
                     access_capacity=access_capacity, access_latency=access_latency)
    return topo


def build_fat_tree(pods: int = 3, bs_per_pod: int = 3, root_capacity: float = 1e9,
                   root_latency: float = 10e-6, access_capacity: float = 25e6,
                   access_latency: float = 1e-3, sectors: int = 0) -> Topology:
    """Root, pod aggregators ``pod{p}``, base stations ``bs{p}.{b}``.

    Pod-to-base-station links get half the root-tier capacity. Each base
    station optionally gets ``sectors`` terminal nodes ``bs{p}.{b}s{s}``.
    """
    if pods < 1 or bs_per_pod < 1:
        raise ValueError("need at least one pod and one base station per pod")
    topo = Topology()
    topo.add_node("root", Role.ROOT)
    stations = []
    for p in range(1, pods + 1):
        topo.add_node(f"pod{p}", Role.SWITCH)
        topo.add_link("root", f"pod{p}", root_capacity, root_latency)
    for p in range(1, pods + 1):
        for b in range(1, bs_per_pod + 1):
            bs = f"bs{p}.{b}"
            topo.add_node(bs, Role.COMPUTER)
            topo.add_link(f"pod{p}", bs, root_capacity / 2, root_latency)
            stations.append(bs)
    for bs in stations:
        for s in range(1, sectors + 1):
            topo.attach(f"{bs}s{s}", bs, access_capacity, access_latency)
    topo.meta.update(kind="fat_tree", base_stations=stations, pods=pods,
                     bs_per_pod=bs_per_pod, sectors=sectors,
                     access_capacity=access_capacity, access_latency=access_latency)
    return topo


def build_dumbbell_het(lhs_clients: int = 3, rhs_clients: int = 3,
                       thick_capacity: float = 100e6, thick_latency: float = 1e-6,
                       thin_capacity: float = 25e6, thin_latency: float = 100e-6) -> Topology:
    """Root between two edge computers; tagged client on the root, interferers at the sides.

    Nodes: ``root``, ``lhs``, ``rhs``, tagged client ``tagged``, interfering
    clients ``l1..`` on ``lhs`` and ``r1..`` on ``rhs``.
    """
    topo = Topology()
    topo.add_node("root", Role.ROOT)
    topo.add_node("lhs", Role.COMPUTER)
    topo.add_node("rhs", Role.COMPUTER)
    topo.add_link("root", "lhs", thick_capacity, thick_latency)
    topo.add_link("root", "rhs", thick_capacity, thick_latency)
    topo.attach("tagged", "root", thin_capacity, thin_latency)
    for i in range(1, lhs_clients + 1):
        topo.attach(f"l{i}", "lhs", thin_capacity, thin_latency)
    for i in range(1, rhs_clients + 1):
        topo.attach(f"r{i}", "rhs", thin_capacity, thin_latency)
    topo.meta.update(kind="dumbbell_het", access_capacity=thin_capacity,
                     access_latency=thin_latency)
    return topo
