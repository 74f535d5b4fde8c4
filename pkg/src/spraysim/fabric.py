"""Three-tier k-ary fat tree with FIFO output ports and per-packet routing.

Switch output ports are tail-drop FIFOs. A port never needs its own dequeue
event: departure times are assigned at enqueue (store-and-forward, FIFO), and
occupancy at any instant is the bytes whose serialization has not finished.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .engine import US, Engine, EventKind, RngStream, serialization_ps

HOST, TOR, AGG, CORE = 0, 1, 2, 3
_KIND_NAMES = {HOST: "host", TOR: "tor", AGG: "agg", CORE: "core"}

DEFAULT_MSS = 4096
DEFAULT_ACK_SIZE = 64
DEFAULT_LINK_SPEED = 100_000_000_000


class ConfigError(ValueError):
    """Invalid topology, routing, or scenario configuration."""


class Routing(str, Enum):
    SINGLE_PATH = "single_path"
    ROUND_ROBIN = "round_robin"
    RANDOM_SPRAY = "random_spray"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class RoutingPolicy:
    variant: Routing = Routing.RANDOM_SPRAY
    # None means capacity / 8 (or one MSS on unbounded queues)
    adaptive_quantum_bytes: int | None = None


class Packet:
    """A data packet or an ACK moving through the fabric."""

    __slots__ = (
        "flow", "seq", "size", "sent_at", "is_ack", "echo_sent_at", "cum_ack",
        "src", "dst", "route", "path_tag", "hops", "at_kind", "at_index",
    )

    def __init__(self, flow, seq, size, sent_at, src, dst, route, is_ack=False,
                 echo_sent_at=0, cum_ack=0):
        self.flow = flow
        self.seq = seq
        self.size = size
        self.sent_at = sent_at
        self.is_ack = is_ack
        self.echo_sent_at = echo_sent_at
        self.cum_ack = cum_ack
        self.src = src
        self.dst = dst
        # per (flow, direction) routing memory: switch id -> counter or port
        self.route = route
        self.path_tag = -1
        self.hops = 0
        self.at_kind = HOST
        self.at_index = src

    def trace_summary(self) -> str:
        kind = "ack" if self.is_ack else "data"
        fid = getattr(self.flow, "flow_id", "?")
        return f"{kind} f{fid} s{self.seq} @{_KIND_NAMES[self.at_kind]}{self.at_index}"


class Port:
    """Directed link plus the FIFO queue feeding it."""

    __slots__ = (
        "name", "to_kind", "to_index", "speed", "delay", "extra_delay",
        "capacity", "occupancy", "busy_until", "_fin", "drops", "sent",
        "_ser_cache",
    )

    def __init__(self, name, to_kind, to_index, speed, delay, capacity):
        self.name = name
        self.to_kind = to_kind
        self.to_index = to_index
        self.speed = speed
        self.delay = delay
        self.extra_delay = 0
        self.capacity = capacity
        self.occupancy = 0
        self.busy_until = 0
        self._fin: deque = deque()
        self.drops = 0
        self.sent = 0
        self._ser_cache: dict[int, int] = {}

    def serialization(self, size: int) -> int:
        ser = self._ser_cache.get(size)
        if ser is None:
            ser = self._ser_cache[size] = serialization_ps(size, self.speed)
        return ser

    def occupancy_at(self, now: int) -> int:
        fin = self._fin
        while fin and fin[0][0] <= now:
            self.occupancy -= fin.popleft()[1]
        return self.occupancy

    def enqueue(self, now: int, size: int) -> int:
        """Admit ``size`` bytes; return the serialization finish time or -1 on drop."""
        fin = self._fin
        occ = self.occupancy
        while fin and fin[0][0] <= now:
            occ -= fin.popleft()[1]
        if occ + size > self.capacity:
            self.occupancy = occ
            self.drops += 1
            return -1
        start = self.busy_until if self.busy_until > now else now
        ser = self._ser_cache.get(size)
        if ser is None:
            ser = self.serialization(size)
        finish = start + ser
        self.busy_until = finish
        fin.append((finish, size))
        self.occupancy = occ + size
        self.sent += 1
        return finish

    def arrival_time(self, finish: int) -> int:
        return finish + self.delay + self.extra_delay


@dataclass
class FatTreeTopology:
    radix_k: int
    link_speed: int
    link_delay: int
    queue_capacity: float
    host_up: list = field(repr=False)
    tor_down: list = field(repr=False)
    tor_up: list = field(repr=False)
    agg_down: list = field(repr=False)
    agg_up: list = field(repr=False)
    core_down: list = field(repr=False)
    delay_overrides: dict = field(default_factory=dict)

    @property
    def half(self) -> int:
        return self.radix_k // 2

    @property
    def n_hosts(self) -> int:
        return self.radix_k ** 3 // 4

    @property
    def n_paths_interpod(self) -> int:
        return self.half ** 2

    def pod_of(self, host: int) -> int:
        return host // (self.half * self.half)

    def tor_of(self, host: int) -> int:
        return host // self.half

    def hosts_on_tor(self, tor: int) -> list[int]:
        h = self.half
        return list(range(tor * h, tor * h + h))

    def hosts_in_pod(self, pod: int) -> list[int]:
        hh = self.half * self.half
        return list(range(pod * hh, pod * hh + hh))

    def core_switch(self, agg_pos: int, uplink: int) -> int:
        return agg_pos * self.half + uplink

    def distance_links(self, src: int, dst: int) -> int:
        """Number of links a packet crosses from ``src`` host to ``dst`` host."""
        if src == dst:
            return 0
        if self.tor_of(src) == self.tor_of(dst):
            return 2
        if self.pod_of(src) == self.pod_of(dst):
            return 4
        return 6

    def all_ports(self):
        for group in (self.host_up, self.tor_down, self.tor_up, self.agg_down,
                      self.agg_up, self.core_down):
            for row in group:
                if isinstance(row, Port):
                    yield row
                else:
                    yield from row

    def set_delay_override(self, core: int, dst_pod: int, extra: int) -> None:
        """Add ``extra`` ps to the core→pod link, i.e. one (core, direction) pair."""
        self.core_down[core][dst_pod].extra_delay = extra
        if extra:
            self.delay_overrides[(core, dst_pod)] = extra
        else:
            self.delay_overrides.pop((core, dst_pod), None)

    def core_paths(self, src: int, dst: int) -> list[list[str]]:
        """Enumerate every shortest path between two hosts by graph search."""
        adj: dict[str, list[str]] = {}
        for port in self.all_ports():
            a, b = port.name.split("->")
            adj.setdefault(a, []).append(b)
        start, goal = f"host{src}", f"host{dst}"
        # BFS layering then DFS over shortest-path DAG
        dist = {start: 0}
        frontier = [start]
        while frontier and goal not in dist:
            nxt = []
            for node in frontier:
                for nb in adj.get(node, ()):
                    if nb not in dist:
                        dist[nb] = dist[node] + 1
                        nxt.append(nb)
            frontier = nxt
        paths: list[list[str]] = []

        def walk(node, acc):
            if node == goal:
                paths.append(acc)
                return
            for nb in adj.get(node, ()):
                if dist.get(nb) == dist[node] + 1 and (not nb.startswith("host") or nb == goal):
                    walk(nb, acc + [nb])

        if goal in dist:
            walk(start, [start])
        return paths

    def describe(self) -> dict:
        links = []
        for p in self.all_ports():
            a, b = p.name.split("->")
            links.append({
                "src": a, "dst": b, "speed_bps": p.speed, "delay_ps": p.delay,
                "extra_delay_ps": p.extra_delay,
                "capacity_bytes": None if math.isinf(p.capacity) else p.capacity,
            })
        h = self.half
        return {
            "radix_k": self.radix_k,
            "hosts": self.n_hosts,
            "switches": {
                "tor": [f"tor{i}" for i in range(self.radix_k * h)],
                "agg": [f"agg{i}" for i in range(self.radix_k * h)],
                "core": [f"core{i}" for i in range(h * h)],
            },
            "links": links,
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.describe(), fh, indent=1)


def calibrated_link_delay(base_rtt: int, link_speed: int = DEFAULT_LINK_SPEED,
                          mss: int = DEFAULT_MSS, ack_size: int = DEFAULT_ACK_SIZE) -> int:
    """Per-link propagation delay giving an inter-pod empty-network RTT of ``base_rtt``.

    The RTT covers six links for the data packet and six for its ACK.
    """
    ser = 6 * serialization_ps(mss, link_speed) + 6 * serialization_ps(ack_size, link_speed)
    if base_rtt <= ser:
        raise ConfigError(f"base RTT {base_rtt} ps shorter than serialization {ser} ps")
    return (base_rtt - ser) // 12


def empty_rtt(topo: FatTreeTopology, hops: int = 6, mss: int = DEFAULT_MSS,
              ack_size: int = DEFAULT_ACK_SIZE) -> int:
    """Empty-network RTT of a ``hops``-link path, data one way and ACK back."""
    return hops * (2 * topo.link_delay + serialization_ps(mss, topo.link_speed)
                   + serialization_ps(ack_size, topo.link_speed))


def build_fat_tree(radix_k: int, link_speed: int = DEFAULT_LINK_SPEED,
                   link_delay: int | None = None, queue_capacity: float | None = None
                   ) -> FatTreeTopology:
    """Wire a non-blocking k-ary fat tree.

    ``link_delay=None`` calibrates the delay so the inter-pod RTT is 14 us.
    ``queue_capacity=None`` gives unbounded queues.
    """
    if radix_k < 4 or radix_k % 2:
        raise ConfigError(f"fat-tree radix must be even and >= 4, got {radix_k}")
    if link_delay is None:
        link_delay = calibrated_link_delay(14 * US, link_speed)
    cap = math.inf if queue_capacity is None else queue_capacity
    k, h = radix_k, radix_k // 2
    n_tor = k * h

    def port(a, b, to_kind, to_index):
        return Port(f"{a}->{b}", to_kind, to_index, link_speed, link_delay, cap)

    host_up = [port(f"host{x}", f"tor{x // h}", TOR, x // h) for x in range(k * h * h)]
    tor_down = [[port(f"tor{t}", f"host{t * h + i}", HOST, t * h + i) for i in range(h)]
                for t in range(n_tor)]
    tor_up = [[port(f"tor{t}", f"agg{(t // h) * h + a}", AGG, (t // h) * h + a)
               for a in range(h)] for t in range(n_tor)]
    agg_down = [[port(f"agg{g}", f"tor{(g // h) * h + i}", TOR, (g // h) * h + i)
                 for i in range(h)] for g in range(n_tor)]
    agg_up = [[port(f"agg{g}", f"core{(g % h) * h + j}", CORE, (g % h) * h + j)
               for j in range(h)] for g in range(n_tor)]
    core_down = [[port(f"core{c}", f"agg{p * h + c // h}", AGG, p * h + c // h)
                  for p in range(k)] for c in range(h * h)]
    return FatTreeTopology(radix_k, link_speed, link_delay, cap, host_up, tor_down,
                           tor_up, agg_down, agg_up, core_down)


def quantum_for(policy: RoutingPolicy, capacity: float, mss: int = DEFAULT_MSS) -> int:
    if policy.adaptive_quantum_bytes is not None:
        return policy.adaptive_quantum_bytes
    if math.isinf(capacity):
        return mss
    return max(1, int(capacity) // 8)


def select_next_hop(ports: list[Port], variant: Routing, route: dict, switch_key,
                    rng: RngStream, now: int = 0, quantum: int = 1) -> int:
    """Pick an uplink index among equally short ``ports``.

    ``route`` is the (flow, direction) routing memory; ``switch_key`` names
    the deciding switch inside it.
    """
    n = len(ports)
    if variant is Routing.RANDOM_SPRAY:
        return rng.randbelow(n)
    if variant is Routing.ROUND_ROBIN:
        i = route.get(switch_key, 0)
        route[switch_key] = i + 1
        return i % n
    if variant is Routing.SINGLE_PATH:
        i = route.get(switch_key)
        if i is None:
            i = route[switch_key] = rng.randbelow(n)
        return i
    levels = [p.occupancy_at(now) // quantum for p in ports]
    best = min(levels)
    ties = [i for i, lv in enumerate(levels) if lv == best]
    return ties[0] if len(ties) == 1 else ties[rng.randbelow(len(ties))]


class Fabric:
    """Moves packets hop by hop over a topology inside an :class:`Engine`.

    ``deliver(packet)`` is called when a packet reaches its destination host;
    ``on_drop(packet)`` when a queue rejects it.
    """

    def __init__(self, engine: Engine, topo: FatTreeTopology, policy: RoutingPolicy,
                 rng: RngStream, deliver, on_drop=None):
        self.engine = engine
        self.topo = topo
        self.policy = policy
        self.variant = Routing(policy.variant)
        self.rng = rng
        self.deliver = deliver
        self.on_drop = on_drop
        self.quantum = quantum_for(policy, topo.queue_capacity)
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.hop_violations = 0
        engine.on(EventKind.PACKET_ARRIVAL, self._arrive)

    def inject(self, packet: Packet) -> bool:
        """Put a packet on its source host's NIC queue."""
        self.injected += 1
        packet.at_kind = HOST
        packet.at_index = packet.src
        return self._send(self.topo.host_up[packet.src], packet)

    def _send(self, port: Port, packet: Packet) -> bool:
        engine = self.engine
        finish = port.enqueue(engine.now, packet.size)
        if finish < 0:
            self.dropped += 1
            if self.on_drop is not None:
                self.on_drop(packet)
            return False
        packet.at_kind = port.to_kind
        packet.at_index = port.to_index
        packet.hops += 1
        engine.schedule(finish + port.delay + port.extra_delay, EventKind.PACKET_ARRIVAL, packet)
        return True

    def _uplink(self, ports, packet, key):
        flow_variant = packet.flow.routing or self.variant
        if flow_variant is Routing.ADAPTIVE:
            return ports[select_next_hop(ports, flow_variant, packet.route, key, self.rng,
                                         self.engine.now, self.quantum)]
        return ports[select_next_hop(ports, flow_variant, packet.route, key, self.rng)]

    def _arrive(self, packet: Packet) -> None:
        kind = packet.at_kind
        idx = packet.at_index
        topo = self.topo
        h = topo.radix_k >> 1
        dst = packet.dst
        if kind == TOR:
            if dst // h == idx:
                port = topo.tor_down[idx][dst % h]
            else:
                port = self._uplink(topo.tor_up[idx], packet, idx)
        elif kind == AGG:
            if dst // (h * h) == idx // h:
                port = topo.agg_down[idx][(dst // h) % h]
            else:
                port = self._uplink(topo.agg_up[idx], packet, 100_000 + idx)
        elif kind == CORE:
            packet.path_tag = idx
            port = topo.core_down[idx][dst // (h * h)]
        else:
            self.delivered += 1
            if packet.hops != topo.distance_links(packet.src, dst):
                self.hop_violations += 1
            self.deliver(packet)
            return
        self._send(port, packet)
