"""One simulation run: scenario + topology + transports inside an engine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TextIO

from .engine import MS, Engine, EventKind, RngStream
from .fabric import (
    DEFAULT_ACK_SIZE, DEFAULT_LINK_SPEED, DEFAULT_MSS, Fabric, Packet, Routing,
    RoutingPolicy, build_fat_tree, calibrated_link_delay,
)
from .metrics import FlowRecord
from .scenarios import FlowSpec, Scenario
from .transport import CCA, HistoryPolicy, Receiver, SwiftConfig, SwiftSender, UdpSource, UdpSourceConfig


@dataclass
class RunSettings:
    cca: CCA = CCA.SWIFT
    history: HistoryPolicy = field(default_factory=HistoryPolicy.latest_only)
    swift: SwiftConfig = field(default_factory=SwiftConfig)
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)
    # bytes; None = unbounded
    queue_capacity: int | None = None
    link_speed: int = DEFAULT_LINK_SPEED
    mss: int = DEFAULT_MSS
    ack_size: int = DEFAULT_ACK_SIZE
    elephant_rate: float = 0.5
    max_time: int = 1000 * MS


@dataclass
class RunResult:
    seed: int
    records: list[FlowRecord]
    events_processed: int
    final_time: int
    injected: int
    delivered: int
    dropped: int
    in_flight: int
    hop_violations: int
    min_cwnd_seen: float
    timeseries: dict = field(default_factory=dict, repr=False)

    @property
    def conserved(self) -> bool:
        return self.injected == self.delivered + self.dropped + self.in_flight


class CcaFlow:
    """A Swift-family flow: sender at ``src``, receiver at ``dst``."""

    routing = None

    def __init__(self, sim: "Simulation", spec: FlowSpec, recorder=None):
        self.sim = sim
        self.spec = spec
        self.flow_id = spec.flow_id
        s = sim.settings
        self.n_packets = max(1, math.ceil(spec.size / s.mss))
        self.last_size = spec.size - (self.n_packets - 1) * s.mss
        hops = sim.topo.distance_links(spec.src, spec.dst)
        self.sender = SwiftSender(self.n_packets, s.swift, s.cca, s.history, hops,
                                  transmit=self._transmit, set_timer=self._set_timer,
                                  recorder=recorder)
        self.receiver = Receiver(self.n_packets)
        self.fwd_route: dict = {}
        self.rev_route: dict = {}
        self.timer_at: int | None = None
        self.record = FlowRecord(spec.flow_id, spec.src, spec.dst, spec.size, spec.start,
                                 tracked=spec.tracked, cca=s.cca.value if s.cca is not CCA.MSWIFT
                                 else f"mswift:{s.history.kind.value}", kind="cca")

    def trace_summary(self) -> str:
        return f"flow{self.flow_id}"

    def start(self) -> None:
        self.sender.start(self.sim.engine.now)

    def _transmit(self, seq: int, now: int) -> None:
        size = self.last_size if seq == self.n_packets - 1 else self.sim.settings.mss
        self.record.sent += 1
        self.sim.fabric.inject(Packet(self, seq, size, now, self.spec.src, self.spec.dst,
                                      self.fwd_route))

    def _set_timer(self, deadline: int | None) -> None:
        if deadline is None or self.timer_at is not None:
            return
        self.timer_at = deadline
        self.sim.engine.schedule(deadline, EventKind.RTO_EXPIRY, self)

    def on_timer(self) -> None:
        self.timer_at = None
        deadline = self.sender.rto_deadline
        if deadline is None or self.sender.done:
            return
        now = self.sim.engine.now
        if now < deadline:
            self._set_timer(deadline)
        else:
            self.sender.on_rto(now)

    def on_data(self, pkt: Packet) -> None:
        sim = self.sim
        now = sim.engine.now
        if self.receiver.on_data(pkt.seq):
            self.record.bytes_delivered += pkt.size
            if self.receiver.complete:
                self.record.end = now
                sim.flow_completed(self)
        sim.fabric.inject(Packet(self, pkt.seq, sim.settings.ack_size, now, self.spec.dst,
                                 self.spec.src, self.rev_route, is_ack=True,
                                 echo_sent_at=pkt.sent_at, cum_ack=self.receiver.next_expected))

    def on_ack(self, pkt: Packet) -> None:
        self.sender.on_ack(pkt.seq, pkt.echo_sent_at, pkt.cum_ack, self.sim.engine.now)

    def finalize(self) -> FlowRecord:
        self.record.retransmissions = self.sender.retransmissions
        self.record.rto_count = self.sender.rto_count
        return self.record


class ElephantFlow:
    """Single-path open-loop UDP source at a fixed fraction of line rate."""

    routing = Routing.SINGLE_PATH

    def __init__(self, sim: "Simulation", spec: FlowSpec):
        self.sim = sim
        self.spec = spec
        self.flow_id = spec.flow_id
        s = sim.settings
        self.source = UdpSource(UdpSourceConfig(s.elephant_rate, s.mss, s.link_speed))
        self.route: dict = {}
        self.record = FlowRecord(spec.flow_id, spec.src, spec.dst, spec.size, spec.start,
                                 kind="elephant", cca="udp")

    def trace_summary(self) -> str:
        return f"elephant{self.flow_id}"

    def tick(self) -> None:
        sim = self.sim
        now = sim.engine.now
        nxt = self.source.tick(now)
        if nxt is None:
            return
        self.record.sent += 1
        sim.fabric.inject(Packet(self, self.source.sent - 1, self.source.cfg.packet_size, now,
                                 self.spec.src, self.spec.dst, self.route))
        sim.engine.schedule(nxt, EventKind.PACER_TICK, self)

    def on_data(self, pkt: Packet) -> None:
        self.record.bytes_delivered += pkt.size

    def finalize(self) -> FlowRecord:
        return self.record


class Simulation:
    def __init__(self, scenario: Scenario, settings: RunSettings, seed: int,
                 trace: TextIO | None = None, record_flows: tuple[int, ...] = ()):
        self.scenario = scenario
        self.settings = settings
        self.seed = seed
        self.engine = Engine(trace=trace)
        delay = calibrated_link_delay(scenario.base_rtt, settings.link_speed, settings.mss,
                                      settings.ack_size)
        self.topo = build_fat_tree(scenario.radix_k, settings.link_speed, delay,
                                   settings.queue_capacity)
        for (core, pod), extra in scenario.delay_overrides.items():
            self.topo.set_delay_override(core, pod, extra)
        self.fabric = Fabric(self.engine, self.topo, settings.routing,
                             RngStream(seed, "routing"), self._deliver, self._dropped)
        self.timeseries: dict[int, list] = {fid: [] for fid in record_flows}
        self.flows: list = []
        for spec in scenario.flows:
            if spec.kind == "elephant":
                flow = ElephantFlow(self, spec)
            else:
                flow = CcaFlow(self, spec, self.timeseries.get(spec.flow_id))
            self.flows.append(flow)
        self.remaining = sum(1 for f in self.flows if isinstance(f, CcaFlow))
        eng = self.engine
        eng.on(EventKind.FLOW_START, lambda flow: flow.start())
        eng.on(EventKind.RTO_EXPIRY, lambda flow: flow.on_timer())
        eng.on(EventKind.PACER_TICK, lambda flow: flow.tick())
        for flow in self.flows:
            if isinstance(flow, ElephantFlow):
                eng.schedule(flow.spec.start, EventKind.PACER_TICK, flow)
            else:
                eng.schedule(flow.spec.start, EventKind.FLOW_START, flow)

    def _deliver(self, pkt: Packet) -> None:
        if pkt.is_ack:
            pkt.flow.on_ack(pkt)
        else:
            pkt.flow.on_data(pkt)

    def _dropped(self, pkt: Packet) -> None:
        if not pkt.is_ack:
            pkt.flow.record.drops += 1

    def flow_completed(self, flow: CcaFlow) -> None:
        self.remaining -= 1
        if self.remaining == 0:
            self.engine.stop()

    def run(self) -> RunResult:
        if self.remaining:
            self.engine.run_until(self.settings.max_time)
        in_flight = sum(1 for ev in self.engine._queue if ev[2] == EventKind.PACKET_ARRIVAL)
        records = [f.finalize() for f in self.flows]
        senders = [f.sender for f in self.flows if isinstance(f, CcaFlow)]
        return RunResult(
            seed=self.seed,
            records=records,
            events_processed=self.engine.events_processed,
            final_time=self.engine.now,
            injected=self.fabric.injected,
            delivered=self.fabric.delivered,
            dropped=self.fabric.dropped,
            in_flight=in_flight,
            hop_violations=self.fabric.hop_violations,
            min_cwnd_seen=min((s.min_cwnd_seen for s in senders), default=math.inf),
            timeseries=self.timeseries,
        )


def run_scenario(scenario: Scenario, settings: RunSettings, seed: int | None = None,
                 **kw) -> RunResult:
    return Simulation(scenario, settings, scenario.seed if seed is None else seed, **kw).run()
