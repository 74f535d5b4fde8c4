"""Endpoint logic: Swift, LSwift and MSwift senders, SACK receiver, UDP elephants.

The sender is written against two callbacks, ``transmit(seq, now)`` and
``set_timer(deadline)``, so it can be driven by the fabric or by a scripted
ACK sequence in tests.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from statistics import median

from .engine import US, serialization_ps


class CCA(str, Enum):
    SWIFT = "swift"
    LSWIFT = "lswift"
    MSWIFT = "mswift"


class HistoryKind(str, Enum):
    LATEST_ONLY = "latest_only"
    CONSTANT = "constant"
    WINDOW = "window"
    BOUNDED_WINDOW = "bounded_window"


@dataclass(frozen=True)
class HistoryPolicy:
    kind: HistoryKind = HistoryKind.LATEST_ONLY
    m: int = 1
    alpha: float = 0.5
    K: int = 10

    def __post_init__(self):
        kind = HistoryKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.m < 1:
            raise ValueError("constant history size must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if kind is HistoryKind.BOUNDED_WINDOW and self.K < 3:
            raise ValueError("K must be >= 3")

    @classmethod
    def latest_only(cls):
        return cls(HistoryKind.LATEST_ONLY)

    @classmethod
    def constant(cls, m: int):
        return cls(HistoryKind.CONSTANT, m=m)

    @classmethod
    def window(cls, alpha: float):
        return cls(HistoryKind.WINDOW, alpha=alpha)

    @classmethod
    def bounded_window(cls, alpha: float = 0.5, K: int = 10):
        return cls(HistoryKind.BOUNDED_WINDOW, alpha=alpha, K=K)


def history_size(policy: HistoryPolicy, cwnd: float) -> int:
    kind = policy.kind
    if kind is HistoryKind.LATEST_ONLY:
        return 1
    if kind is HistoryKind.CONSTANT:
        return policy.m
    scaled = math.ceil(policy.alpha * cwnd - 1e-12)
    if kind is HistoryKind.WINDOW:
        return max(scaled, 3)
    return max(min(scaled, policy.K), 3)


class DelayHistory:
    """Recent delay samples, newest first, trimmed to the policy's size."""

    def __init__(self, policy: HistoryPolicy):
        self.policy = policy
        self.samples: deque = deque()

    def __len__(self):
        return len(self.samples)

    def push(self, delay, cwnd: float) -> None:
        self.samples.appendleft(delay)
        self.resize(history_size(self.policy, cwnd))

    def resize(self, size: int) -> None:
        samples = self.samples
        while len(samples) > size:
            samples.pop()

    def effective(self):
        return effective_delay(self, self.samples[0])


def effective_delay(history: DelayHistory, latest):
    """Latest sample for LatestOnly, otherwise the median of the stored samples.

    Even sample counts average the two middle values.
    """
    if history.policy.kind is HistoryKind.LATEST_ONLY or len(history.samples) == 1:
        return latest
    return median(history.samples)


@dataclass
class SwiftConfig:
    ai: float = 1.0
    max_mdf: float = 0.5
    beta: float = 0.8
    base_target: int = int(15.8 * US)
    hop_scaling: int = 0
    fs_range: int = int(5.2 * US)
    fs_min_cwnd: float = 0.1
    fs_max_cwnd: float = 100.0
    rto: int = 100 * US
    min_cwnd: float = 1.0
    max_cwnd: float = 1000.0
    init_cwnd: float = 10.0
    dupthresh: int = 3
    reorder_threshold: int = 5

    def __post_init__(self):
        if not 0 < self.max_mdf < 1:
            raise ValueError("max_mdf must be in (0, 1)")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.ai <= 0 or self.base_target <= 0:
            raise ValueError("ai and base_target must be positive")
        if self.min_cwnd < 1:
            raise ValueError("min_cwnd below one packet would need pacing")


def flow_scaling(cwnd: float, cfg: SwiftConfig) -> float:
    lo = 1.0 / math.sqrt(cfg.fs_max_cwnd)
    hi = 1.0 / math.sqrt(cfg.fs_min_cwnd)
    value = cfg.fs_range * (1.0 / math.sqrt(cwnd) - lo) / (hi - lo)
    return min(max(value, 0.0), float(cfg.fs_range))


def target_delay(cwnd: float, cfg: SwiftConfig, hops: int) -> float:
    return cfg.base_target + cfg.hop_scaling * hops + flow_scaling(cwnd, cfg)


# per-sequence sender states
UNSENT, INFLIGHT, LOST, ACKED = 0, 1, 2, 3


class SwiftSender:
    """Swift-family sender over ``n_packets`` numbered packets.

    ``cca`` selects the reaction to SACK holes: Swift retransmits and cuts on
    every hole; LSwift and MSwift count successive holes and cut only at
    ``reorder_threshold``. MSwift additionally feeds the median of the delay
    history into the AIMD decision.
    """

    def __init__(self, n_packets: int, cfg: SwiftConfig, cca: CCA = CCA.SWIFT,
                 policy: HistoryPolicy | None = None, hops: int = 6,
                 transmit=None, set_timer=None, recorder: list | None = None):
        self.n = n_packets
        self.cfg = cfg
        self.cca = CCA(cca)
        if policy is None or self.cca is not CCA.MSWIFT:
            policy = HistoryPolicy.latest_only()
        self.policy = policy
        self.hops = hops
        self.transmit = transmit or (lambda seq, now: None)
        self.set_timer = set_timer or (lambda deadline: None)
        self.recorder = recorder

        self.cwnd = max(cfg.init_cwnd, cfg.min_cwnd)
        self.outstanding = 0
        self.state = bytearray(n_packets)
        self.next_new = 0
        self.cum_ack = 0
        self.highest_acked = -1
        self.acked = 0
        self._scan = 0
        self.rtx_queue: deque = deque()
        self.delayed: set = set()
        self.successive_delayed_count = 0
        self.last_decrease_at: int | None = None
        self.srtt: float | None = None
        self.history = DelayHistory(policy)
        self.rto_deadline: int | None = None
        self.done = False

        self.retransmissions = 0
        self.decreases = 0
        self.hole_events = 0
        self.reorder_decreases = 0
        self.rto_count = 0
        self.duplicate_acks = 0
        self.unknown_acks = 0
        self.min_cwnd_seen = self.cwnd

    # -- sending -----------------------------------------------------------

    def start(self, now: int) -> None:
        self.send_available(now)

    def send_available(self, now: int) -> None:
        state = self.state
        # a full packet must fit in the window
        while self.outstanding + 1 <= self.cwnd:
            seq = -1
            rtx = self.rtx_queue
            while rtx:
                s = rtx.popleft()
                if state[s] == LOST:
                    seq = s
                    break
            if seq >= 0:
                self.retransmissions += 1
            elif self.next_new < self.n:
                seq = self.next_new
                self.next_new += 1
            else:
                break
            state[seq] = INFLIGHT
            self.outstanding += 1
            if self.rto_deadline is None:
                self._arm(now + self.cfg.rto)
            self.transmit(seq, now)

    def _arm(self, deadline: int | None) -> None:
        self.rto_deadline = deadline
        self.set_timer(deadline)

    # -- congestion control ------------------------------------------------

    def can_decrease(self, now: int) -> bool:
        if self.last_decrease_at is None or self.srtt is None:
            return True
        return now - self.last_decrease_at >= self.srtt

    def decrease(self, factor: float, now: int) -> bool:
        """Multiplicative decrease, at most once per smoothed RTT."""
        if not self.can_decrease(now):
            return False
        self.cwnd = max(self.cwnd * factor, self.cfg.min_cwnd)
        self.last_decrease_at = now
        self.decreases += 1
        return True

    def target(self) -> float:
        return target_delay(self.cwnd, self.cfg, self.hops)

    def _mark_acked(self, seq: int) -> None:
        st = self.state[seq]
        if st == INFLIGHT:
            self.outstanding -= 1
        elif st == LOST:
            # a late ACK beat the retransmission
            self.rtx_queue.remove(seq)
        self.state[seq] = ACKED
        self.acked += 1

    def on_ack(self, seq: int, echo_sent_at: int, cum_ack: int, now: int) -> None:
        """Process the ACK of data packet ``seq``.

        ``cum_ack`` is the receiver's next expected sequence.
        """
        if self.done:
            return
        state = self.state
        if not 0 <= seq < self.next_new or state[seq] == UNSENT:
            self.unknown_acks += 1
            return
        cfg = self.cfg
        duplicate = state[seq] == ACKED
        old_cum = self.cum_ack
        if duplicate:
            # SACK state already knows this packet; its delay is still a sample
            self.duplicate_acks += 1
        else:
            self._mark_acked(seq)
            for s in range(self.cum_ack, min(cum_ack, self.n)):
                if state[s] != ACKED:
                    self._mark_acked(s)
            while self.cum_ack < self.n and state[self.cum_ack] == ACKED:
                self.cum_ack += 1
            if seq > self.highest_acked:
                self.highest_acked = seq

        delay = now - echo_sent_at
        if self.srtt is None:
            self.srtt = float(delay)
        else:
            self.srtt += (delay - self.srtt) / 8.0

        if self.delayed and seq in self.delayed:
            # the late packet arrived: it was reordering, not loss
            self.delayed.discard(seq)
            self.successive_delayed_count = 0

        self.history.push(delay, self.cwnd)
        eff = effective_delay(self.history, delay)
        target = self.target()
        if eff < target:
            self.cwnd += cfg.ai / self.cwnd
        elif self.can_decrease(now):
            factor = max(1.0 - cfg.beta * (eff - target) / eff, 1.0 - cfg.max_mdf)
            self.decrease(factor, now)

        limit = self.highest_acked - cfg.dupthresh
        while self._scan <= limit:
            s = self._scan
            self._scan += 1
            if state[s] == INFLIGHT:
                self.on_reordering_event(s, now)

        self._clamp()
        if self.recorder is not None:
            self.recorder.append((now, self.cwnd, delay, eff, target))
        if self.acked == self.n:
            self.done = True
            self._arm(None)
            return
        if self.cum_ack > old_cum:
            self._arm(now + cfg.rto)
        self.send_available(now)

    def on_reordering_event(self, seq: int, now: int) -> None:
        """A SACK hole at ``seq`` persisted past the duplicate threshold."""
        self.hole_events += 1
        if self.cca is CCA.SWIFT:
            self._declare_lost(seq)
            self.decrease(1.0 - self.cfg.max_mdf, now)
            return
        self.delayed.add(seq)
        self.successive_delayed_count += 1
        if self.successive_delayed_count >= self.cfg.reorder_threshold:
            self.successive_delayed_count = 0
            if self.decrease(1.0 - self.cfg.max_mdf, now):
                self.reorder_decreases += 1
            for s in sorted(self.delayed):
                if self.state[s] == INFLIGHT:
                    self._declare_lost(s)
            self.delayed.clear()
        self._clamp()

    def _declare_lost(self, seq: int) -> None:
        self.state[seq] = LOST
        self.outstanding -= 1
        self.rtx_queue.append(seq)

    def on_rto(self, now: int) -> None:
        """Retransmission timeout: resend every unacked packet starting with the oldest."""
        if self.done or self.acked == self.n:
            return
        if self.cum_ack >= self.next_new and not self.rtx_queue:
            self._arm(None)
            return
        self.rto_count += 1
        state = self.state
        self.rtx_queue.clear()
        for s in range(self.cum_ack, self.next_new):
            st = state[s]
            if st == INFLIGHT:
                state[s] = LOST
                self.outstanding -= 1
            if state[s] == LOST:
                self.rtx_queue.append(s)
        self.delayed.clear()
        self.successive_delayed_count = 0
        self.cwnd = self.cfg.min_cwnd
        self.last_decrease_at = now
        self._clamp()
        self._arm(now + self.cfg.rto)
        self.send_available(now)

    def _clamp(self) -> None:
        cfg = self.cfg
        if self.cwnd < cfg.min_cwnd:
            self.cwnd = cfg.min_cwnd
        elif self.cwnd > cfg.max_cwnd:
            self.cwnd = cfg.max_cwnd
        if self.cwnd < self.min_cwnd_seen:
            self.min_cwnd_seen = self.cwnd


class Receiver:
    """Per-flow receive bitmap; acknowledges every packet immediately."""

    def __init__(self, n_packets: int):
        self.n = n_packets
        self.received = bytearray(n_packets)
        self.count = 0
        self.next_expected = 0
        self.duplicates = 0

    def on_data(self, seq: int) -> bool:
        """Record arrival of ``seq``; return True if it was new."""
        if self.received[seq]:
            self.duplicates += 1
            return False
        self.received[seq] = 1
        self.count += 1
        while self.next_expected < self.n and self.received[self.next_expected]:
            self.next_expected += 1
        return True

    @property
    def complete(self) -> bool:
        return self.count == self.n


@dataclass
class UdpSourceConfig:
    rate_fraction: float = 0.5
    packet_size: int = 4096
    line_speed: int = 100_000_000_000

    def __post_init__(self):
        if not 0 < self.rate_fraction <= 1:
            raise ValueError("rate_fraction must be in (0, 1]")

    @property
    def gap(self) -> int:
        """Inter-send gap in ps at the configured fraction of line rate."""
        return round(serialization_ps(self.packet_size, self.line_speed) / self.rate_fraction)


@dataclass
class UdpSource:
    """Open-loop constant-rate sender; ignores loss entirely."""

    cfg: UdpSourceConfig
    sent: int = 0
    active: bool = True

    def tick(self, now: int) -> int | None:
        """Emit one packet at ``now``; return the next tick time (or None)."""
        if not self.active:
            return None
        self.sent += 1
        return now + self.cfg.gap
