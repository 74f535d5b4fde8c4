"""Deterministic discrete-event engine.

Times are integer picoseconds. Events are ordered by ``(fire_at, seq)`` where
``seq`` is a monotone insertion counter, so ties resolve in insertion order.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, TextIO

PS = 1
NS = 1_000
US = 1_000_000
MS = 1_000_000_000
SEC = 1_000_000_000_000

_MASK64 = (1 << 64) - 1


def serialization_ps(size_bytes: int, speed_bps: int) -> int:
    """Exact time to clock ``size_bytes`` onto a link of ``speed_bps``."""
    num = size_bytes * 8 * SEC
    if num % speed_bps:
        # only whole picoseconds are representable; round up
        return num // speed_bps + 1
    return num // speed_bps


class EventKind(IntEnum):
    PACKET_ARRIVAL = 0
    DEQUEUE_READY = 1
    RTO_EXPIRY = 2
    PACER_TICK = 3
    FLOW_START = 4


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current time."""


@dataclass(frozen=True)
class RunOutcome:
    events_processed: int
    final_time: int


class Engine:
    """Single-threaded event loop.

    Handlers are registered per :class:`EventKind` and called as
    ``handler(payload)``. The payload is whatever was passed to
    :meth:`schedule`.
    """

    def __init__(self, trace: TextIO | None = None):
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self._handlers: dict[int, Callable] = {}
        self.events_processed = 0
        self.stopped = False
        self._trace = trace

    def on(self, kind: EventKind, handler: Callable) -> None:
        self._handlers[int(kind)] = handler

    def schedule(self, fire_at: int, kind: EventKind, payload=None) -> None:
        if fire_at < self.now:
            raise SchedulingError(
                f"event {EventKind(kind).name} at {fire_at} ps is before now={self.now} ps"
            )
        heapq.heappush(self._queue, (fire_at, self._seq, kind, payload))
        self._seq += 1

    def stop(self) -> None:
        """Ask :meth:`run_until` to return after the current event."""
        self.stopped = True

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, deadline: int) -> RunOutcome:
        """Process every event with ``fire_at <= deadline`` in order.

        When the queue drains (or the deadline is hit) ``now`` advances to
        ``deadline``. When :meth:`stop` is called, ``now`` stays at the time of
        the last processed event.
        """
        queue = self._queue
        handlers = self._handlers
        trace = self._trace
        pop = heapq.heappop
        processed = 0
        self.stopped = False
        while queue and queue[0][0] <= deadline:
            fire_at, seq, kind, payload = pop(queue)
            self.now = fire_at
            if trace is not None:
                trace.write(f"{fire_at},{seq},{EventKind(kind).name},{_summary(payload)}\n")
            handlers[kind](payload)
            processed += 1
            if self.stopped:
                break
        if not self.stopped and deadline > self.now:
            self.now = deadline
        self.events_processed += processed
        return RunOutcome(processed, self.now)


def _summary(payload) -> str:
    describe = getattr(payload, "trace_summary", None)
    if describe is not None:
        return describe()
    return type(payload).__name__ if payload is not None else "-"


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class RngStream:
    """SplitMix64 stream keyed by ``(seed, stream_id)``.

    The label is hashed with BLAKE2b so the same pair yields the same draws on
    every platform and Python version.
    """

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        label = int.from_bytes(
            hashlib.blake2b(stream_id.encode(), digest_size=8).digest(), "little"
        )
        self._state = (seed & _MASK64) ^ label
        # discard one output so nearby seeds decorrelate
        self.next_u64()

    def next_u64(self) -> int:
        self._state, out = _splitmix64(self._state)
        return out

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, items):
        return items[self.randbelow(len(items))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, population, k: int) -> list:
        pool = list(population)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
