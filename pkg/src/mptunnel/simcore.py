"""Discrete-event core: simulated clock, event queue, path models and traffic
sources.

Time is integer microseconds everywhere. The only randomness in a run is the
per-path loss draw, taken from one seeded generator per path, so adding or
reconfiguring one path never perturbs another path's loss sequence and runs
are bit-reproducible for a fixed (scenario, seed).
"""

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

US_PER_SECOND = 1_000_000

EventFn = Callable[[int], None]


class SimulationError(Exception):
    """Raised for malformed configuration or engine misuse."""


class PastEventError(SimulationError):
    """Scheduling an event before the current clock is a programming error."""


def serialization_us(size_bytes: int, bandwidth_bps: int) -> int:
    """Link serialization delay for a packet, rounded up to whole microseconds."""
    bits = size_bytes * 8
    return -(-bits * US_PER_SECOND // bandwidth_bps)


@dataclass(frozen=True)
class LatencyStep:
    """Scheduled change of a path's one-way latency."""

    at_us: int
    latency_us: int


@dataclass
class PathModel:
    """Static description of one simulated link."""

    path_id: int
    one_way_latency_us: int
    bandwidth_bps: int
    loss_rate: float = 0.0
    cost: float = 0.0
    latency_steps: list[LatencyStep] = field(default_factory=list)

    def validate(self) -> list[str]:
        problems = []
        if not 0 <= self.path_id <= 255:
            problems.append(f"path {self.path_id}: path_id must fit in one byte")
        if self.one_way_latency_us < 0:
            problems.append(f"path {self.path_id}: one_way_latency_us must be >= 0")
        if self.bandwidth_bps <= 0:
            problems.append(f"path {self.path_id}: bandwidth_bps must be > 0")
        if not 0.0 <= self.loss_rate <= 1.0:
            problems.append(f"path {self.path_id}: loss_rate must be in [0, 1]")
        if self.cost < 0:
            problems.append(f"path {self.path_id}: cost must be >= 0")
        last = -1
        for step in self.latency_steps:
            if step.at_us <= last:
                problems.append(
                    f"path {self.path_id}: latency_steps must be strictly increasing in time"
                )
                break
            if step.latency_us < 0:
                problems.append(f"path {self.path_id}: stepped latency must be >= 0")
                break
            last = step.at_us
        return problems


@dataclass
class TrafficSource:
    """Constant bit rate or greedy (always backlogged) packet source."""

    kind: str  # "cbr" | "greedy"
    packet_size_bytes: int
    rate_bps: int = 0
    start_us: int = 0
    stop_us: Optional[int] = None

    def validate(self) -> list[str]:
        problems = []
        if self.kind not in ("cbr", "greedy"):
            problems.append(f"traffic: unknown kind {self.kind!r}")
        if self.packet_size_bytes <= 0:
            problems.append("traffic: packet_size_bytes must be > 0")
        if self.kind == "cbr" and self.rate_bps <= 0:
            problems.append("traffic: cbr requires rate_bps > 0")
        if self.start_us < 0:
            problems.append("traffic: start_us must be >= 0")
        if self.stop_us is not None and self.stop_us <= self.start_us:
            problems.append("traffic: stop_us must be > start_us")
        return problems

    def emission_time_us(self, k: int) -> int:
        """Ingress time of the k-th CBR packet, drift-free integer schedule."""
        bits = self.packet_size_bytes * 8
        return self.start_us + (k * bits * US_PER_SECOND) // self.rate_bps


class EventQueue:
    """Time-ordered event queue with FIFO tie-break and cancellation.

    Pop order is (time, insertion order), which makes simultaneous events
    deterministic. Scheduling before the current clock raises PastEventError.
    """

    def __init__(self):
        self._heap: list[list] = []
        self._next_id = 0
        self._cancelled: set[int] = set()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap) - len(self._cancelled)

    def schedule(self, at_us: int, fn: EventFn) -> int:
        if at_us < self.now:
            raise PastEventError(
                f"cannot schedule event at {at_us} us, clock is at {self.now} us"
            )
        event_id = self._next_id
        self._next_id += 1
        heapq.heappush(self._heap, [at_us, event_id, fn])
        return event_id

    def cancel(self, event_id: int) -> None:
        self._cancelled.add(event_id)

    def pop(self) -> Optional[tuple[int, EventFn]]:
        while self._heap:
            at_us, event_id, fn = heapq.heappop(self._heap)
            if event_id in self._cancelled:
                self._cancelled.discard(event_id)
                continue
            self.now = at_us
            return at_us, fn
        return None

    def peek_time(self) -> Optional[int]:
        while self._heap and self._heap[0][1] in self._cancelled:
            _, event_id, _ = heapq.heappop(self._heap)
            self._cancelled.discard(event_id)
        return self._heap[0][0] if self._heap else None


class PathState:
    """Runtime state of one path: serialization FIFO and current latency.

    The path is an infinite FIFO: a packet starts serializing when the link
    becomes free, then propagates with the latency in force at hand-off time.
    Latency changes never affect packets already in flight. Losses are drawn
    per transmitted packet from the path's own generator; a lost packet still
    occupies the link (it is dropped downstream).
    """

    def __init__(self, model: PathModel, seed: int):
        self.model = model
        self.current_latency_us = model.one_way_latency_us
        self.busy_until_us = 0
        self._rng = random.Random(f"{seed}/{model.path_id}")

    def apply_latency_step(self, latency_us: int) -> None:
        self.current_latency_us = latency_us

    def transmit(self, size_bytes: int, now: int) -> Optional[int]:
        """Accept a packet for transmission, returning its delivery time.

        Returns None when the loss draw discards the packet.
        """
        start = max(now, self.busy_until_us)
        tx = serialization_us(size_bytes, self.model.bandwidth_bps)
        self.busy_until_us = start + tx
        if self.model.loss_rate > 0.0 and self._rng.random() < self.model.loss_rate:
            return None
        return start + tx + self.current_latency_us

    def ack_delay_us(self) -> int:
        """One-way return delay for an acknowledgment (not bandwidth-limited)."""
        return self.current_latency_us
