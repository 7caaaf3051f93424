"""Sender-side packet schedulers: round robin, fixed ratio, cheapest pipe
first, lowest smoothed RTT, and queue-aware earliest-arrival (otias).

Every scheduler is a pure function of its internal counters and the PathView
snapshot handed to it, ties always break toward the lower path_id, so the
decision sequence is deterministic for a fixed scenario.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

SCHEDULER_KINDS = ("cheapest_pipe_first", "fixed_ratio", "otias", "round_robin", "srtt")


@dataclass(frozen=True)
class PathView:
    """Read-only per-flow snapshot taken at decision time."""

    path_id: int
    srtt_us: float
    rttvar_us: float
    cwnd: float
    in_flight: int
    queue_len: int
    cost: float

    @property
    def has_window_room(self) -> bool:
        return self.in_flight + self.queue_len < self.cwnd


@dataclass
class SchedulerConfig:
    kind: str
    weights: Optional[list[int]] = None
    costs: Optional[dict[int, float]] = None

    def validate(self, n_paths: int) -> list[str]:
        problems = []
        if self.kind not in SCHEDULER_KINDS:
            problems.append(f"scheduler: unknown kind {self.kind!r}")
            return problems
        if self.kind == "fixed_ratio":
            if not self.weights:
                problems.append("scheduler: fixed_ratio requires weights")
            elif len(self.weights) != n_paths:
                problems.append(
                    f"scheduler: weights must list one entry per path ({n_paths})"
                )
            elif any(w < 0 for w in self.weights):
                problems.append("scheduler: weights must be non-negative")
            elif not any(self.weights):
                problems.append("scheduler: weights must not be all zero")
        if self.kind == "cheapest_pipe_first" and self.costs is not None:
            missing = [p for p in range(n_paths) if p not in self.costs]
            if missing:
                problems.append(f"scheduler: costs missing for paths {missing}")
        return problems


def otias_eta(view: PathView) -> float:
    """Estimated arrival offset of a packet appended to this flow now.

    The send queue drains one congestion window per round trip, so the packet
    waits ceil(max(0, queue + in_flight + 1 - cwnd) / cwnd) full round trips
    before transmission, then half a round trip to reach the receiver.
    """
    backlog = view.queue_len + view.in_flight + 1 - view.cwnd
    rounds = math.ceil(max(0.0, backlog) / view.cwnd)
    return rounds * view.srtt_us + view.srtt_us / 2.0


class RoundRobin:
    name = "round_robin"

    def __init__(self):
        self._last = -1

    def pick(self, views: Sequence[PathView], now: int) -> int:
        self._last = (self._last + 1) % len(views)
        return views[self._last].path_id


class FixedRatio:
    """Deterministic weighted round robin (smooth interleaving).

    Per pick every path earns its weight in credit and the highest credit is
    served, paying back the weight total. Over any sum(weights) consecutive
    picks each path is chosen exactly its weight's worth, and every prefix
    stays within one packet of the configured ratio.
    """

    name = "fixed_ratio"

    def __init__(self, weights: Sequence[int]):
        if not weights or any(w < 0 for w in weights) or not any(weights):
            raise ValueError("weights must be non-negative and not all zero")
        self._weights = list(weights)
        self._credits = [0] * len(weights)
        self._total = sum(weights)

    def pick(self, views: Sequence[PathView], now: int) -> int:
        for i, w in enumerate(self._weights):
            self._credits[i] += w
        best = max(range(len(self._credits)), key=lambda i: (self._credits[i], -i))
        self._credits[best] -= self._total
        return views[best].path_id


class CheapestPipeFirst:
    """Lowest-cost path that still has congestion-window room.

    When every window is full the cheapest path absorbs the packet into its
    send queue rather than dropping it at ingress.
    """

    name = "cheapest_pipe_first"

    def pick(self, views: Sequence[PathView], now: int) -> int:
        available = [v for v in views if v.has_window_room]
        pool = available if available else views
        return min(pool, key=lambda v: (v.cost, v.path_id)).path_id


class MinSrtt:
    """Lowest smoothed RTT among paths with window room (srtt)."""

    name = "srtt"

    def pick(self, views: Sequence[PathView], now: int) -> int:
        available = [v for v in views if v.has_window_room]
        pool = available if available else views
        return min(pool, key=lambda v: (v.srtt_us, v.path_id)).path_id


class Otias:
    """Earliest estimated arrival, deliberately overloading low-RTT flows.

    The chosen flow's send queue may exceed its congestion window; queueing on
    the fast path is the mechanism that lines packets up to arrive in order.
    """

    name = "otias"

    def __init__(self):
        self.last_etas: tuple[float, ...] = ()

    def pick(self, views: Sequence[PathView], now: int) -> int:
        etas = tuple(otias_eta(v) for v in views)
        self.last_etas = etas
        best = min(range(len(views)), key=lambda i: (etas[i], views[i].path_id))
        return views[best].path_id


def make_scheduler(config: SchedulerConfig):
    if config.kind == "round_robin":
        return RoundRobin()
    if config.kind == "fixed_ratio":
        return FixedRatio(config.weights or [])
    if config.kind == "cheapest_pipe_first":
        return CheapestPipeFirst()
    if config.kind == "srtt":
        return MinSrtt()
    if config.kind == "otias":
        return Otias()
    raise ValueError(f"unknown scheduler kind {config.kind!r}")


SCHEDULER_DOCS = {
    "cheapest_pipe_first": "prefer the lowest-cost path while its window has room; params: costs (per path, optional when path costs are set)",
    "fixed_ratio": "deterministic weighted round robin; params: weights (one non-negative integer per path, not all zero)",
    "otias": "earliest estimated arrival using queue backlog and smoothed RTT; no params",
    "round_robin": "cycle through paths in path_id order; no params",
    "srtt": "lowest smoothed RTT among paths with window room; no params",
}
