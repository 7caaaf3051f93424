"""Receiver-side processing: passthrough, threshold-based resequencing
(static or adaptive threshold) and per-flow delay equalization.

The resequencers buffer out-of-order packets and wait up to a timing
threshold for the gaps to fill; the equalizer instead delays each flow so all
paths present the same end-to-end latency, never consulting the overall
sequencing, and discards packets that show up hopelessly late.
"""

from dataclasses import dataclass
from typing import Callable, Optional

from .flow import SRTT_GAIN, RTTVAR_GAIN, TunnelPacket

REORDER_KINDS = ("adaptive", "delay_equalize", "none", "static")

DEFAULT_ADAPTIVE_K = 4.0
DEFAULT_MAX_HOLD_US = 500_000

DISPOSITION_INORDER = "inorder"
DISPOSITION_TIMEOUT = "timeout"
DISPOSITION_LATE = "late"


@dataclass
class ReorderConfig:
    kind: str = "none"
    static_threshold_us: Optional[int] = None
    adaptive_k: float = DEFAULT_ADAPTIVE_K
    max_hold_us: int = DEFAULT_MAX_HOLD_US

    def validate(self) -> list[str]:
        problems = []
        if self.kind not in REORDER_KINDS:
            problems.append(f"reorder: unknown kind {self.kind!r}")
        if self.static_threshold_us is not None and self.static_threshold_us < 0:
            problems.append("reorder: static_threshold_us must be >= 0")
        if self.adaptive_k <= 0:
            problems.append("reorder: adaptive_k must be > 0")
        if self.max_hold_us < 0:
            problems.append("reorder: max_hold_us must be >= 0")
        return problems


class PathStats:
    """Receiver-side per-path RTT knowledge from the header RTT option.

    Each arrival's sender report is re-smoothed with the same gains the
    sender uses, which also yields a variation estimate the sender does not
    transmit.
    """

    class _Stat:
        __slots__ = ("last_report_us", "srtt_us", "rttvar_us", "samples")

        def __init__(self):
            self.last_report_us = 0.0
            self.srtt_us = 0.0
            self.rttvar_us = 0.0
            self.samples = 0

    def __init__(self):
        self._stats: dict[int, PathStats._Stat] = {}

    def update(self, path_id: int, report_us: float) -> None:
        stat = self._stats.get(path_id)
        if stat is None:
            stat = self._Stat()
            self._stats[path_id] = stat
        stat.last_report_us = report_us
        if stat.samples == 0:
            stat.srtt_us = float(report_us)
            stat.rttvar_us = report_us / 2.0
        else:
            stat.rttvar_us = (1 - RTTVAR_GAIN) * stat.rttvar_us + RTTVAR_GAIN * abs(
                stat.srtt_us - report_us
            )
            stat.srtt_us = (1 - SRTT_GAIN) * stat.srtt_us + SRTT_GAIN * report_us
        stat.samples += 1

    def sampled_path_ids(self) -> list[int]:
        return sorted(self._stats)

    def srtt(self, path_id: int) -> float:
        return self._stats[path_id].srtt_us

    def rttvar(self, path_id: int) -> float:
        return self._stats[path_id].rttvar_us


def static_threshold(rtt_slower_us: float, rtt_faster_us: float) -> float:
    """Fixed resequencing threshold: the round-trip-time gap between paths."""
    return rtt_slower_us - rtt_faster_us


def adaptive_threshold(stats: PathStats, k: float, max_hold_us: int) -> float:
    """Continuously recomputed threshold from measured RTTs and variations.

    One-way skew estimate (half the RTT spread) plus k times the worst RTT
    variation, capped at max_hold_us. Until two paths have reported, the cap
    itself is used so nothing is given up on while cold.
    """
    paths = stats.sampled_path_ids()
    if len(paths) < 2:
        return float(max_hold_us)
    srtts = [stats.srtt(p) for p in paths]
    spread = (max(srtts) - min(srtts)) / 2.0
    guard = k * max(stats.rttvar(p) for p in paths)
    return min(spread + guard, float(max_hold_us))


@dataclass
class _Held:
    pkt: TunnelPacket
    arrival_us: int
    deadline_us: int


class ReorderBuffer:
    """Holds out-of-order packets until their gap fills or a deadline expires.

    Deliveries are returned as (packet, delivery_residency_us, disposition)
    in strictly increasing overall_seq order per call. A packet below
    expected_next (its gap was already given up) is delivered immediately out
    of band and flagged late.
    """

    def __init__(self, expected_next: int = 0):
        self.expected_next = expected_next
        self.held: dict[int, _Held] = {}
        self.late_count = 0
        self.gap_count = 0

    def on_arrival(self, pkt: TunnelPacket, now: int,
                   threshold_us: float) -> list[tuple[TunnelPacket, int, str]]:
        seq = pkt.overall_seq
        if seq == self.expected_next:
            out = [(pkt, 0, DISPOSITION_INORDER)]
            self.expected_next += 1
            out.extend(self._flush_consecutive(now, DISPOSITION_INORDER))
            return out
        if seq > self.expected_next:
            self.held[seq] = _Held(pkt, now, now + int(round(threshold_us)))
            return []
        self.late_count += 1
        return [(pkt, 0, DISPOSITION_LATE)]

    def on_deadline(self, now: int) -> list[tuple[TunnelPacket, int, str]]:
        """Release every expired hold plus anything stuck behind a given-up gap."""
        expired = [seq for seq, h in self.held.items() if h.deadline_us <= now]
        if not expired:
            return []
        give_up_below = max(expired) + 1
        release = sorted(seq for seq in self.held if seq < give_up_below)
        missing = give_up_below - self.expected_next - len(release)
        self.gap_count += missing
        out = []
        for seq in release:
            held = self.held.pop(seq)
            out.append((held.pkt, now - held.arrival_us, DISPOSITION_TIMEOUT))
        self.expected_next = give_up_below
        out.extend(self._flush_consecutive(now, DISPOSITION_TIMEOUT))
        return out

    def next_deadline(self) -> Optional[int]:
        if not self.held:
            return None
        return min(h.deadline_us for h in self.held.values())

    def _flush_consecutive(self, now: int, disposition: str):
        out = []
        while self.expected_next in self.held:
            held = self.held.pop(self.expected_next)
            out.append((held.pkt, now - held.arrival_us, disposition))
            self.expected_next += 1
        return out


class EqualizerLines:
    """Per-flow delay lines that level out end-to-end latency across paths.

    Every flow is delayed so packets leave at (max path RTT)/2 plus a
    variation guard after ingress; within a flow release order is FIFO.
    Sequencing is never consulted. A packet whose delay already exceeds the
    target by more than max_hold is discarded instead of released.
    """

    DISCARD = -1

    def __init__(self, k: float, max_hold_us: int):
        self.k = k
        self.max_hold_us = max_hold_us
        self._last_release: dict[int, int] = {}
        self.discard_count = 0
        self.release_count = 0

    def target_delay_us(self, stats: PathStats) -> float:
        paths = stats.sampled_path_ids()
        srtts = [stats.srtt(p) for p in paths]
        guard = self.k * max(stats.rttvar(p) for p in paths)
        return max(srtts) / 2.0 + guard

    def on_arrival(self, pkt: TunnelPacket, now: int, stats: PathStats) -> int:
        """Return the scheduled release time, or EqualizerLines.DISCARD."""
        target = self.target_delay_us(stats)
        if now - pkt.ingress_time > target + self.max_hold_us:
            self.discard_count += 1
            return self.DISCARD
        added = target - stats.srtt(pkt.path_id) / 2.0
        added = min(max(added, 0.0), float(self.max_hold_us))
        release = now + int(round(added))
        floor = self._last_release.get(pkt.path_id)
        if floor is not None and release < floor:
            release = floor
        self._last_release[pkt.path_id] = release
        self.release_count += 1
        return release


class BaseReceiver:
    """Common receiver plumbing: path stats and the delivery sink.

    deliver is callback(pkt, time_us, residency_us, disposition); schedule is
    callback(at_us, fn) on the run's event queue (deadline expiry is an
    event, never a timer thread).
    """

    def __init__(self, deliver: Callable[[TunnelPacket, int, int, str], None],
                 schedule: Callable[[int, Callable[[int], None]], int]):
        self.stats = PathStats()
        self._deliver = deliver
        self._schedule = schedule
        self.late_count = 0
        self.gap_count = 0
        self.discard_count = 0

    def on_packet(self, pkt: TunnelPacket, now: int) -> None:
        raise NotImplementedError


class PassthroughReceiver(BaseReceiver):
    """No reordering: every packet goes straight to the application."""

    def on_packet(self, pkt: TunnelPacket, now: int) -> None:
        self.stats.update(pkt.path_id, pkt.sender_rtt_report)
        self._deliver(pkt, now, 0, DISPOSITION_INORDER)


class ResequencingReceiver(BaseReceiver):
    """Static or adaptive timing-threshold reordering."""

    def __init__(self, deliver, schedule, config: ReorderConfig,
                 fixed_threshold_us: Optional[float] = None):
        super().__init__(deliver, schedule)
        self.config = config
        self.buffer = ReorderBuffer()
        self._fixed_threshold_us = fixed_threshold_us

    def threshold_us(self) -> float:
        if self._fixed_threshold_us is not None:
            return min(self._fixed_threshold_us, float(self.config.max_hold_us))
        return adaptive_threshold(self.stats, self.config.adaptive_k,
                                  self.config.max_hold_us)

    def on_packet(self, pkt: TunnelPacket, now: int) -> None:
        self.stats.update(pkt.path_id, pkt.sender_rtt_report)
        out = self.buffer.on_arrival(pkt, now, self.threshold_us())
        if out:
            self._emit(out, now)
        else:
            # Packet was held; arm its expiry. Events for holds that get
            # released early fire as no-ops.
            deadline = self.buffer.held[pkt.overall_seq].deadline_us
            self._schedule(deadline, self._on_deadline)

    def _on_deadline(self, now: int) -> None:
        self._emit(self.buffer.on_deadline(now), now)

    def _emit(self, out, now: int) -> None:
        for pkt, residency, disposition in out:
            if disposition == DISPOSITION_LATE:
                self.late_count += 1
            self._deliver(pkt, now, residency, disposition)
        self.gap_count = self.buffer.gap_count


class EqualizingReceiver(BaseReceiver):
    """Per-flow delay equalization with late-packet discard."""

    def __init__(self, deliver, schedule, config: ReorderConfig,
                 on_discard: Callable[[TunnelPacket, int], None]):
        super().__init__(deliver, schedule)
        self.lines = EqualizerLines(config.adaptive_k, config.max_hold_us)
        self._on_discard = on_discard

    def on_packet(self, pkt: TunnelPacket, now: int) -> None:
        self.stats.update(pkt.path_id, pkt.sender_rtt_report)
        release = self.lines.on_arrival(pkt, now, self.stats)
        if release == EqualizerLines.DISCARD:
            self.discard_count += 1
            self._on_discard(pkt, now)
            return
        residency = release - now
        self._schedule(
            release,
            lambda t, p=pkt, r=residency: self._deliver(p, t, r, DISPOSITION_INORDER),
        )
