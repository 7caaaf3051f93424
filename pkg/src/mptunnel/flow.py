"""Per-path tunnel flow: encapsulation header codec, per-flow sequencing,
send queue and TCP-like window-based congestion control with smoothed RTT
estimation.

A flow accepts packets handed to it by the scheduler, stamps them with its
own sequence number and the current smoothed RTT, and transmits while the
congestion window has room; the rest wait in an unbounded FIFO send queue
whose occupancy is a reported metric. Losses are inferred from an ack gap of
three or from an ack-silence timeout; there are no retransmissions, the
tunnel carries unreliable traffic.
"""

from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Optional

SEQ48_MASK = (1 << 48) - 1
RTT_REPORT_MAX = (1 << 32) - 1
HEADER_LEN = 16
HEADER_VERSION = 1

SRTT_GAIN = 0.125
RTTVAR_GAIN = 0.25

INITIAL_CWND = 2.0
INITIAL_SSTHRESH = 64.0
MIN_SSTHRESH = 2.0
DUP_ACK_THRESHOLD = 3
TIMEOUT_RTT_MULTIPLE = 4
# Floor for the ack-silence timeout; 4*srtt alone mis-fires on very low
# latency paths and before the estimator has converged after an RTT jump.
MIN_TIMEOUT_US = 200_000


@dataclass
class TunnelPacket:
    """One ingress datagram wrapped with the multipath encapsulation header.

    overall_seq is the tunnel-wide sequence stamped at ingress; flow_seq,
    path_id and sender_rtt_report are stamped by the flow that carries it.
    """

    overall_seq: int
    payload_len: int
    ingress_time: int
    path_id: int = 0
    flow_seq: int = 0
    sender_rtt_report: int = 0


@dataclass(frozen=True)
class AckRecord:
    """Acknowledgment of one flow_seq, carrying both timestamps of the sample."""

    flow_seq: int
    send_time: int
    ack_time: int


@dataclass(frozen=True)
class HeaderFields:
    version: int
    path_id: int
    overall_seq: int
    sender_rtt_report: int
    flow_seq_low32: int


def encode_header(pkt: TunnelPacket) -> bytes:
    """Encode the 16-byte tunnel header, network byte order.

    Layout: version(1) | path_id(1) | overall_seq(6) | rtt_report_us(4) |
    flow_seq_low32(4). The RTT report saturates at 2^32-1 microseconds and
    both sequence fields wrap modulo their width.
    """
    report = min(int(pkt.sender_rtt_report), RTT_REPORT_MAX)
    return (
        bytes((HEADER_VERSION, pkt.path_id & 0xFF))
        + (pkt.overall_seq & SEQ48_MASK).to_bytes(6, "big")
        + report.to_bytes(4, "big")
        + (pkt.flow_seq & 0xFFFFFFFF).to_bytes(4, "big")
    )


def decode_header(buf: bytes) -> HeaderFields:
    if len(buf) < HEADER_LEN:
        raise ValueError(f"header needs {HEADER_LEN} bytes, got {len(buf)}")
    return HeaderFields(
        version=buf[0],
        path_id=buf[1],
        overall_seq=int.from_bytes(buf[2:8], "big"),
        sender_rtt_report=int.from_bytes(buf[8:12], "big"),
        flow_seq_low32=int.from_bytes(buf[12:16], "big"),
    )


class Flow:
    """FlowState plus its operations for one path.

    transmit is a callback(packet, now) that hands the packet to the path;
    the flow has already counted it in flight when the callback runs. Before
    the first RTT sample ever arrives, srtt reads as a prior of twice the
    configured one-way latency (used for header stamping and scheduler views,
    never refreshed once real samples exist).
    """

    def __init__(self, path_id: int, prior_rtt_us: float,
                 transmit: Callable[[TunnelPacket, int], None]):
        self.path_id = path_id
        self.prior_rtt_us = float(prior_rtt_us)
        self._transmit = transmit

        self.cwnd = INITIAL_CWND
        self.ssthresh = INITIAL_SSTHRESH
        self.in_flight = 0
        self.send_queue: deque[TunnelPacket] = deque()
        self.next_flow_seq = 0

        self._srtt: Optional[float] = None
        self._rttvar: Optional[float] = None

        # flow_seq -> [send_time, acks_seen_above]
        self._outstanding: "OrderedDict[int, list]" = OrderedDict()
        self._recover_seq = 0
        self._ca_credit = 0.0

        self.packets_lost = 0
        self.window_violations = 0

    # -- RTT estimation ----------------------------------------------------

    @property
    def srtt(self) -> float:
        return self._srtt if self._srtt is not None else self.prior_rtt_us

    @property
    def rttvar(self) -> float:
        return self._rttvar if self._rttvar is not None else 0.0

    @property
    def has_rtt_sample(self) -> bool:
        return self._srtt is not None

    def update_rtt(self, sample_us: float) -> None:
        """Feed one round-trip sample into the smoothed estimators."""
        if sample_us <= 0:
            raise ValueError(f"RTT sample must be positive, got {sample_us}")
        if self._srtt is None:
            self._srtt = float(sample_us)
            self._rttvar = sample_us / 2.0
        else:
            self._rttvar = (1 - RTTVAR_GAIN) * self._rttvar + RTTVAR_GAIN * abs(
                self._srtt - sample_us
            )
            self._srtt = (1 - SRTT_GAIN) * self._srtt + SRTT_GAIN * sample_us

    # -- send path ----------------------------------------------------------

    def enqueue(self, pkt: TunnelPacket, now: int) -> None:
        """Accept a packet from the scheduler; transmit now if the window allows."""
        pkt.path_id = self.path_id
        pkt.flow_seq = self.next_flow_seq
        pkt.sender_rtt_report = min(int(round(self.srtt)), RTT_REPORT_MAX)
        self.next_flow_seq = (self.next_flow_seq + 1) & SEQ48_MASK
        self.send_queue.append(pkt)
        self.pump(now)

    def pump(self, now: int) -> None:
        """Transmit from the send queue while the window has room."""
        while self.send_queue and self.in_flight < self.cwnd:
            # Window discipline at initiation, counted rather than asserted
            # so whole runs can be checked for violations after the fact.
            if self.in_flight > self.cwnd:
                self.window_violations += 1
            pkt = self.send_queue.popleft()
            self.in_flight += 1
            self._outstanding[pkt.flow_seq] = [now, 0]
            self._transmit(pkt, now)

    def outstanding_seqs(self) -> list[int]:
        return list(self._outstanding)

    # -- ack / loss handling -------------------------------------------------

    def ack_received(self, flow_seq: int, now: int) -> Optional[AckRecord]:
        """Build the ack record for a flow_seq and apply it; None if unknown."""
        entry = self._outstanding.get(flow_seq)
        if entry is None:
            return None
        ack = AckRecord(flow_seq, entry[0], now)
        self.on_ack(ack, now)
        return ack

    def on_ack(self, ack: AckRecord, now: int) -> None:
        """Apply one acknowledgment: release window, sample RTT, grow cwnd.

        Duplicate or unknown acks are ignored. Window growth is slow start
        (one packet per ack) below ssthresh, else congestion avoidance via
        fractional accumulation of 1/cwnd per ack.
        """
        if ack.flow_seq not in self._outstanding:
            return
        del self._outstanding[ack.flow_seq]
        self.in_flight -= 1
        self.update_rtt(ack.ack_time - ack.send_time)

        if self.cwnd < self.ssthresh:
            self.cwnd += 1.0
        else:
            # 1/cwnd per ack, accumulated as whole acks so the arithmetic is
            # exact: one full window of acks grows cwnd by one packet.
            self._ca_credit += 1.0
            if self._ca_credit >= self.cwnd:
                self._ca_credit -= self.cwnd
                self.cwnd += 1.0

        # Dup-ack-equivalent gap detection: an outstanding packet with three
        # acknowledged successors is declared lost.
        lost = []
        for seq, entry in self._outstanding.items():
            if seq < ack.flow_seq:
                entry[1] += 1
                if entry[1] >= DUP_ACK_THRESHOLD:
                    lost.append(seq)
        for seq in lost:
            self.declare_lost(seq)
        self.pump(now)

    def declare_lost(self, flow_seq: int) -> None:
        """Give up on an unacknowledged packet and react to the loss."""
        if flow_seq not in self._outstanding:
            return
        del self._outstanding[flow_seq]
        self.in_flight -= 1
        self.packets_lost += 1
        self.on_loss(flow_seq)

    def on_loss(self, lost_flow_seq: int) -> None:
        """Multiplicative decrease, at most once per round trip.

        Losses of packets sent before the previous halving (flow_seq below
        the recovery point) do not halve again.
        """
        if lost_flow_seq < self._recover_seq:
            return
        self.ssthresh = max(self.cwnd / 2.0, MIN_SSTHRESH)
        self.cwnd = self.ssthresh
        self._ca_credit = 0.0
        self._recover_seq = self.next_flow_seq

    def timeout_deadline_us(self, now: int) -> int:
        return now + max(int(round(TIMEOUT_RTT_MULTIPLE * self.srtt)), MIN_TIMEOUT_US)

    def on_timeout(self, now: int) -> int:
        """Ack-silence timeout: everything outstanding is presumed lost."""
        stale = list(self._outstanding)
        for seq in stale:
            self.declare_lost(seq)
        self.pump(now)
        return len(stale)
