"""Run metrics: append-only logs plus the evaluation quantities computed from
them (per-path throughput, arrival-order scatter, reordering extent, packet
delay variation) and deterministic CSV/JSON export.

Export schema version 1. Column layouts are fixed; see the README for the
full schema reference.
"""

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

SCHEMA_VERSION = 1


class Delivery(NamedTuple):
    time_us: int
    overall_seq: int
    path_id: int
    ingress_time_us: int
    residency_us: int
    disposition: str


class Arrival(NamedTuple):
    time_us: int
    overall_seq: int
    path_id: int
    ingress_time_us: int


class Send(NamedTuple):
    time_us: int
    path_id: int
    overall_seq: int
    flow_seq: int
    size_bytes: int
    rtt_report_us: int


class Drop(NamedTuple):
    time_us: int
    path_id: int
    overall_seq: int


class Discard(NamedTuple):
    time_us: int
    path_id: int
    overall_seq: int


class Decision(NamedTuple):
    time_us: int
    overall_seq: int
    path_id: int
    etas_us: Optional[tuple]


class FlowSample(NamedTuple):
    time_us: int
    path_id: int
    srtt_us: float
    cwnd: float
    in_flight: int
    queue_len: int


class PdvSample(NamedTuple):
    overall_seq: int
    pdv_us: float


@dataclass
class PdvResult:
    samples: list[PdvSample]
    skipped: int


@dataclass
class MetricsLog:
    """Everything a run records; all lists are append-only and time-ordered."""

    deliveries: list[Delivery] = field(default_factory=list)
    arrivals: list[Arrival] = field(default_factory=list)
    sends: list[Send] = field(default_factory=list)
    drops: list[Drop] = field(default_factory=list)
    discards: list[Discard] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    flow_samples: list[FlowSample] = field(default_factory=list)
    ingress_count: int = 0
    timeout_gaps: int = 0
    late_count: int = 0
    window_violations: int = 0
    drained: bool = True


def _stream(log: MetricsLog, stream: str):
    """(time, seq, path) tuples of the chosen record stream."""
    if stream == "deliveries":
        return [(d.time_us, d.overall_seq, d.path_id) for d in log.deliveries]
    if stream == "arrivals":
        return [(a.time_us, a.overall_seq, a.path_id) for a in log.arrivals]
    raise ValueError(f"unknown stream {stream!r}")


def compute_pdv(log: MetricsLog, nominal_interval_us: float,
                stream: str = "deliveries") -> PdvResult:
    """Delay variation between consecutive sequence numbers.

    pdv(n) = (t(n) - t(n-1)) - nominal interval, using application-visible
    times of the chosen stream; negative when a packet landed before the one
    preceding it in sequence. Sequence numbers whose predecessor never landed
    are skipped and counted. Pure function of the (seq, time) pairs, so log
    record order does not matter.
    """
    times = {seq: t for t, seq, _ in _stream(log, stream)}
    samples = []
    skipped = 0
    for seq in sorted(times):
        if seq == 0:
            continue
        prev = times.get(seq - 1)
        if prev is None:
            skipped += 1
            continue
        samples.append(PdvSample(seq, (times[seq] - prev) - nominal_interval_us))
    return PdvResult(samples, skipped)


def arrival_order_scatter(log: MetricsLog,
                          stream: str = "arrivals") -> list[tuple[int, int]]:
    """Sequence numbers in order of arrival; monotone iff nothing reordered."""
    return [(i, seq) for i, (_, seq, _) in enumerate(_stream(log, stream))]


def reordering_extent(log: MetricsLog, stream: str = "arrivals") -> dict:
    """Scrambling summary of a record stream.

    out_of_order_count is the number of packets arriving after a higher
    sequence number was already seen; max_displacement the worst gap between
    a packet's arrival position and its in-sequence position.
    """
    seqs = [seq for _, seq, _ in _stream(log, stream)]
    rank = {seq: i for i, seq in enumerate(sorted(seqs))}
    out_of_order = 0
    max_disp = 0
    high = -1
    for i, seq in enumerate(seqs):
        if seq < high:
            out_of_order += 1
        else:
            high = seq
        max_disp = max(max_disp, i - rank[seq])
    return {
        "out_of_order_count": out_of_order,
        "max_displacement": max_disp,
        "gap_count": log.timeout_gaps,
    }


def throughput_series(log: MetricsLog, bin_us: int,
                      per_path: bool = True) -> list[tuple[int, int, float]]:
    """Delivered payload throughput per time bin.

    Rows of (bin_start_us, path_id, bits_per_second); path_id is -1 for the
    aggregate series when per_path is false. Bins with no traffic emit zero
    rows so series align across paths.
    """
    if bin_us <= 0:
        raise ValueError("bin_us must be > 0")
    if not log.deliveries:
        return []
    size_by_seq = {s.overall_seq: s.size_bytes for s in log.sends}
    last_bin = max(d.time_us for d in log.deliveries) // bin_us
    paths = sorted({d.path_id for d in log.deliveries}) if per_path else [-1]
    bits: dict[tuple[int, int], int] = {}
    for d in log.deliveries:
        key = (d.time_us // bin_us, d.path_id if per_path else -1)
        bits[key] = bits.get(key, 0) + size_by_seq.get(d.overall_seq, 0) * 8
    rows = []
    for b in range(last_bin + 1):
        for p in paths:
            rows.append((b * bin_us, p, bits.get((b, p), 0) * 1_000_000 / bin_us))
    return rows


def percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile of an already sorted list."""
    if not sorted_values:
        return 0.0
    rank = math.ceil(q * len(sorted_values))
    return sorted_values[max(0, min(len(sorted_values) - 1, rank - 1))]


def pdv_histogram(samples: list[PdvSample], bin_width_us: float = 1000.0) -> dict:
    """Histogram of pdv values as bin edges plus counts."""
    if not samples:
        return {"bin_edges_us": [], "counts": []}
    values = sorted(s.pdv_us for s in samples)
    lo = float(values[0] // bin_width_us * bin_width_us)
    n_bins = int((values[-1] - lo) // bin_width_us) + 1
    counts = [0] * n_bins
    for v in values:
        counts[min(int((v - lo) // bin_width_us), n_bins - 1)] += 1
    edges = [round(lo + i * bin_width_us, 3) for i in range(n_bins + 1)]
    return {"bin_edges_us": edges, "counts": counts}


def summarize(log: MetricsLog, nominal_interval_us: float,
              pdv_stream: str = "deliveries") -> dict:
    """Run totals plus the delay-variation distribution summary."""
    pdv = compute_pdv(log, nominal_interval_us, pdv_stream)
    values = sorted(s.pdv_us for s in pdv.samples)
    mean = sum(values) / len(values) if values else 0.0
    return {
        "schema_version": SCHEMA_VERSION,
        "sent": log.ingress_count,
        "transmitted": len(log.sends),
        "delivered": len(log.deliveries),
        "dropped": len(log.drops),
        "discarded": len(log.discards),
        "late": log.late_count,
        "timeout_gaps": log.timeout_gaps,
        "window_violations": log.window_violations,
        "drained": log.drained,
        "pdv": {
            "count": len(values),
            "skipped": pdv.skipped,
            "mean_us": round(mean, 3),
            "p50_us": round(percentile(values, 0.50), 3),
            "p95_us": round(percentile(values, 0.95), 3),
            "p99_us": round(percentile(values, 0.99), 3),
        },
    }


# -- file export -------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_metric(log: MetricsLog, metric: str, fmt: str, path,
                  nominal_interval_us: float, bin_us: int = 100_000,
                  pdv_stream: str = "deliveries") -> None:
    """Write one named metric to path in the requested format."""
    if metric == "deliveries":
        # One row per packet the receiver disposed of, discards included,
        # merged in time order.
        header = ["delivery_time_us", "overall_seq", "path_id",
                  "buffer_residency_us", "disposition"]
        rows = sorted(
            [(d.time_us, d.overall_seq, d.path_id, d.residency_us, d.disposition)
             for d in log.deliveries]
            + [(d.time_us, d.overall_seq, d.path_id, 0, "discarded")
               for d in log.discards]
        )
    elif metric == "arrivals":
        header = ["arrival_time_us", "overall_seq", "path_id", "ingress_time_us"]
        rows = log.arrivals
    elif metric == "drops":
        header = ["time_us", "path_id", "overall_seq"]
        rows = log.drops
    elif metric == "discards":
        header = ["time_us", "path_id", "overall_seq"]
        rows = log.discards
    elif metric == "srtt":
        header = ["time_us", "path_id", "srtt_us"]
        rows = [(s.time_us, s.path_id, s.srtt_us) for s in log.flow_samples]
    elif metric == "flows":
        header = ["time_us", "path_id", "srtt_us", "cwnd", "in_flight", "queue_len"]
        rows = log.flow_samples
    elif metric == "decisions":
        n_paths = max((len(d.etas_us) for d in log.decisions if d.etas_us), default=0)
        header = ["time_us", "overall_seq", "path_id"] + [
            f"eta_{i}_us" for i in range(n_paths)
        ]
        rows = [
            (d.time_us, d.overall_seq, d.path_id)
            + tuple(d.etas_us if d.etas_us else [""] * n_paths)
            for d in log.decisions
        ]
    elif metric == "throughput":
        header = ["bin_start_us", "path_id", "throughput_bps"]
        rows = throughput_series(log, bin_us)
    elif metric == "pdv":
        header = ["overall_seq", "pdv_us"]
        rows = compute_pdv(log, nominal_interval_us, pdv_stream).samples
    elif metric == "pdv_histogram":
        payload = pdv_histogram(
            compute_pdv(log, nominal_interval_us, pdv_stream).samples)
        write_json(path, payload)
        return
    elif metric == "scatter":
        header = ["arrival_index", "overall_seq"]
        rows = arrival_order_scatter(log)
    elif metric == "headers":
        # Bit-exact encapsulation headers of every transmitted packet.
        from .flow import TunnelPacket, encode_header
        header = ["time_us", "header_hex"]
        rows = [
            (s.time_us,
             encode_header(TunnelPacket(s.overall_seq, s.size_bytes, 0,
                                        path_id=s.path_id, flow_seq=s.flow_seq,
                                        sender_rtt_report=s.rtt_report_us)).hex())
            for s in log.sends
        ]
    else:
        raise ValueError(f"unknown metric {metric!r}")

    if fmt == "csv":
        write_csv(path, header, rows)
    elif fmt == "json":
        write_json(path, [dict(zip(header, [_fmt(v) for v in row]))
                          for row in rows])
    else:
        raise ValueError(f"unknown format {fmt!r}")


EXPORTABLE_METRICS = (
    "arrivals", "decisions", "deliveries", "discards", "drops", "flows",
    "headers", "pdv", "pdv_histogram", "scatter", "srtt", "throughput",
)
