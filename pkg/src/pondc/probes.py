"""Ping, traceroute and CBR probes over the engine, plus delay calibration."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import DelayConstants, ProbeConfig
from .errors import Infeasible, InvalidArgument, Unreachable
from .routing import DEFAULT_FRAME_US, Route, coupler_schedules, route
from .simcore import Engine, PacketKind, propagation_delay, transmission_delay
from .topo.model import NodeKind, Topology


@dataclass(frozen=True)
class CalibrationTargets:
    per_node_rtt_us: float = 200.0
    core_to_olt_extra_us: float = 700.0
    end_to_end_max_us: float = 2000.0
    range_min_us: float = 195.8
    range_max_us: float = 1761.9

    def __post_init__(self) -> None:
        if not self.range_min_us < self.range_max_us <= self.end_to_end_max_us:
            raise InvalidArgument("need range_min < range_max <= end_to_end_max")


@dataclass(frozen=True)
class RttStats:
    count: int
    mean_us: float
    min_us: float
    max_us: float

    @classmethod
    def of(cls, samples: Sequence[float]) -> RttStats | None:
        if not samples:
            return None
        return cls(len(samples), statistics.fmean(samples), min(samples), max(samples))


# --- ping ---------------------------------------------------------------------


@dataclass
class PingResult:
    src: str
    dst: str
    request_ids: list[int] = field(default_factory=list)
    rtts: dict[int, float] = field(default_factory=dict)

    @property
    def sent(self) -> int:
        return len(self.request_ids)

    @property
    def loss_fraction(self) -> float:
        if not self.request_ids:
            return 0.0
        return (self.sent - len(self.rtts)) / self.sent

    @property
    def stats(self) -> RttStats | None:
        return RttStats.of([self.rtts[i] for i in self.request_ids if i in self.rtts])


def ping(
    engine: Engine,
    src: str,
    dst: str,
    count: int,
    cfg: ProbeConfig = ProbeConfig(),
    *,
    start_us: float | None = None,
    drive: bool = True,
) -> PingResult:
    """Send ``count`` echo requests ``cfg.inter_probe_gap_us`` apart.

    With ``drive=False`` the requests are only scheduled; run the engine
    yourself before reading the result. Unreachable pairs come back with
    loss 1.0.
    """
    if count <= 0:
        raise InvalidArgument("ping count must be positive")
    result = PingResult(src, dst)
    if src == dst:
        result.request_ids = list(range(-count, 0))
        result.rtts = {i: 0.0 for i in result.request_ids}
        return result
    t0 = engine.now if start_us is None else start_us
    for k in range(count):
        pkt = engine.new_packet(PacketKind.ECHO_REQUEST, src, dst, cfg.probe_size_bytes)
        result.request_ids.append(pkt.id)

        def on_reply(reply, t, pkt=pkt):
            if reply.kind is PacketKind.ECHO_REPLY:
                result.rtts[pkt.id] = t - pkt.sent_at_us

        engine.inject(pkt, t0 + k * cfg.inter_probe_gap_us, on_reply)
    if drive:
        engine.run()
    return result


# --- traceroute ---------------------------------------------------------------


@dataclass(frozen=True)
class ProbeSample:
    iteration: int
    probe_index: int
    hop_index: int
    node_id: str
    rtt_us: float


@dataclass(frozen=True)
class HopStats:
    hop_index: int
    node_id: str
    samples: tuple[float, ...]
    mean_us: float
    min_us: float
    max_us: float

    @classmethod
    def of(cls, hop_index: int, node_id: str, samples: Sequence[float]) -> HopStats:
        s = tuple(samples)
        if not s:
            nan = float("nan")
            return cls(hop_index, node_id, s, nan, nan, nan)
        return cls(hop_index, node_id, s, statistics.fmean(s), min(s), max(s))


@dataclass(frozen=True)
class LatencyReport:
    src: str
    dst: str
    hops: tuple[HopStats, ...]
    end_to_end: HopStats | None
    loss_fraction: float
    samples: tuple[ProbeSample, ...] = ()
    iterations: int = 0
    probes_per_run: int = 0

    def increments(self) -> list[tuple[int, str, float]]:
        """(hop index, node, mean RTT added by that hop)."""
        out = []
        prev = 0.0
        for h in self.hops:
            out.append((h.hop_index, h.node_id, h.mean_us - prev))
            prev = h.mean_us
        return out

    def iteration_means(self) -> list[tuple[int, int, str, float]]:
        """(iteration, hop index, node, mean RTT) for every iteration."""
        buckets: dict[tuple[int, int, str], list[float]] = {}
        for s in self.samples:
            buckets.setdefault((s.iteration, s.hop_index, s.node_id), []).append(s.rtt_us)
        return [
            (it, hop, node, statistics.fmean(v))
            for (it, hop, node), v in sorted(buckets.items())
        ]


def traceroute(engine: Engine, src: str, dst: str, cfg: ProbeConfig = ProbeConfig()) -> LatencyReport:
    """TTL-limited echo probes toward ``dst``, one TTL per visible hop.

    Every (iteration, TTL) pair sends ``cfg.probes_per_run`` probes, so each
    hop collects ``iterations * probes_per_run`` samples. RTTs are
    cumulative from the source to the replying hop.
    """
    try:
        r = route(engine.tables, src, dst)
    except Unreachable:
        return LatencyReport(src, dst, (), None, 1.0, (), cfg.iterations, cfg.probes_per_run)
    hops = r.hops(engine.topology)
    if not hops:
        return LatencyReport(src, dst, (), None, 0.0, (), cfg.iterations, cfg.probes_per_run)

    collected: list[ProbeSample] = []
    t0 = engine.now
    k = 0
    sent = 0
    for it in range(1, cfg.iterations + 1):
        for ttl in range(1, len(hops) + 1):
            for probe in range(1, cfg.probes_per_run + 1):
                pkt = engine.new_packet(
                    PacketKind.ECHO_REQUEST, src, dst, cfg.probe_size_bytes, ttl=ttl
                )

                def on_reply(reply, t, pkt=pkt, it=it, probe=probe, ttl=ttl):
                    collected.append(
                        ProbeSample(it, probe, ttl, reply.reporter, t - pkt.sent_at_us)
                    )

                engine.inject(pkt, t0 + k * cfg.inter_probe_gap_us, on_reply)
                k += 1
                sent += 1
    engine.run()

    collected.sort(key=lambda s: (s.iteration, s.probe_index, s.hop_index))
    per_hop: dict[int, list[float]] = {i: [] for i in range(1, len(hops) + 1)}
    for s in collected:
        per_hop[s.hop_index].append(s.rtt_us)
    stats = tuple(HopStats.of(i, hops[i - 1], per_hop[i]) for i in range(1, len(hops) + 1))
    e2e = stats[-1] if hops[-1] == dst else None
    loss = (sent - len(collected)) / sent
    return LatencyReport(
        src, dst, stats, e2e, loss, tuple(collected), cfg.iterations, cfg.probes_per_run
    )


SAMPLE_COLUMNS = ("iteration", "probe_index", "hop_index", "node_id", "rtt_us")
AGGREGATE_COLUMNS = ("hop_index", "node_id", "mean_us", "min_us", "max_us", "samples")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def samples_to_csv(report: LatencyReport) -> str:
    return _csv(
        SAMPLE_COLUMNS,
        ((s.iteration, s.probe_index, s.hop_index, s.node_id, f"{s.rtt_us:.3f}") for s in report.samples),
    )


def aggregate_to_csv(report: LatencyReport) -> str:
    return _csv(
        AGGREGATE_COLUMNS,
        (
            (h.hop_index, h.node_id, f"{h.mean_us:.3f}", f"{h.min_us:.3f}", f"{h.max_us:.3f}", len(h.samples))
            for h in report.hops
        ),
    )


def figure6_csv(report: LatencyReport) -> str:
    return _csv(
        ("iteration", "hop_index", "node_id", "mean_us"),
        ((it, hop, node, f"{m:.3f}") for it, hop, node, m in report.iteration_means()),
    )


def figure7_csv(report: LatencyReport) -> str:
    return _csv(
        ("hop_index", "node_id", "mean_us", "increment_us"),
        (
            (h.hop_index, h.node_id, f"{h.mean_us:.3f}", f"{inc:.3f}")
            for h, (_, _, inc) in zip(report.hops, report.increments())
        ),
    )


# --- calibration ----------------------------------------------------------------


def _segment_fixed_rtt(
    t: Topology,
    r: Route,
    start: int,
    end: int,
    size_bytes: int,
    constants: DelayConstants,
    frame_us: float,
) -> float:
    """Zero-jitter RTT added between route positions ``start`` and ``end``,
    excluding the processing of the node at ``end``."""
    schedules = coupler_schedules(t, frame_us)
    total = 0.0
    for i in range(start, end):
        link = t.links[r.links[i]]
        total += 2 * (propagation_delay(link, constants) + transmission_delay(size_bytes, link.rate_gbps))
    for i in range(start + 1, end):
        nid = r.nodes[i]
        total += 2 * t.nodes[nid].processing_delay_us
        sched = schedules.get(nid)
        if sched is None:
            continue
        prev, nxt = r.nodes[i - 1], r.nodes[i + 1]
        if t.nodes[nxt].kind is NodeKind.OLT:
            total += sched.mean_wait(prev)
        elif t.nodes[prev].kind is NodeKind.OLT:
            total += sched.mean_wait(nxt)
    return total


def calibrate_processing_delays(
    t: Topology,
    targets: CalibrationTargets = CalibrationTargets(),
    *,
    src: str | None = None,
    dst: str | None = None,
    probe_size_bytes: int = 64,
    constants: DelayConstants = DelayConstants(),
    frame_us: float = DEFAULT_FRAME_US,
) -> dict[str, float]:
    """Solve routing-node processing delays for the target per-hop RTT increments.

    Each visible hop on the src->dst path must add ``per_node_rtt_us``; the
    OLT hop right after a core node adds ``core_to_olt_extra_us`` on top.
    Because a hop's node is charged twice per round trip,
    ``delay = (target - fixed) / 2`` where ``fixed`` covers links,
    transparent elements and mean TDM wait. Nodes off the path take the
    value solved for the first on-path node of the same kind.
    """
    from .addressing import derive_address_plan
    from .routing import compute_forwarding_tables
    from .topo.builders import default_endpoints

    if src is None or dst is None:
        d_src, d_dst = default_endpoints(t)
        src = src or d_src
        dst = dst or d_dst
    tables = compute_forwarding_tables(t, derive_address_plan(t))
    r = route(tables, src, dst)

    solved: dict[str, float] = {}
    prev_pos = 0
    prev_kind = t.nodes[src].kind
    for pos in range(1, len(r.nodes)):
        nid = r.nodes[pos]
        node = t.nodes[nid]
        if node.is_transparent:
            continue
        target = targets.per_node_rtt_us
        if node.kind is NodeKind.OLT and prev_kind is NodeKind.CORE_NODE:
            target += targets.core_to_olt_extra_us
        fixed = _segment_fixed_rtt(t, r, prev_pos, pos, probe_size_bytes, constants, frame_us)
        delay = (target - fixed) / 2
        if delay < -1e-9:
            raise Infeasible(
                f"hop {nid!r}: fixed RTT {fixed:.3f} us exceeds target {target:.3f} us "
                f"by {fixed - target:.3f} us",
                node_id=nid,
                residual_us=fixed - target,
            )
        solved[nid] = max(delay, 0.0)
        prev_pos, prev_kind = pos, node.kind

    by_kind: dict[NodeKind, float] = {}
    for nid, delay in solved.items():
        by_kind.setdefault(t.nodes[nid].kind, delay)
    if NodeKind.SERVER in by_kind:
        by_kind.setdefault(NodeKind.CAMERA, by_kind[NodeKind.SERVER])
    out = dict(solved)
    for nid in sorted(t.nodes):
        node = t.nodes[nid]
        if nid not in out and not node.is_transparent and node.kind in by_kind:
            out[nid] = by_kind[node.kind]
    return out


# --- CBR flows -------------------------------------------------------------------


@dataclass
class CbrResult:
    src: str
    dst: str
    packet_ids: list[int] = field(default_factory=list)
    delivered_ids: set[int] = field(default_factory=set)
    latencies: list[float] = field(default_factory=list)
    max_queue_depth: int = 0

    @property
    def sent(self) -> int:
        return len(self.packet_ids)

    @property
    def delivered_fraction(self) -> float:
        if not self.packet_ids:
            return 1.0
        return len(self.delivered_ids) / self.sent


def bottleneck_gbps(engine: Engine, src: str, dst: str) -> float:
    r = route(engine.tables, src, dst)
    return min((engine.topology.links[lid].rate_gbps for lid in r.links), default=float("inf"))


def run_cbr_flow(
    engine: Engine,
    src: str,
    dst: str,
    rate_mbps: float = 10.0,
    duration_us: float = 1_000_000.0,
    *,
    packet_size_bytes: int = 1200,
    start_us: float | None = None,
    drive: bool = True,
) -> CbrResult:
    """Constant-bit-rate Data stream; reports delivery and peak queue depth."""
    if rate_mbps <= 0:
        raise InvalidArgument("rate_mbps must be positive")
    if duration_us < 0:
        raise InvalidArgument("duration_us must be >= 0")
    if rate_mbps > bottleneck_gbps(engine, src, dst) * 1e3:
        raise InvalidArgument(f"{rate_mbps} Mbps exceeds the path bottleneck")
    result = CbrResult(src, dst)
    interval = packet_size_bytes * 8 / rate_mbps
    t0 = engine.now if start_us is None else start_us
    n = 0
    engine.reset_queue_stats()
    while n * interval < duration_us:
        pkt = engine.new_packet(PacketKind.DATA, src, dst, packet_size_bytes)
        result.packet_ids.append(pkt.id)

        def on_deliver(p, t, result=result):
            result.delivered_ids.add(p.id)
            result.latencies.append(t - p.sent_at_us)

        engine.inject(pkt, t0 + n * interval, on_deliver)
        n += 1
    if drive:
        engine.run()
        result.max_queue_depth = engine.max_queue_depth
    return result


# --- scaling comparison -------------------------------------------------------------


@dataclass(frozen=True)
class HopDelta:
    node_id: str
    baseline_hop: int | None
    variant_hop: int | None
    baseline_increment_us: float | None
    variant_increment_us: float | None

    @property
    def status(self) -> str:
        if self.baseline_hop is None:
            return "added"
        if self.variant_hop is None:
            return "removed"
        return "shared"

    @property
    def delta_us(self) -> float | None:
        if self.status != "shared":
            return None
        return self.variant_increment_us - self.baseline_increment_us


@dataclass(frozen=True)
class ScalingComparison:
    rows: tuple[HopDelta, ...]
    common_prefix: int
    baseline_e2e_us: float
    variant_e2e_us: float
    tolerance_us: float

    @property
    def shared(self) -> list[HopDelta]:
        return [r for r in self.rows if r.status == "shared"]

    @property
    def max_shared_delta_us(self) -> float:
        return max((abs(r.delta_us) for r in self.shared), default=0.0)

    @property
    def shared_match(self) -> bool:
        return self.max_shared_delta_us < self.tolerance_us

    @property
    def added_sum_us(self) -> float:
        return sum(r.variant_increment_us for r in self.rows if r.status == "added")

    @property
    def removed_sum_us(self) -> float:
        return sum(r.baseline_increment_us for r in self.rows if r.status == "removed")

    @property
    def e2e_delta_us(self) -> float:
        return self.variant_e2e_us - self.baseline_e2e_us

    @property
    def additivity_residual_us(self) -> float:
        """e2e change not explained by added/removed hops and shared drift."""
        drift = sum(r.delta_us for r in self.shared)
        return self.e2e_delta_us - (self.added_sum_us - self.removed_sum_us + drift)


def compare_scaling(
    baseline: LatencyReport, variant: LatencyReport, tolerance_us: float = 1.0
) -> ScalingComparison:
    """Align two traceroute reports by hop node and diff per-hop increments."""
    base_inc = {node: (hop, inc) for hop, node, inc in baseline.increments()}
    var_inc = {node: (hop, inc) for hop, node, inc in variant.increments()}
    rows = []
    for hop, node, inc in variant.increments():
        b = base_inc.get(node)
        rows.append(HopDelta(node, b[0] if b else None, hop, b[1] if b else None, inc))
    for hop, node, inc in baseline.increments():
        if node not in var_inc:
            rows.append(HopDelta(node, hop, None, inc, None))
    prefix = 0
    for b, v in zip(baseline.hops, variant.hops):
        if b.node_id != v.node_id:
            break
        prefix += 1
    b_e2e = baseline.hops[-1].mean_us if baseline.hops else 0.0
    v_e2e = variant.hops[-1].mean_us if variant.hops else 0.0
    return ScalingComparison(tuple(rows), prefix, b_e2e, v_e2e, tolerance_us)


def comparison_to_csv(c: ScalingComparison) -> str:
    def fmt(x):
        return "" if x is None else f"{x:.3f}"

    return _csv(
        ("node_id", "status", "baseline_hop", "variant_hop", "baseline_increment_us", "variant_increment_us", "delta_us"),
        (
            (
                r.node_id,
                r.status,
                "" if r.baseline_hop is None else r.baseline_hop,
                "" if r.variant_hop is None else r.variant_hop,
                fmt(r.baseline_increment_us),
                fmt(r.variant_increment_us),
                fmt(r.delta_us),
            )
            for r in c.rows
        ),
    )


def comparison_summary(c: ScalingComparison) -> Mapping[str, str]:
    return {
        "common_prefix_hops": str(c.common_prefix),
        "shared_hops": str(len(c.shared)),
        "max_shared_delta_us": f"{c.max_shared_delta_us:.3f}",
        "baseline_e2e_us": f"{c.baseline_e2e_us:.3f}",
        "variant_e2e_us": f"{c.variant_e2e_us:.3f}",
        "e2e_delta_us": f"{c.e2e_delta_us:.3f}",
        "added_hops_sum_us": f"{c.added_sum_us:.3f}",
        "removed_hops_sum_us": f"{c.removed_sum_us:.3f}",
        "additivity_residual_us": f"{c.additivity_residual_us:.3f}",
        "shared_match": "yes" if c.shared_match else "no",
    }
