"""Programmatic construction of racks, processing cells and the testbeds."""

from __future__ import annotations

from typing import Sequence

from ..config import DEFAULT_JITTER, ProbeConfig
from ..errors import InvalidArgument
from .model import (
    InterconnectMode,
    Link,
    Medium,
    Node,
    NodeKind,
    Topology,
    merge,
)
from .scenario import ScenarioConfig

DEFAULT_SEED = 2019
SWITCH_DELAY_US = 1.0
RACK_RATE_GBPS = 10.0
CORE_RATE_GBPS = 100.0
PON_RATE_GBPS = 10.0
# Gateway -> core, core -> core, core -> core, core -> OLT. The final span is
# the long one; see README for why it is not split evenly.
REFERENCE_SPANS_KM = (10.0, 10.0, 10.0, 85.0)


def _link(a: str, b: str, *, km: float = 0.0, gbps: float, medium: Medium) -> Link:
    return Link(f"{a}-{b}", a, b, km, gbps, medium)


def gateway_id(rack_id: str, index: int, n_gateways: int) -> str:
    return f"{rack_id}G" if n_gateways == 1 else f"{rack_id}G{index}"


def build_rack(
    rack_id: str,
    n_servers: int,
    n_gateways: int,
    link_rate_gbps: float = RACK_RATE_GBPS,
    *,
    cell_id: str | None = None,
    switch_kind: NodeKind = NodeKind.RACK_SWITCH,
) -> Topology:
    """Star of ``n_servers`` servers around one rack switch.

    The first ``n_gateways`` servers are gateways (``R1G`` or ``R1G1``,
    ``R1G2``...); the rest are plain hosts numbered after them (``R1S2``).
    """
    if n_servers <= 0 or n_gateways <= 0:
        raise InvalidArgument("a rack needs at least one server and one gateway")
    if n_gateways > n_servers:
        raise InvalidArgument("n_gateways cannot exceed n_servers")
    if switch_kind not in (NodeKind.RACK_SWITCH, NodeKind.OPTICAL_BACKPLANE):
        raise InvalidArgument("switch_kind must be RackSwitch or OpticalBackplane")

    switch = Node(f"{rack_id}SW", switch_kind, rack_id, cell_id, SWITCH_DELAY_US)
    nodes = [switch]
    for i in range(1, n_servers + 1):
        if i <= n_gateways:
            nodes.append(Node(gateway_id(rack_id, i, n_gateways), NodeKind.GATEWAY_SERVER, rack_id, cell_id))
        else:
            nodes.append(Node(f"{rack_id}S{i}", NodeKind.SERVER, rack_id, cell_id))
    links = [
        _link(n.id, switch.id, gbps=link_rate_gbps, medium=Medium.COPPER)
        for n in nodes[1:]
    ]
    return Topology.from_parts(nodes, links)


def build_cell(
    cell_id: str,
    rack_ids: Sequence[str],
    servers_per_rack: int = 3,
    gateways_per_rack: int = 1,
    *,
    link_rate_gbps: float = RACK_RATE_GBPS,
    inter_rack_km: float = 0.0,
) -> Topology:
    """Racks of one processing cell, their first gateways fully meshed."""
    racks = [
        build_rack(r, servers_per_rack, gateways_per_rack, link_rate_gbps, cell_id=cell_id)
        for r in rack_ids
    ]
    heads = [gateway_id(r, 1, gateways_per_rack) for r in rack_ids]
    mesh = [
        _link(a, b, km=inter_rack_km, gbps=link_rate_gbps, medium=Medium.FIBRE)
        for i, a in enumerate(heads)
        for b in heads[i + 1:]
    ]
    return merge(*racks, links=mesh)


def _raw_reference(mode: InterconnectMode, spans_km: Sequence[float]) -> Topology:
    if len(spans_km) != 4:
        raise InvalidArgument("spans_km needs four values: gateway-core, core-core x2, core-OLT")
    cell_a = build_cell("A", ["A1", "A2", "A3"])
    cell_b = build_cell("B", ["B1", "B2", "B3"])
    camera = Node("CAM1", NodeKind.CAMERA, "A1", "A")
    core = [Node(f"CORE{i}", NodeKind.CORE_NODE) for i in (1, 2, 3)]
    splitter_kind = NodeKind.COUPLER if mode is InterconnectMode.TDM else NodeKind.AWGR
    splitter_id = "CPL" if mode is InterconnectMode.TDM else "AWGR"
    pon = [
        Node("OLT", NodeKind.OLT, None, "B"),
        Node(splitter_id, splitter_kind, None, "B"),
        Node("ONU", NodeKind.ONU, None, "B"),
    ]
    g1, c1, c2, c3 = spans_km
    links = [
        _link("CAM1", "A1SW", gbps=RACK_RATE_GBPS, medium=Medium.COPPER),
        _link("A1G", "CORE1", km=g1, gbps=RACK_RATE_GBPS, medium=Medium.FIBRE),
        _link("CORE1", "CORE2", km=c1, gbps=CORE_RATE_GBPS, medium=Medium.FIBRE),
        _link("CORE2", "CORE3", km=c2, gbps=CORE_RATE_GBPS, medium=Medium.FIBRE),
        _link("CORE3", "OLT", km=c3, gbps=PON_RATE_GBPS, medium=Medium.FIBRE),
        _link("OLT", splitter_id, gbps=PON_RATE_GBPS, medium=Medium.FIBRE),
        _link(splitter_id, "ONU", gbps=PON_RATE_GBPS, medium=Medium.FIBRE),
        _link("ONU", "B3G", gbps=RACK_RATE_GBPS, medium=Medium.FIBRE),
    ]
    extra = Topology.from_parts([camera, *core, *pon], [])
    return merge(cell_a, cell_b, extra, links=links, mode=mode)


def build_reference_testbed(
    *,
    mode: InterconnectMode | str = InterconnectMode.TDM,
    spans_km: Sequence[float] = REFERENCE_SPANS_KM,
    seed: int = DEFAULT_SEED,
    calibrate: bool = True,
    targets=None,
) -> ScenarioConfig:
    """Two processing cells joined by a three-node core chain and a PON segment.

    End-to-end path (A1S2 to B3S3) routes through A1G, CORE1..3, OLT,
    ONU and B3G: eight traceroute hops including the destination. With
    ``calibrate`` the routing nodes' processing delays are solved so that
    each hop adds the target RTT increment.
    """
    mode = InterconnectMode(mode)
    topo = _raw_reference(mode, spans_km)
    if calibrate:
        from ..probes import CalibrationTargets, calibrate_processing_delays

        delays = calibrate_processing_delays(topo, targets or CalibrationTargets())
        topo = topo.replace_delays(delays)
    return ScenarioConfig(topo, seed, ProbeConfig(), DEFAULT_JITTER)


def build_prior_testbed(
    *, mode: InterconnectMode | str = InterconnectMode.TDM, seed: int = DEFAULT_SEED
) -> ScenarioConfig:
    """Reference testbed with the core chain removed.

    Cell A's uplink gateway connects straight to the OLT over a feeder
    identical to the last core span, and every remaining node keeps its
    calibrated reference delay, so only the missing core hops differ.
    """
    ref = build_reference_testbed(mode=mode, seed=seed).topology
    core_ids = {n.id for n in ref.of_kind(NodeKind.CORE_NODE)}
    nodes = [n for n in ref.nodes.values() if n.id not in core_ids]
    links = [lk for lk in ref.links.values() if lk.a not in core_ids and lk.b not in core_ids]
    feeder = ref.link_between("CORE3", "OLT")
    links.append(_link("A1G", "OLT", km=feeder.length_km, gbps=feeder.rate_gbps, medium=feeder.medium))
    topo = Topology.from_parts(nodes, links, ref.interconnect_mode)
    return ScenarioConfig(topo, seed, ProbeConfig(), DEFAULT_JITTER)


def default_endpoints(t: Topology) -> tuple[str, str]:
    """First host of the first cell and last host of the last cell.

    Falls back to gateways when a cell has no plain servers.
    """
    cells = t.cells()
    if not cells:
        raise InvalidArgument("topology has no cells")

    def servers_of(cell: str) -> list[str]:
        hosts = [n.id for n in t.of_kind(NodeKind.SERVER) if n.cell_id == cell]
        return hosts or [n.id for n in t.of_kind(NodeKind.GATEWAY_SERVER) if n.cell_id == cell]

    with_servers = [c for c in cells if servers_of(c)]
    if not with_servers:
        raise InvalidArgument("topology has no servers")
    return servers_of(with_servers[0])[0], servers_of(with_servers[-1])[-1]


BUILTINS = {
    "ref8": build_reference_testbed,
    "prior5": build_prior_testbed,
}
