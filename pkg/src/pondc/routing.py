"""Forwarding tables, routes, AWGR wavelength routing and the TDM grant schedule."""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .addressing import AddressPlan
from .errors import Exhausted, InvalidArgument, Unreachable
from .topo.model import (
    SERVER_KINDS,
    SWITCH_KINDS,
    InterconnectMode,
    NodeKind,
    Topology,
)

DEFAULT_FRAME_US = 125.0


@dataclass(frozen=True)
class Route:
    nodes: tuple[str, ...]
    links: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.links) != max(len(self.nodes) - 1, 0):
            raise InvalidArgument("a route needs exactly one link between consecutive nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise InvalidArgument("route revisits a node")

    @property
    def src(self) -> str:
        return self.nodes[0]

    @property
    def dst(self) -> str:
        return self.nodes[-1]

    def hops(self, t: Topology) -> list[str]:
        """Traceroute-visible hops: every non-transparent node after the source."""
        return [n for n in self.nodes[1:] if not t.nodes[n].is_transparent]


class ForwardingTables:
    """Per-node destination -> (next hop, link) maps."""

    def __init__(self, entries: Mapping[str, Mapping[str, tuple[str, str]]]):
        self._entries = {k: dict(v) for k, v in entries.items()}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ForwardingTables) and self._entries == other._entries

    def next_hop(self, node: str, dst: str) -> tuple[str, str] | None:
        return self._entries.get(node, {}).get(dst)

    def table(self, node: str) -> dict[str, tuple[str, str]]:
        return dict(self._entries.get(node, {}))

    def without(self, node: str, dst: str) -> ForwardingTables:
        """Copy with one entry removed (used to exercise black-holing)."""
        entries = {k: dict(v) for k, v in self._entries.items()}
        entries.get(node, {}).pop(dst, None)
        return ForwardingTables(entries)

    @property
    def raw(self) -> dict[str, dict[str, tuple[str, str]]]:
        return self._entries


def _distances_to(t: Topology, dst: str) -> dict[str, int]:
    # Reverse BFS; hosts get a distance but never relay for others.
    dist = {dst: 0}
    todo = deque([dst])
    while todo:
        cur = todo.popleft()
        if cur != dst and not t.nodes[cur].can_transit:
            continue
        for nxt, _ in t.neighbours(cur):
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                todo.append(nxt)
    return dist


def _designated_gateways(t: Topology, p: AddressPlan) -> dict[str, str]:
    """rack id -> node id of the gateway its hosts use."""
    out: dict[str, str] = {}
    for rack in t.racks():
        hosts = [n for n in t.rack_members(rack) if n.is_host and n.id in p.default_gateways]
        if hosts:
            out[rack] = p.owner(p.default_gateways[hosts[0].id])
        elif t.gateways(rack):
            out[rack] = t.gateways(rack)[0].id
    return out


def compute_forwarding_tables(t: Topology, p: AddressPlan) -> ForwardingTables:
    """Hop-count shortest paths with the gateway-relay policy layered on top.

    Hosts never relay. Traffic leaving a rack is handed to the rack's
    designated gateway (its hosts' default gateway). Ties go to the
    smallest next-hop id.
    """
    entries: dict[str, dict[str, tuple[str, str]]] = {nid: {} for nid in t.nodes}
    for dst in sorted(t.nodes):
        dist = _distances_to(t, dst)
        for node in sorted(dist):
            if node == dst:
                continue
            best = None
            for nxt, lid in t.neighbours(node):
                if dist.get(nxt) == dist[node] - 1 and (nxt == dst or t.nodes[nxt].can_transit):
                    best = (nxt, lid)
                    break
            if best is not None:
                entries[node][dst] = best

    designated = _designated_gateways(t, p)
    for rack, gw in designated.items():
        members = t.rack_members(rack)
        member_ids = {n.id for n in members}
        switches = [n.id for n in members if n.kind in SWITCH_KINDS]
        for dst in sorted(t.nodes):
            if dst in member_ids or dst not in entries[gw]:
                continue
            for sw in switches:
                # Keep BFS choice if the gateway itself leaves through the switch.
                if entries[gw][dst][0] != sw and gw in entries[sw]:
                    entries[sw][dst] = entries[sw][gw]
            for host in members:
                if host.is_host and gw in entries[host.id]:
                    entries[host.id][dst] = entries[host.id][gw]

    tables = ForwardingTables(entries)
    servers = [n.id for n in t.of_kind(*SERVER_KINDS)]
    for s in servers:
        for d in servers:
            if s != d:
                route(tables, s, d)
    return tables


def route(tables: ForwardingTables, src: str, dst: str) -> Route:
    nodes = [src]
    links: list[str] = []
    seen = {src}
    cur = src
    while cur != dst:
        entry = tables.next_hop(cur, dst)
        if entry is None:
            raise Unreachable(f"no route from {src!r} to {dst!r} (stuck at {cur!r})")
        cur, lid = entry
        if cur in seen:
            raise Unreachable(f"forwarding loop from {src!r} to {dst!r} at {cur!r}")
        seen.add(cur)
        nodes.append(cur)
        links.append(lid)
    return Route(tuple(nodes), tuple(links))


ROUTE_COLUMNS = ("src", "dst", "hop_index", "node_id", "link_id")


def routes_to_csv(routes: Iterable[Route]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUTE_COLUMNS)
    for r in routes:
        for i, nid in enumerate(r.nodes):
            w.writerow((r.src, r.dst, i, nid, r.links[i - 1] if i else ""))
    return buf.getvalue()


# --- AWGR -----------------------------------------------------------------


def awgr_output_port(input_port: int, wavelength: int, n_ports: int) -> int:
    """Cyclic AWGR routing: (input + wavelength) mod N."""
    if n_ports <= 0:
        raise InvalidArgument("n_ports must be positive")
    if not 0 <= input_port < n_ports:
        raise InvalidArgument(f"input port {input_port} outside [0, {n_ports})")
    if wavelength < 0:
        raise InvalidArgument("wavelength must be >= 0")
    return (input_port + wavelength) % n_ports


def first_fit_wavelengths(
    requests: Sequence[tuple[int, int]], n_ports: int, n_wavelengths: int
) -> list[int]:
    """Lowest free wavelength per (input, output) request, in request order."""
    used: dict[int, set[int]] = {}
    out = []
    for inp, outp in requests:
        if not 0 <= outp < n_ports:
            raise InvalidArgument(f"output port {outp} outside [0, {n_ports})")
        taken = used.setdefault(inp, set())
        w = (outp - inp) % n_ports
        awgr_output_port(inp, w, n_ports)
        while w < n_wavelengths and w in taken:
            w += n_ports
        if w >= n_wavelengths:
            raise Exhausted(
                f"no free wavelength on input port {inp} toward output {outp} "
                f"({len(taken)} of {n_wavelengths} in use)"
            )
        taken.add(w)
        out.append(w)
    return out


def awgr_ports(t: Topology, awgr_id: str) -> tuple[list[str], list[str]]:
    """(OLT-side ports, rack/ONU-side ports), each ordered by neighbour id."""
    neighbours = sorted({n for n, _ in t.neighbours(awgr_id)})
    head = [n for n in neighbours if t.nodes[n].kind is NodeKind.OLT]
    tail = [n for n in neighbours if t.nodes[n].kind is not NodeKind.OLT]
    return head, tail


@dataclass(frozen=True)
class WavelengthAssignment:
    wavelengths: Mapping[int, int]
    flows: tuple[tuple[str, str], ...]
    ports: Mapping[int, tuple[str, int, int]]


def assign_wavelengths(
    t: Topology,
    flows: Sequence[tuple[str, str]],
    tables: ForwardingTables | None = None,
) -> WavelengthAssignment:
    """First-fit wavelengths for flows crossing an AWGR.

    Flows that never cross an AWGR get no entry. A flow entering from the
    rack side uses that side's port as its input (the device is reciprocal).
    """
    if t.interconnect_mode is not InterconnectMode.AWGR:
        raise InvalidArgument("wavelength assignment needs interconnect_mode Awgr")
    if tables is None:
        from .addressing import derive_address_plan

        tables = compute_forwarding_tables(t, derive_address_plan(t))

    used: dict[tuple[str, str, int], set[int]] = {}
    result: dict[int, int] = {}
    ports: dict[int, tuple[str, int, int]] = {}
    for idx, (src, dst) in enumerate(flows):
        r = route(tables, src, dst)
        for i, nid in enumerate(r.nodes[1:-1], start=1):
            if t.nodes[nid].kind is not NodeKind.AWGR:
                continue
            head, tail = awgr_ports(t, nid)
            n_ports = max(len(head), len(tail), 1)
            prev, nxt = r.nodes[i - 1], r.nodes[i + 1]
            if prev in head:
                side, inp, outp = "head", head.index(prev), tail.index(nxt)
            else:
                side, inp, outp = "tail", tail.index(prev), head.index(nxt) if nxt in head else tail.index(nxt)
            taken = used.setdefault((nid, side, inp), set())
            w_count = t.nodes[nid].wavelengths
            w = (outp - inp) % n_ports
            while w < w_count and w in taken:
                w += n_ports
            if w >= w_count:
                raise Exhausted(f"flow {idx} ({src}->{dst}): {nid} input {side}:{inp} has no free wavelength")
            taken.add(w)
            result[idx] = w
            ports[idx] = (nid, inp, outp)
            break
    return WavelengthAssignment(result, tuple(flows), ports)


def wavelengths_to_csv(a: WavelengthAssignment) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("flow_id", "src", "dst", "wavelength"))
    for idx in sorted(a.wavelengths):
        src, dst = a.flows[idx]
        w.writerow((idx, src, dst, a.wavelengths[idx]))
    return buf.getvalue()


# --- TDM ------------------------------------------------------------------


@dataclass(frozen=True)
class Grant:
    sender: str
    start_us: float
    length_us: float


@dataclass(frozen=True)
class TdmSchedule:
    frame_us: float
    grants: tuple[Grant, ...]

    def __post_init__(self) -> None:
        if self.frame_us <= 0:
            raise InvalidArgument("frame_us must be positive")
        end = 0.0
        for g in sorted(self.grants, key=lambda g: g.start_us):
            if g.start_us < end - 1e-9 or g.start_us + g.length_us > self.frame_us + 1e-9:
                raise InvalidArgument("TDM grants overlap or leave the frame")
            end = g.start_us + g.length_us

    @property
    def senders(self) -> list[str]:
        return [g.sender for g in self.grants]

    def grant(self, sender: str) -> Grant:
        for g in self.grants:
            if g.sender == sender:
                return g
        raise InvalidArgument(f"{sender!r} holds no TDM grant")

    def departure(self, sender: str, t_us: float) -> float:
        """Earliest time >= t_us inside the sender's slot."""
        g = self.grant(sender)
        frame_start = math.floor(t_us / self.frame_us) * self.frame_us
        offset = t_us - frame_start
        if g.start_us <= offset < g.start_us + g.length_us:
            return t_us
        if offset < g.start_us:
            return frame_start + g.start_us
        return frame_start + self.frame_us + g.start_us

    def wait(self, sender: str, t_us: float) -> float:
        return self.departure(sender, t_us) - t_us

    def mean_wait(self, sender: str) -> float:
        """Expected wait for an arrival at a uniformly random frame phase."""
        g = self.grant(sender)
        idle = self.frame_us - g.length_us
        return idle * idle / (2.0 * self.frame_us)


def build_tdm_schedule(
    senders: Sequence[str], frame_us: float = DEFAULT_FRAME_US, slot_us: float | None = None
) -> TdmSchedule:
    """Round-robin grants: sender i owns [i*slot, (i+1)*slot) of every frame."""
    if not senders:
        raise InvalidArgument("a TDM schedule needs at least one sender")
    if frame_us <= 0:
        raise InvalidArgument("frame_us must be positive")
    if slot_us is None:
        slot_us = frame_us / len(senders)
    if slot_us <= 0 or len(senders) * slot_us > frame_us + 1e-9:
        raise InvalidArgument(
            f"{len(senders)} slots of {slot_us} us do not fit in a {frame_us} us frame"
        )
    grants = tuple(Grant(s, i * slot_us, slot_us) for i, s in enumerate(senders))
    return TdmSchedule(frame_us, grants)


def coupler_schedules(t: Topology, frame_us: float = DEFAULT_FRAME_US) -> dict[str, TdmSchedule]:
    """One upstream schedule per coupler; every non-OLT neighbour is a sender."""
    if t.interconnect_mode is not InterconnectMode.TDM:
        return {}
    out = {}
    for c in t.of_kind(NodeKind.COUPLER):
        senders = sorted({n for n, _ in t.neighbours(c.id) if t.nodes[n].kind is not NodeKind.OLT})
        if senders:
            out[c.id] = build_tdm_schedule(senders, frame_us)
    return out
