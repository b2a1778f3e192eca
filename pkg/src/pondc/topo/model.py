"""Typed node/link graph and its structural validation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from ..errors import InvalidArgument


class NodeKind(str, Enum):
    SERVER = "Server"
    GATEWAY_SERVER = "GatewayServer"
    RACK_SWITCH = "RackSwitch"
    OPTICAL_BACKPLANE = "OpticalBackplane"
    OLT = "Olt"
    ONU = "Onu"
    COUPLER = "Coupler"
    AWGR = "Awgr"
    CORE_NODE = "CoreNode"
    CAMERA = "Camera"


class Medium(str, Enum):
    COPPER = "Copper"
    FIBRE = "Fibre"


class InterconnectMode(str, Enum):
    TDM = "Tdm"
    AWGR = "Awgr"


# Layer-2 / passive elements: they add delay but never touch the TTL and
# never show up as a traceroute hop.
TRANSPARENT_KINDS = frozenset(
    {NodeKind.RACK_SWITCH, NodeKind.OPTICAL_BACKPLANE, NodeKind.COUPLER, NodeKind.AWGR}
)
# End hosts never carry transit traffic.
HOST_KINDS = frozenset({NodeKind.SERVER, NodeKind.CAMERA})
SERVER_KINDS = frozenset({NodeKind.SERVER, NodeKind.GATEWAY_SERVER})
SWITCH_KINDS = frozenset({NodeKind.RACK_SWITCH, NodeKind.OPTICAL_BACKPLANE})

_NEEDS_RACK = frozenset({NodeKind.SERVER, NodeKind.GATEWAY_SERVER, NodeKind.RACK_SWITCH})
_NEEDS_CELL = frozenset({NodeKind.COUPLER, NodeKind.AWGR, NodeKind.OLT})
_WAVELENGTH_KINDS = frozenset({NodeKind.CORE_NODE, NodeKind.AWGR})

DEFAULT_WAVELENGTHS = 80


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    rack_id: str | None = None
    cell_id: str | None = None
    processing_delay_us: float = 0.0
    # C-band channel count; only meaningful for CoreNode and Awgr.
    wavelengths: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.wavelengths is None and self.kind in _WAVELENGTH_KINDS:
            object.__setattr__(self, "wavelengths", DEFAULT_WAVELENGTHS)

    @property
    def is_transparent(self) -> bool:
        return self.kind in TRANSPARENT_KINDS

    @property
    def is_host(self) -> bool:
        return self.kind in HOST_KINDS

    @property
    def can_transit(self) -> bool:
        return self.kind not in HOST_KINDS

    def with_delay(self, processing_delay_us: float) -> Node:
        return Node(
            self.id, self.kind, self.rack_id, self.cell_id, processing_delay_us, self.wavelengths
        )


@dataclass(frozen=True)
class Link:
    id: str
    a: str
    b: str
    length_km: float = 0.0
    rate_gbps: float = 10.0
    medium: Medium = Medium.COPPER

    def __post_init__(self) -> None:
        object.__setattr__(self, "medium", Medium(self.medium))

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def other(self, node_id: str) -> str:
        if node_id == self.a:
            return self.b
        if node_id == self.b:
            return self.a
        raise InvalidArgument(f"node {node_id!r} is not an endpoint of link {self.id!r}")


@dataclass(frozen=True)
class Topology:
    """Immutable node/link graph.

    ``adjacency`` is derived from ``links`` and excluded from equality.
    Construction never fails on structural problems; use
    :func:`validate_topology` to list them.
    """

    nodes: Mapping[str, Node]
    links: Mapping[str, Link]
    interconnect_mode: InterconnectMode = InterconnectMode.TDM
    adjacency: Mapping[str, frozenset[str]] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "links", dict(self.links))
        object.__setattr__(self, "interconnect_mode", InterconnectMode(self.interconnect_mode))
        adj: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        for link in self.links.values():
            adj.setdefault(link.a, set()).add(link.id)
            adj.setdefault(link.b, set()).add(link.id)
        object.__setattr__(self, "adjacency", {k: frozenset(v) for k, v in adj.items()})

    @classmethod
    def from_parts(
        cls,
        nodes: Iterable[Node],
        links: Iterable[Link],
        interconnect_mode: InterconnectMode = InterconnectMode.TDM,
    ) -> Topology:
        node_map: dict[str, Node] = {}
        for n in nodes:
            if n.id in node_map:
                raise InvalidArgument(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        link_map: dict[str, Link] = {}
        for link in links:
            if link.id in link_map:
                raise InvalidArgument(f"duplicate link id {link.id!r}")
            link_map[link.id] = link
        return cls(node_map, link_map, InterconnectMode(interconnect_mode))

    def neighbours(self, node_id: str) -> list[tuple[str, str]]:
        """(neighbour id, link id) pairs sorted by neighbour then link id."""
        out = [(self.links[lid].other(node_id), lid) for lid in self.adjacency.get(node_id, ())]
        return sorted(out)

    def link_between(self, a: str, b: str) -> Link:
        candidates = sorted(
            lid for lid in self.adjacency.get(a, ()) if self.links[lid].other(a) == b
        )
        if not candidates:
            raise InvalidArgument(f"no link between {a!r} and {b!r}")
        return self.links[candidates[0]]

    def racks(self) -> list[str]:
        return sorted({n.rack_id for n in self.nodes.values() if n.rack_id is not None})

    def rack_members(self, rack_id: str) -> list[Node]:
        return [self.nodes[k] for k in sorted(self.nodes) if self.nodes[k].rack_id == rack_id]

    def gateways(self, rack_id: str) -> list[Node]:
        return [n for n in self.rack_members(rack_id) if n.kind is NodeKind.GATEWAY_SERVER]

    def cells(self) -> list[str]:
        return sorted({n.cell_id for n in self.nodes.values() if n.cell_id is not None})

    def of_kind(self, *kinds: NodeKind) -> list[Node]:
        return [self.nodes[k] for k in sorted(self.nodes) if self.nodes[k].kind in kinds]

    def replace_delays(self, delays: Mapping[str, float]) -> Topology:
        nodes = {
            nid: (n.with_delay(delays[nid]) if nid in delays else n)
            for nid, n in self.nodes.items()
        }
        return Topology(nodes, self.links, self.interconnect_mode)


def merge(*fragments: Topology, links: Iterable[Link] = (), mode=InterconnectMode.TDM) -> Topology:
    """Union of topology fragments plus extra connecting links."""
    nodes: list[Node] = []
    all_links: list[Link] = []
    for frag in fragments:
        nodes.extend(frag.nodes.values())
        all_links.extend(frag.links.values())
    all_links.extend(links)
    return Topology.from_parts(nodes, all_links, mode)


@dataclass(frozen=True)
class Violation:
    code: str
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.entity}: {self.message}"


def validate_topology(t: Topology) -> list[Violation]:
    """Return every violated structural invariant; empty means valid."""
    out: list[Violation] = []

    for nid in sorted(t.nodes):
        node = t.nodes[nid]
        if node.id != nid:
            out.append(Violation("IdMismatch", nid, f"node stored under {nid!r} has id {node.id!r}"))
        if node.processing_delay_us < 0:
            out.append(Violation("NegativeDelay", nid, "processing_delay_us < 0"))
        if node.kind in _NEEDS_RACK and node.rack_id is None:
            out.append(Violation("MissingRack", nid, f"{node.kind.value} requires a rack"))
        if node.kind in _NEEDS_CELL and node.cell_id is None:
            out.append(Violation("MissingCell", nid, f"{node.kind.value} requires a cell"))
        if node.kind is NodeKind.CORE_NODE and (node.rack_id or node.cell_id):
            out.append(Violation("UnexpectedPlacement", nid, "CoreNode has no rack or cell"))
        if node.wavelengths is not None and node.wavelengths <= 0:
            out.append(Violation("BadWavelengths", nid, "wavelength count must be positive"))

    for lid in sorted(t.links):
        link = t.links[lid]
        for end in link.endpoints:
            if end not in t.nodes:
                out.append(Violation("UnknownNode", lid, f"link endpoint {end!r} does not exist"))
        if link.a == link.b:
            out.append(Violation("SelfLoop", lid, "link endpoints must differ"))
        if link.length_km < 0:
            out.append(Violation("NegativeLength", lid, "length_km < 0"))
        if link.rate_gbps <= 0:
            out.append(Violation("NonPositiveRate", lid, "rate_gbps must be > 0"))

    for nid in sorted(t.adjacency):
        for lid in t.adjacency[nid]:
            link = t.links.get(lid)
            if link is None or nid not in link.endpoints:
                out.append(Violation("AdjacencyMismatch", nid, f"stale link {lid!r}"))
                continue
            other = link.other(nid)
            if lid not in t.adjacency.get(other, ()):
                out.append(Violation("AdjacencyMismatch", nid, f"{lid!r} missing at {other!r}"))

    for rack in t.racks():
        members = t.rack_members(rack)
        switches = [n for n in members if n.kind in SWITCH_KINDS]
        if len(switches) != 1:
            out.append(
                Violation("SwitchCount", rack, f"rack has {len(switches)} switches, expected 1")
            )
        if not any(n.kind is NodeKind.GATEWAY_SERVER for n in members):
            out.append(Violation("MissingGateway", rack, "rack has no GatewayServer"))

    if t.nodes and not _connected(t):
        unreached = sorted(set(t.nodes) - _reachable(t, min(t.nodes)))
        out.append(
            Violation("Connectivity", unreached[0], f"{len(unreached)} node(s) unreachable")
        )
    return out


def _reachable(t: Topology, start: str) -> set[str]:
    seen = {start}
    todo = deque([start])
    while todo:
        cur = todo.popleft()
        for lid in t.adjacency.get(cur, ()):
            link = t.links.get(lid)
            if link is None:
                continue
            nxt = link.other(cur)
            if nxt in t.nodes and nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def _connected(t: Topology) -> bool:
    return len(_reachable(t, min(t.nodes))) == len(t.nodes)
