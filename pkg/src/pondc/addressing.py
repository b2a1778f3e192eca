"""Per-rack IPv4 plan with dual-homed gateway servers."""

from __future__ import annotations

import csv
import io
from collections import Counter, deque
from dataclasses import dataclass, field
from ipaddress import IPv4Address, IPv4Network
from typing import Mapping

from .errors import CapacityError, ParseError, UnknownAddress
from .topo.model import NodeKind, Topology, Violation

RACK_BASE = "10.0.{k}.0/24"
TRANSIT_SUBNET = IPv4Network("10.0.0.0/24")
CORE_SUBNET = IPv4Network("10.1.0.0/16")
MAX_HOSTS_PER_RACK = 253

_ADDRESSED_IN_RACK = (NodeKind.SERVER, NodeKind.GATEWAY_SERVER, NodeKind.CAMERA)
_CORE_KINDS = (NodeKind.CORE_NODE, NodeKind.OLT, NodeKind.ONU)
_ROUTER_ROLES = frozenset({NodeKind.GATEWAY_SERVER, *_CORE_KINDS})


@dataclass(frozen=True)
class AddressPlan:
    rack_subnets: Mapping[str, IPv4Network]
    interface_addresses: Mapping[tuple[str, IPv4Network], IPv4Address]
    default_gateways: Mapping[str, IPv4Address]
    transit_subnet: IPv4Network | None = None
    _owners: Mapping[IPv4Address, str] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        owners: dict[IPv4Address, str] = {}
        for (nid, _), addr in sorted(self.interface_addresses.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            owners.setdefault(addr, nid)
        object.__setattr__(self, "_owners", owners)

    def owner(self, address: IPv4Address | str) -> str:
        addr = IPv4Address(address)
        try:
            return self._owners[addr]
        except KeyError:
            raise UnknownAddress(f"address {addr} is not assigned") from None

    def addresses_of(self, node_id: str) -> dict[IPv4Network, IPv4Address]:
        return {
            net: addr for (nid, net), addr in self.interface_addresses.items() if nid == node_id
        }

    def address_in(self, node_id: str, subnet: IPv4Network) -> IPv4Address:
        return self.interface_addresses[(node_id, subnet)]

    def primary_address(self, node_id: str) -> IPv4Address:
        """Address in the node's rack subnet, else its lowest address."""
        addrs = self.addresses_of(node_id)
        if not addrs:
            raise UnknownAddress(f"node {node_id!r} has no address")
        for net, addr in addrs.items():
            if net in self.rack_subnets.values():
                return addr
        return min(addrs.values())


def derive_address_plan(t: Topology) -> AddressPlan:
    """Deterministic plan: rack k gets 10.0.k.0/24, gateways share 10.0.0.0/24.

    Hosts are numbered from .1 in ascending node-id order. Core and PON
    routers take consecutive addresses from 10.1.0.0/16.
    """
    racks = t.racks()
    if len(racks) > 255:
        raise CapacityError("more than 255 racks cannot be numbered 10.0.k.0/24")
    rack_subnets: dict[str, IPv4Network] = {}
    iface: dict[tuple[str, IPv4Network], IPv4Address] = {}
    gateways: dict[str, IPv4Address] = {}

    transit_members: list[str] = []
    for k, rack in enumerate(racks, start=1):
        net = IPv4Network(RACK_BASE.format(k=k))
        rack_subnets[rack] = net
        members = [n for n in t.rack_members(rack) if n.kind in _ADDRESSED_IN_RACK]
        if len(members) > MAX_HOSTS_PER_RACK:
            raise CapacityError(f"rack {rack!r} has {len(members)} hosts (max {MAX_HOSTS_PER_RACK})")
        for i, node in enumerate(members, start=1):
            iface[(node.id, net)] = net.network_address + i
        rack_gws = [n.id for n in members if n.kind is NodeKind.GATEWAY_SERVER]
        if rack_gws:
            gw_addr = iface[(rack_gws[0], net)]
            for node in members:
                if node.kind is NodeKind.GATEWAY_SERVER:
                    gateways[node.id] = iface[(node.id, net)]
                else:
                    gateways[node.id] = gw_addr
        transit_members.extend(rack_gws)

    transit = None
    if len(racks) > 1 and transit_members:
        transit = TRANSIT_SUBNET
        if len(transit_members) > MAX_HOSTS_PER_RACK:
            raise CapacityError("too many gateways for the transit subnet")
        for i, gid in enumerate(transit_members, start=1):
            iface[(gid, transit)] = transit.network_address + i

    for i, node in enumerate(t.of_kind(*_CORE_KINDS), start=1):
        iface[(node.id, CORE_SUBNET)] = CORE_SUBNET.network_address + i

    return AddressPlan(rack_subnets, iface, gateways, transit)


def validate_plan(p: AddressPlan, t: Topology) -> list[Violation]:
    out: list[Violation] = []

    holders: dict[IPv4Address, list[str]] = {}
    for (nid, net), addr in sorted(p.interface_addresses.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        holders.setdefault(addr, []).append(nid)
        if addr not in net:
            out.append(Violation("OutsideSubnet", nid, f"{addr} is not inside {net}"))
        elif addr in (net.network_address, net.broadcast_address) and net.prefixlen < 31:
            out.append(Violation("ReservedAddress", nid, f"{addr} is reserved in {net}"))
    for addr in sorted(holders):
        if len(holders[addr]) > 1:
            out.append(Violation("Duplicate", str(addr), f"assigned to {', '.join(holders[addr])}"))

    racks = sorted(p.rack_subnets)
    for i, ra in enumerate(racks):
        for rb in racks[i + 1:]:
            if p.rack_subnets[ra].overlaps(p.rack_subnets[rb]):
                out.append(
                    Violation("Overlap", f"{ra}/{rb}", f"{p.rack_subnets[ra]} overlaps {p.rack_subnets[rb]}")
                )

    multi_rack = len(t.racks()) > 1
    for node in t.of_kind(*_ADDRESSED_IN_RACK):
        net = p.rack_subnets.get(node.rack_id) if node.rack_id else None
        addrs = p.addresses_of(node.id)
        if net is None or net not in addrs:
            out.append(Violation("MissingAddress", node.id, "no address in its rack subnet"))
            continue
        if node.kind is NodeKind.GATEWAY_SERVER:
            if multi_rack and len(addrs) != 2:
                out.append(
                    Violation("GatewayAddressCount", node.id, f"holds {len(addrs)} addresses, expected 2")
                )
            continue
        if len(addrs) != 1:
            out.append(Violation("HostAddressCount", node.id, f"holds {len(addrs)} addresses, expected 1"))
        gw = p.default_gateways.get(node.id)
        rack_gw_addrs = {
            p.interface_addresses.get((g.id, net)) for g in t.gateways(node.rack_id)
        }
        if gw is None or gw not in net or gw not in rack_gw_addrs:
            out.append(
                Violation("UnreachableGateway", node.id, f"default gateway {gw} not a gateway in {net}")
            )
    return out


def resolve_next_hop(p: AddressPlan, t: Topology, src: str, dst_addr: IPv4Address | str) -> str:
    """IP-layer next hop from ``src`` toward ``dst_addr`` (rack switches are implicit)."""
    dst_addr = IPv4Address(dst_addr)
    dst = p.owner(dst_addr)
    if dst == src:
        return src
    src_node = t.nodes[src]
    dst_node = t.nodes[dst]
    # The core range is routed, and the transit subnet only spans one cell.
    for net in p.addresses_of(src):
        if dst_addr not in net or net == CORE_SUBNET:
            continue
        if net == p.transit_subnet and dst_node.cell_id != src_node.cell_id:
            continue
        return dst
    if src_node.kind is not NodeKind.GATEWAY_SERVER and src_node.kind not in _CORE_KINDS:
        gw = p.default_gateways.get(src)
        if gw is None:
            raise UnknownAddress(f"{src!r} has no default gateway")
        return p.owner(gw)
    if (
        src_node.kind is NodeKind.GATEWAY_SERVER
        and dst_node.rack_id is not None
        and dst_node.cell_id == src_node.cell_id
    ):
        rack_gws = t.gateways(dst_node.rack_id)
        if rack_gws:
            return rack_gws[0].id
    return _first_router_towards(t, src, dst)


def _first_router_towards(t: Topology, src: str, dst: str) -> str:
    """First non-transparent node on the hop-count shortest path (ties: smallest id)."""
    prev: dict[str, str | None] = {src: None}
    todo = deque([src])
    while todo:
        cur = todo.popleft()
        if cur == dst:
            break
        if cur != src and not t.nodes[cur].can_transit:
            continue
        for nxt, _ in t.neighbours(cur):
            if nxt not in prev:
                prev[nxt] = cur
                todo.append(nxt)
    if dst not in prev:
        raise UnknownAddress(f"{dst!r} is not reachable from {src!r}")
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    path.reverse()
    for nid in path[1:]:
        if not t.nodes[nid].is_transparent:
            return nid
    return dst


PLAN_COLUMNS = ("node_id", "subnet", "address", "role", "default_gateway")


def plan_rows(p: AddressPlan, t: Topology) -> list[tuple[str, str, str, str, str]]:
    rows = []
    for (nid, net), addr in p.interface_addresses.items():
        role = "gateway" if t.nodes[nid].kind in _ROUTER_ROLES else "host"
        gw = p.default_gateways.get(nid)
        rows.append((nid, str(net), str(addr), role, "" if gw is None else str(gw)))
    rows.sort(key=lambda r: (r[0], IPv4Network(r[1])))
    return rows


def plan_to_csv(p: AddressPlan, t: Topology) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAN_COLUMNS)
    w.writerows(plan_rows(p, t))
    return buf.getvalue()


def plan_from_csv(text: str, t: Topology) -> AddressPlan:
    """Rebuild a plan from its CSV export.

    Each rack's subnet is the one most of its members hold an address in.
    """
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != PLAN_COLUMNS:
        raise ParseError(f"plan CSV header must be {','.join(PLAN_COLUMNS)}")
    iface: dict[tuple[str, IPv4Network], IPv4Address] = {}
    gateways: dict[str, IPv4Address] = {}
    for row in reader:
        net = IPv4Network(row["subnet"], strict=False)
        iface[(row["node_id"], net)] = IPv4Address(row["address"])
        if row["default_gateway"]:
            gateways[row["node_id"]] = IPv4Address(row["default_gateway"])

    rack_subnets: dict[str, IPv4Network] = {}
    transit_votes: Counter[IPv4Network] = Counter()
    for rack in t.racks():
        member_ids = {n.id for n in t.rack_members(rack)}
        votes: Counter[IPv4Network] = Counter()
        for (nid, net) in iface:
            if nid in member_ids:
                votes[net] += 1
        if not votes:
            continue
        own_gw = {gateways.get(nid) for nid in member_ids}
        best = max(votes, key=lambda n: (votes[n], any(a in n for a in own_gw if a), -int(n.network_address)))
        rack_subnets[rack] = best
        for net in votes:
            if net != best:
                transit_votes[net] += 1
    transit = transit_votes.most_common(1)[0][0] if transit_votes else None
    return AddressPlan(rack_subnets, iface, gateways, transit)
