"""Deterministic discrete-event engine with per-link FIFO queues and TTL forwarding.

Delay model, per forwarding decision at node ``n`` and link ``l``::

    processing(n) [+ jitter, routing nodes only] + TDM wait (upstream at a
    coupler) + queueing + transmission(l) + propagation(l)

A responder (echo target, or a router whose TTL check expires) makes two
decisions: one to inspect the request and one to route the reply. The
originating host charges nothing for sending or receiving.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .config import DelayConstants, JitterKind, JitterModel
from .errors import InvalidArgument
from .routing import DEFAULT_FRAME_US, ForwardingTables, coupler_schedules
from .topo.model import Link, Medium, NodeKind, Topology

DEFAULT_TTL = 64


def propagation_delay(link: Link, c: DelayConstants = DelayConstants()) -> float:
    per_km = c.fibre_us_per_km if link.medium is Medium.FIBRE else c.copper_us_per_km
    return round(link.length_km * per_km, 9)


def transmission_delay(size_bytes: int, rate_gbps: float) -> float:
    if rate_gbps <= 0:
        raise InvalidArgument("rate_gbps must be positive")
    return size_bytes * 8 / (rate_gbps * 1e3)


class PacketKind(str, Enum):
    ECHO_REQUEST = "EchoRequest"
    ECHO_REPLY = "EchoReply"
    TIME_EXCEEDED = "TimeExceeded"
    DATA = "Data"


_REPLY_KINDS = (PacketKind.ECHO_REPLY, PacketKind.TIME_EXCEEDED)


@dataclass(slots=True)
class Packet:
    id: int
    kind: PacketKind
    size_bytes: int
    ttl: int
    src: str
    dst: str
    sent_at_us: float = 0.0
    received_at_us: float | None = None
    hop_trace: list[tuple[str, float]] = field(default_factory=list)
    echo_of: int | None = None
    reporter: str | None = None
    last_hop: str | None = None


Listener = Callable[[Packet, float], None]


class Engine:
    """Single-threaded event loop over one topology.

    ``inject`` places packets; ``run`` drains the queue. Events are popped
    in (time, sequence) order, so equal seeds give identical traces.
    """

    def __init__(
        self,
        topology: Topology,
        tables: ForwardingTables,
        *,
        seed: int = 0,
        jitter: JitterModel = JitterModel.none(),
        constants: DelayConstants = DelayConstants(),
        tdm_frame_us: float = DEFAULT_FRAME_US,
        queue_capacity: int | None = None,
        record_trace: bool = False,
    ):
        self.topology = topology
        self.tables = tables
        self.jitter = jitter
        self.constants = constants
        self.queue_capacity = queue_capacity
        self.record_trace = record_trace
        self.now = 0.0
        self.rng = random.Random(seed)
        self.schedules = coupler_schedules(topology, tdm_frame_us)

        self._queue: list = []
        self._seq = itertools.count()
        self._ids = itertools.count(1)
        self._listeners: dict[int, Listener] = {}
        self._busy: dict[tuple[str, str], float] = {}
        self._backlog: dict[tuple[str, str], deque] = {}
        self._live: set[int] = set()

        self._delay = {nid: n.processing_delay_us for nid, n in topology.nodes.items()}
        self._transparent = {nid: n.is_transparent for nid, n in topology.nodes.items()}
        self._olt = {nid for nid, n in topology.nodes.items() if n.kind is NodeKind.OLT}
        self._prop = {lid: propagation_delay(lk, constants) for lid, lk in topology.links.items()}
        self._rate = {lid: lk.rate_gbps for lid, lk in topology.links.items()}
        self._half = jitter.half_width_us if jitter.kind is JitterKind.UNIFORM else 0.0

        self.injected = 0
        self.delivered = 0
        self.expired = 0
        self.dropped = 0
        self.dropped_ids: set[int] = set()
        self.max_queue_depth = 0
        self.queue_depth: dict[tuple[str, str], int] = {}
        self.trace: list[tuple[float, str, str, int]] = []

    # -- bookkeeping -------------------------------------------------------

    @property
    def in_flight(self) -> int:
        return len(self._live)

    def conservation_holds(self) -> bool:
        return self.injected == self.delivered + self.expired + self.dropped + self.in_flight

    def new_packet(
        self,
        kind: PacketKind,
        src: str,
        dst: str,
        size_bytes: int,
        ttl: int = DEFAULT_TTL,
    ) -> Packet:
        if size_bytes <= 0:
            raise InvalidArgument("packet size must be positive")
        return Packet(next(self._ids), PacketKind(kind), size_bytes, ttl, src, dst)

    def schedule(self, time_us: float, handler: Callable, arg) -> None:
        heapq.heappush(self._queue, (time_us, next(self._seq), handler, arg))

    def inject(self, packet: Packet, at_us: float, listener: Listener | None = None) -> None:
        """Originate ``packet`` at its source at ``at_us``.

        ``listener(packet, time)`` fires when the packet (Data) or its reply
        (echo / time-exceeded) reaches its destination.
        """
        if at_us < self.now:
            raise InvalidArgument("cannot inject into the past")
        if listener is not None:
            self._listeners[packet.id] = listener
        self.schedule(at_us, self._originate, packet)

    def _note(self, kind: str, node: str, pid: int) -> None:
        if self.record_trace:
            self.trace.append((self.now, kind, node, pid))

    # -- event handlers ----------------------------------------------------

    def _originate(self, p: Packet) -> None:
        self.injected += 1
        self._live.add(p.id)
        p.sent_at_us = self.now
        p.hop_trace.append((p.src, self.now))
        self._note("send", p.src, p.id)
        self._transmit(p, p.src)

    def _spawn(self, kind: PacketKind, at: str, original: Packet) -> Packet:
        reply = self.new_packet(kind, at, original.src, original.size_bytes)
        reply.echo_of = original.id
        reply.reporter = at
        self.injected += 1
        self._live.add(reply.id)
        return reply

    def _processing(self, node: str) -> float:
        base = self._delay[node]
        if self._half and not self._transparent[node]:
            base += self.rng.uniform(-self._half, self._half)
            if base < 0.0:
                base = 0.0
        return base

    def _finish(self, p: Packet, node: str, expired: bool = False) -> None:
        self._live.discard(p.id)
        if expired:
            self.expired += 1
            self._note("expire", node, p.id)
        else:
            self.delivered += 1
            self._note("deliver", node, p.id)

    def _drop(self, p: Packet, node: str) -> None:
        self._live.discard(p.id)
        self.dropped += 1
        self.dropped_ids.add(p.id)
        if p.echo_of is not None:
            self.dropped_ids.add(p.echo_of)
        self._listeners.pop(p.id, None)
        if p.echo_of is not None:
            self._listeners.pop(p.echo_of, None)
        self._note("drop", node, p.id)

    def _arrive(self, p: Packet) -> None:
        node = p.hop_trace[-1][0]
        self._note("arrive", node, p.id)
        if node == p.dst:
            if p.kind is PacketKind.ECHO_REQUEST:
                p.received_at_us = self.now
                self._finish(p, node)
                reply = self._spawn(PacketKind.ECHO_REPLY, node, p)
                ready = self.now + self._processing(node) + self._processing(node)
                reply.sent_at_us = ready
                reply.hop_trace.append((node, self.now))
                self.schedule(ready, self._ready, reply)
                return
            p.received_at_us = self.now
            self._finish(p, node)
            key = p.echo_of if p.kind in _REPLY_KINDS else p.id
            listener = self._listeners.pop(key, None)
            if listener is not None:
                listener(p, self.now)
            return
        if self._transparent[node]:
            self.schedule(self.now + self._delay[node], self._ready, p)
            return
        p.ttl -= 1
        if p.ttl <= 0:
            self._finish(p, node, expired=True)
            te = self._spawn(PacketKind.TIME_EXCEEDED, node, p)
            ready = self.now + self._processing(node) + self._processing(node)
            te.sent_at_us = ready
            te.hop_trace.append((node, self.now))
            self.schedule(ready, self._ready, te)
            return
        self.schedule(self.now + self._processing(node), self._ready, p)

    def _ready(self, p: Packet) -> None:
        self._transmit(p, p.hop_trace[-1][0])

    def _transmit(self, p: Packet, node: str) -> None:
        entry = self.tables.next_hop(node, p.dst)
        if entry is None:
            self._drop(p, node)
            return
        nxt, lid = entry
        now = self.now
        start = now
        sched = self.schedules.get(node)
        if sched is not None and nxt in self._olt and p.last_hop is not None:
            start = sched.departure(p.last_hop, now)
        key = (lid, node)
        backlog = self._backlog.get(key)
        if backlog is None:
            backlog = self._backlog[key] = deque()
        while backlog and backlog[0] <= now:
            backlog.popleft()
        if self.queue_capacity is not None and len(backlog) >= self.queue_capacity:
            self._drop(p, node)
            return
        busy = self._busy.get(key, 0.0)
        if busy > start:
            start = busy
        done = start + p.size_bytes * 8 / (self._rate[lid] * 1e3)
        self._busy[key] = done
        backlog.append(done)
        depth = len(backlog)
        if depth > self.queue_depth.get(key, 0):
            self.queue_depth[key] = depth
            if depth > self.max_queue_depth:
                self.max_queue_depth = depth
        p.last_hop = node
        p.hop_trace.append((nxt, done + self._prop[lid]))
        self._note("depart", node, p.id)
        self.schedule(done + self._prop[lid], self._arrive, p)

    # -- loop ----------------------------------------------------------------

    def run(self, until_us: float | None = None) -> int:
        """Process events in order; stop before any event later than ``until_us``."""
        queue = self._queue
        count = 0
        pop = heapq.heappop
        while queue:
            if until_us is not None and queue[0][0] > until_us:
                break
            time_us, _, handler, arg = pop(queue)
            self.now = time_us
            handler(arg)
            count += 1
        if until_us is not None and self.now < until_us:
            self.now = until_us
        return count

    @property
    def pending(self) -> int:
        return len(self._queue)

    def reset_queue_stats(self) -> None:
        self.max_queue_depth = 0
        self.queue_depth.clear()


def engine_for(
    scenario,
    *,
    seed: int | None = None,
    jitter: JitterModel | None = None,
    **kwargs,
) -> Engine:
    """Engine over a ScenarioConfig with freshly derived plan and tables."""
    from .addressing import derive_address_plan
    from .routing import compute_forwarding_tables

    t = scenario.topology
    tables = compute_forwarding_tables(t, derive_address_plan(t))
    return Engine(
        t,
        tables,
        seed=scenario.seed if seed is None else seed,
        jitter=scenario.jitter_model if jitter is None else jitter,
        **kwargs,
    )


TRACE_COLUMNS = ("time_us", "event_kind", "node_id", "packet_id")


def trace_to_csv(engine: Engine) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for time_us, kind, node, pid in engine.trace:
        w.writerow((f"{time_us:.3f}", kind, node, pid))
    return buf.getvalue()


def hop_trace_rows(packets) -> list[tuple[int, int, str, str]]:
    return [
        (p.id, i, nid, f"{ts:.3f}")
        for p in packets
        for i, (nid, ts) in enumerate(p.hop_trace)
    ]
