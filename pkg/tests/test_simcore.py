from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import path_rtt
from pondc.config import JitterModel
from pondc.errors import InvalidArgument
from pondc.simcore import (
    Engine,
    PacketKind,
    engine_for,
    hop_trace_rows,
    propagation_delay,
    trace_to_csv,
    transmission_delay,
)
from pondc.topo import Link, Medium


class TestDelays:
    @pytest.mark.parametrize("km,expected", [(110, 539.0), (40, 196.0), (0, 0.0)])
    def test_fibre_propagation(self, km, expected):
        assert propagation_delay(Link("l", "a", "b", km, 10, Medium.FIBRE)) == pytest.approx(expected)

    def test_copper_propagation(self):
        assert propagation_delay(Link("l", "a", "b", 1, 10, Medium.COPPER)) == pytest.approx(5.4)

    @pytest.mark.parametrize(
        "size,rate,expected", [(1500, 10, 1.2), (0, 10, 0.0), (64, 100, 0.00512)]
    )
    def test_transmission(self, size, rate, expected):
        assert transmission_delay(size, rate) == pytest.approx(expected)

    def test_transmission_needs_rate(self):
        with pytest.raises(InvalidArgument):
            transmission_delay(64, 0)


def _send(engine, kind, src, dst, size=64, ttl=64, at=0.0):
    got = []
    pkt = engine.new_packet(kind, src, dst, size, ttl=ttl)
    engine.inject(pkt, at, lambda p, t: got.append((p, t)))
    return pkt, got


class TestForwarding:
    def test_ttl_decrements_on_routers_only(self, ref8):
        engine = engine_for(ref8, jitter=JitterModel.none())
        pkt, got = _send(engine, PacketKind.DATA, "A1S2", "B3S3")
        engine.run()
        assert got and got[0][0] is pkt
        assert pkt.ttl == 64 - 7

    def test_ttl_one_expires_at_first_gateway(self, ref8):
        engine = engine_for(ref8, jitter=JitterModel.none())
        _, got = _send(engine, PacketKind.ECHO_REQUEST, "A1S2", "B3S3", ttl=1)
        engine.run()
        (reply, _), = got
        assert reply.kind is PacketKind.TIME_EXCEEDED
        assert reply.reporter == "A1G"
        assert engine.expired == 1

    def test_echo_rtt_matches_closed_form(self, ref8):
        t = ref8.topology
        engine = engine_for(ref8, jitter=JitterModel.none())
        pkt, got = _send(engine, PacketKind.ECHO_REQUEST, "A1S2", "B3S3")
        engine.run()
        nodes = [n for n, _ in pkt.hop_trace]
        assert got[0][0].kind is PacketKind.ECHO_REPLY
        assert got[0][1] == pytest.approx(path_rtt(t, nodes, 64), abs=1e-3)

    def test_missing_entry_drops(self, ref8):
        engine = engine_for(ref8, jitter=JitterModel.none())
        engine.tables = engine.tables.without("CORE2", "B3S3")
        pkt, got = _send(engine, PacketKind.DATA, "A1S2", "B3S3")
        engine.run()
        assert got == []
        assert engine.dropped == 1 and pkt.id in engine.dropped_ids
        assert engine.conservation_holds() and engine.in_flight == 0

    def test_dropped_reply_releases_listener(self, ref8):
        engine = engine_for(ref8, jitter=JitterModel.none())
        engine.tables = engine.tables.without("CORE2", "A1S2")
        pkt, got = _send(engine, PacketKind.ECHO_REQUEST, "A1S2", "B3S3")
        engine.run()
        assert got == [] and pkt.id in engine.dropped_ids
        assert engine.delivered == 1 and engine.dropped == 1

    def test_queue_capacity_drops(self, cell3, cell3_tables):
        engine = Engine(cell3, cell3_tables, queue_capacity=1)
        for _ in range(3):
            _send(engine, PacketKind.DATA, "R1S2", "R1S3", size=9000)
        engine.run()
        assert engine.dropped == 2 and engine.delivered == 1
        assert engine.conservation_holds()

    def test_fifo_queueing(self, cell3, cell3_tables):
        engine = Engine(cell3, cell3_tables)
        a, got_a = _send(engine, PacketKind.DATA, "R1S2", "R1S3", size=1250)
        b, got_b = _send(engine, PacketKind.DATA, "R1S2", "R1S3", size=1250)
        engine.run()
        # 1250 B at 10 Gb/s is 1 us; b waits behind a on the first link.
        assert got_b[0][1] - got_a[0][1] == pytest.approx(1.0)
        assert engine.max_queue_depth == 2

    def test_inject_into_past(self, cell3, cell3_tables):
        engine = Engine(cell3, cell3_tables)
        engine.run(until_us=10)
        with pytest.raises(InvalidArgument):
            engine.inject(engine.new_packet(PacketKind.DATA, "R1S2", "R1S3", 64), 5)

    def test_bad_packet_size(self, cell3, cell3_tables):
        with pytest.raises(InvalidArgument):
            Engine(cell3, cell3_tables).new_packet(PacketKind.DATA, "R1S2", "R1S3", 0)


class TestLoop:
    def test_empty_run(self, cell3, cell3_tables):
        engine = Engine(cell3, cell3_tables)
        assert engine.run() == 0
        assert engine.conservation_holds()

    def test_until_truncates(self, ref8):
        engine = engine_for(ref8, jitter=JitterModel.none())
        _, got = _send(engine, PacketKind.DATA, "A1S2", "B3S3")
        engine.run(until_us=100.0)
        assert got == [] and engine.in_flight == 1 and engine.pending > 0
        assert engine.now == 100.0
        assert engine.conservation_holds()
        engine.run()
        assert got and engine.in_flight == 0

    def test_clock_monotonic(self, ref8):
        engine = engine_for(ref8, record_trace=True)
        for i in range(20):
            _send(engine, PacketKind.ECHO_REQUEST, "A1S2", "B3S3", at=i * 3.0)
        engine.run()
        times = [row[0] for row in engine.trace]
        assert times == sorted(times)
        assert trace_to_csv(engine).startswith("time_us,event_kind,node_id,packet_id\n")

    def test_hop_trace_rows(self, cell3, cell3_tables):
        engine = Engine(cell3, cell3_tables)
        pkt, _ = _send(engine, PacketKind.DATA, "R1S2", "R1S3")
        engine.run()
        rows = hop_trace_rows([pkt])
        assert [r[2] for r in rows] == ["R1S2", "R1SW", "R1S3"]


def _trace(ref8, seed):
    engine = engine_for(ref8, seed=seed, record_trace=True)
    for i in range(30):
        _send(engine, PacketKind.ECHO_REQUEST, "A1S2", "B3S3", ttl=1 + i % 8, at=i * 5.0)
    engine.run()
    return trace_to_csv(engine)


def test_determinism(ref8):
    assert _trace(ref8, 5) == _trace(ref8, 5)
    assert _trace(ref8, 5) != _trace(ref8, 6)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    sends=st.lists(
        st.tuples(
            st.sampled_from(["A1S2", "A3S3", "B3S3", "CAM1", "B1G"]),
            st.sampled_from(["A1S2", "A2S2", "B3S3", "B2S3"]),
            st.integers(1, 10),
            st.sampled_from(list(PacketKind)),
            st.floats(0, 500),
        ),
        max_size=25,
    ),
    until=st.one_of(st.none(), st.floats(0, 3000)),
)
def test_conservation(ref8, seed, sends, until):
    engine = engine_for(ref8, seed=seed)
    for src, dst, ttl, kind, at in sends:
        if src != dst:
            _send(engine, kind, src, dst, ttl=ttl, at=at)
    engine.run(until_us=until)
    assert engine.conservation_holds()
    engine.run()
    assert engine.conservation_holds() and engine.in_flight == 0
