from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import policy_route, tdm_departure
from pondc.addressing import derive_address_plan
from pondc.errors import Exhausted, InvalidArgument, Unreachable
from pondc.routing import (
    Route,
    assign_wavelengths,
    awgr_output_port,
    build_tdm_schedule,
    compute_forwarding_tables,
    coupler_schedules,
    first_fit_wavelengths,
    route,
    routes_to_csv,
    wavelengths_to_csv,
)
from pondc.topo import InterconnectMode, NodeKind, build_cell, build_reference_testbed


def _designated(t):
    out = {}
    for n in t.nodes.values():
        if n.kind.value == "GatewayServer":
            out[n.rack_id] = min(out.get(n.rack_id, n.id), n.id)
    return out


class TestRoutes:
    def test_intra_rack(self, cell3_tables):
        assert route(cell3_tables, "R1S2", "R1S3").nodes == ("R1S2", "R1SW", "R1S3")

    def test_same_node(self, cell3_tables):
        r = route(cell3_tables, "R1S2", "R1S2")
        assert r.nodes == ("R1S2",) and r.links == ()

    def test_inter_rack_gateways_in_order(self, cell3, cell3_tables):
        r = route(cell3_tables, "R1S2", "R3S3")
        assert r.hops(cell3) == ["R1G", "R3G", "R3S3"]
        assert r.nodes == ("R1S2", "R1SW", "R1G", "R3G", "R3SW", "R3S3")

    def test_cross_cell(self, ref8):
        t = ref8.topology
        tables = compute_forwarding_tables(t, derive_address_plan(t))
        r = route(tables, "A2S2", "B1S3")
        assert r.hops(t)[:2] == ["A2G", "A1G"]
        assert r.hops(t)[-2:] == ["B1G", "B1S3"]

    def test_missing_entry_unreachable(self, cell3_tables):
        broken = cell3_tables.without("R1G", "R3S3")
        with pytest.raises(Unreachable):
            route(broken, "R1S2", "R3S3")

    def test_route_rejects_loops(self):
        with pytest.raises(InvalidArgument):
            Route(("a", "b", "a"), ("x", "y"))

    def test_tables_deterministic(self, cell3, cell3_plan, cell3_tables):
        assert compute_forwarding_tables(cell3, cell3_plan) == cell3_tables

    def test_routes_csv(self, cell3_tables):
        text = routes_to_csv([route(cell3_tables, "R1S2", "R1S3")])
        assert text == "src,dst,hop_index,node_id,link_id\n" \
            "R1S2,R1S3,0,R1S2,\nR1S2,R1S3,1,R1SW,R1S2-R1SW\nR1S2,R1S3,2,R1S3,R1S3-R1SW\n"


@pytest.mark.parametrize("gateways", [1, 2])
def test_exhaustive_against_oracle(gateways):
    t = build_cell("C", ["R1", "R2", "R3"], 3, gateways)
    tables = compute_forwarding_tables(t, derive_address_plan(t))
    designated = _designated(t)
    endpoints = [nid for nid, n in t.nodes.items() if not n.is_transparent]
    for a, b in itertools.product(endpoints, repeat=2):
        assert list(route(tables, a, b).nodes) == policy_route(t, a, b, designated), (a, b)


def test_reference_against_oracle(ref8):
    t = ref8.topology
    tables = compute_forwarding_tables(t, derive_address_plan(t))
    designated = _designated(t)
    for a, b in [("A1S2", "B3S3"), ("A3S3", "A1S2"), ("B2S2", "CAM1"), ("CAM1", "B3S3")]:
        assert list(route(tables, a, b).nodes) == policy_route(t, a, b, designated)


@settings(max_examples=25, deadline=None)
@given(racks=st.integers(1, 4), servers=st.integers(1, 3), data=st.data())
def test_random_cells_against_oracle(racks, servers, data):
    t = build_cell("C", [f"R{i}" for i in range(1, racks + 1)], servers, 1)
    tables = compute_forwarding_tables(t, derive_address_plan(t))
    nodes = sorted(nid for nid, n in t.nodes.items() if not n.is_transparent)
    a = data.draw(st.sampled_from(nodes))
    b = data.draw(st.sampled_from(nodes))
    assert list(route(tables, a, b).nodes) == policy_route(t, a, b, _designated(t))


class TestAwgr:
    def test_examples(self):
        assert awgr_output_port(0, 0, 4) == 0
        assert awgr_output_port(1, 2, 4) == 3
        assert awgr_output_port(3, 2, 4) == 1

    @pytest.mark.parametrize("args", [(4, 0, 4), (-1, 0, 4), (0, -1, 4), (0, 0, 0)])
    def test_bad_arguments(self, args):
        with pytest.raises(InvalidArgument):
            awgr_output_port(*args)

    @pytest.mark.parametrize("n", range(1, 17))
    def test_bijection(self, n):
        for fixed in range(n):
            assert sorted(awgr_output_port(fixed, w, n) for w in range(n)) == list(range(n))
            assert sorted(awgr_output_port(i, fixed, n) for i in range(n)) == list(range(n))

    def test_first_fit(self):
        assert first_fit_wavelengths([(0, 0)], 4, 80) == [0]
        assert first_fit_wavelengths([(0, 0), (0, 0)], 4, 80) == [0, 4]
        assert first_fit_wavelengths([(0, 1), (1, 1)], 4, 80) == [1, 0]

    def test_exhaustion(self):
        assert first_fit_wavelengths([(0, 0)] * 80, 1, 80) == list(range(80))
        with pytest.raises(Exhausted):
            first_fit_wavelengths([(0, 0)] * 81, 1, 80)

    def test_assign_on_testbed(self):
        t = build_reference_testbed(mode=InterconnectMode.AWGR).topology
        a = assign_wavelengths(t, [("A1S2", "B3S3")])
        assert a.wavelengths == {0: 0}
        two = assign_wavelengths(t, [("A1S2", "B3S3"), ("A2S2", "B3S2")])
        assert len(set(two.wavelengths.values())) == 2
        local = assign_wavelengths(t, [("A1S2", "A2S2")])
        assert local.wavelengths == {}
        assert wavelengths_to_csv(two).splitlines() == [
            "flow_id,src,dst,wavelength", "0,A1S2,B3S3,0", "1,A2S2,B3S2,1"
        ]

    def test_assign_exhausts_after_80(self):
        t = build_reference_testbed(mode=InterconnectMode.AWGR).topology
        tables = compute_forwarding_tables(t, derive_address_plan(t))
        assert len(assign_wavelengths(t, [("A1S2", "B3S3")] * 80, tables).wavelengths) == 80
        with pytest.raises(Exhausted):
            assign_wavelengths(t, [("A1S2", "B3S3")] * 81, tables)

    def test_assign_needs_awgr_mode(self, ref8):
        with pytest.raises(InvalidArgument):
            assign_wavelengths(ref8.topology, [("A1S2", "B3S3")])


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 16),
    reqs=st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), min_size=1, max_size=60),
)
def test_first_fit_uniqueness(n, reqs):
    reqs = [(i % n, o % n) for i, o in reqs]
    ws = first_fit_wavelengths(reqs, n, 80)
    pairs = list(zip((i for i, _ in reqs), ws))
    assert len(set(pairs)) == len(pairs)
    for (i, o), w in zip(reqs, ws):
        assert awgr_output_port(i, w, n) == o


class TestTdm:
    def test_grants(self):
        s = build_tdm_schedule(["a", "b", "c"], frame_us=300)
        assert [(g.sender, g.start_us, g.length_us) for g in s.grants] == [
            ("a", 0, 100), ("b", 100, 100), ("c", 200, 100)
        ]

    def test_departure_examples(self):
        s = build_tdm_schedule(["a", "b", "c"], frame_us=300)
        assert s.departure("a", 150) == 300
        assert s.departure("a", 50) == 50
        assert s.departure("b", 50) == 100
        assert s.departure("c", 299) == 299
        assert s.wait("a", 150) == 150

    def test_single_sender_never_waits(self):
        s = build_tdm_schedule(["only"], frame_us=125)
        assert all(s.wait("only", t) == 0 for t in (0, 1.5, 124.9, 125, 1e6 + 0.3))
        assert s.mean_wait("only") == 0

    def test_bad_schedules(self):
        with pytest.raises(InvalidArgument):
            build_tdm_schedule([])
        with pytest.raises(InvalidArgument):
            build_tdm_schedule(["a", "b"], frame_us=100, slot_us=60)
        with pytest.raises(InvalidArgument):
            build_tdm_schedule(["a"]).departure("zz", 0)

    def test_testbed_coupler(self, ref8):
        scheds = coupler_schedules(ref8.topology)
        (cpl,) = ref8.topology.of_kind(NodeKind.COUPLER)
        assert scheds[cpl.id].senders == ["ONU"]

    @settings(max_examples=300, deadline=None)
    @given(
        k=st.integers(1, 8),
        idx=st.integers(0, 7),
        t=st.floats(0, 10_000, allow_nan=False),
    )
    def test_matches_timeline_oracle(self, k, idx, t):
        idx %= k
        senders = [f"s{i}" for i in range(k)]
        s = build_tdm_schedule(senders, frame_us=125)
        slot = 125 / k
        got = s.departure(senders[idx], t)
        assert got == pytest.approx(tdm_departure(125, idx * slot, slot, t), abs=1e-6)
        assert got >= t
