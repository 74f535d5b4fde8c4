import io

import pytest

from spraysim.engine import MS
from spraysim.fabric import Routing, RoutingPolicy
from spraysim.metrics import drop_rate
from spraysim.scenarios import gen_incast, gen_model_verification, gen_permutation
from spraysim.simulation import RunSettings, run_scenario
from spraysim.transport import CCA, HistoryPolicy

BDP = 175_000

SCENARIOS = [
    ("perm-rps", lambda: gen_permutation(4, 1, seed=1, flow_size=300_000),
     RunSettings(cca=CCA.MSWIFT, history=HistoryPolicy.bounded_window(), queue_capacity=BDP)),
    ("perm-ar", lambda: gen_permutation(4, 0, seed=2, flow_size=300_000),
     RunSettings(cca=CCA.LSWIFT, routing=RoutingPolicy(Routing.ADAPTIVE), queue_capacity=BDP)),
    ("perm-sp", lambda: gen_permutation(4, 0, seed=3, flow_size=300_000),
     RunSettings(cca=CCA.SWIFT, routing=RoutingPolicy(Routing.SINGLE_PATH))),
    ("incast", lambda: gen_incast(4, 8, seed=4, flow_size=200_000),
     RunSettings(cca=CCA.MSWIFT, history=HistoryPolicy.constant(10), queue_capacity=40_000)),
    ("mv-rr", lambda: gen_model_verification(6, seed=5, flow_size=500_000),
     RunSettings(routing=RoutingPolicy(Routing.ROUND_ROBIN))),
]


@pytest.mark.parametrize("name,make,settings", SCENARIOS, ids=[s[0] for s in SCENARIOS])
def test_invariants(name, make, settings):
    res = run_scenario(make(), settings)
    assert res.conserved
    assert res.hop_violations == 0
    assert res.min_cwnd_seen >= settings.swift.min_cwnd
    assert all(r.completed for r in res.records if r.kind == "cca")
    assert all(r.end >= r.start for r in res.records if r.completed)
    assert all(r.bytes_delivered == r.size for r in res.records if r.kind == "cca")


def test_lossy_incast_times_out():
    res = run_scenario(gen_incast(4, 8, seed=4, flow_size=200_000),
                       RunSettings(cca=CCA.LSWIFT, queue_capacity=20_000))
    assert res.dropped > 0
    assert sum(r.rto_count for r in res.records) > 0
    assert res.conserved


def test_same_seed_same_result():
    sc = gen_permutation(4, 1, seed=8, flow_size=300_000)
    s = RunSettings(cca=CCA.MSWIFT, history=HistoryPolicy.bounded_window(), queue_capacity=BDP)
    a, b = io.StringIO(), io.StringIO()
    ra = run_scenario(sc, s, trace=a)
    rb = run_scenario(sc, s, trace=b)
    assert a.getvalue() == b.getvalue()
    assert [(r.end, r.retransmissions) for r in ra.records] == \
        [(r.end, r.retransmissions) for r in rb.records]
    other = run_scenario(sc, s, seed=9)
    assert [r.end for r in other.records] != [r.end for r in ra.records]


def test_event_count_matches_trace():
    buf = io.StringIO()
    res = run_scenario(gen_permutation(4, 0, seed=1, flow_size=200_000), RunSettings(), trace=buf)
    assert res.events_processed == len(buf.getvalue().splitlines())
    delivered = sum(ln.split(",")[3].split()[0] in ("data", "ack")
                    for ln in buf.getvalue().splitlines() if ",PACKET_ARRIVAL," in ln)
    assert delivered >= res.delivered


def test_elephants_lose_more_than_sprayed_flows():
    records = []
    for seed in (1, 2, 3):
        sc = gen_permutation(6, 6, seed=seed, flow_size=2_000_000)
        records += run_scenario(sc, RunSettings(cca=CCA.LSWIFT, queue_capacity=BDP)).records
    assert drop_rate(records, "elephant") > drop_rate(records, "cca") > 0


def test_run_stops_at_max_time():
    sc = gen_permutation(4, 0, seed=1, flow_size=50_000_000)
    res = run_scenario(sc, RunSettings(max_time=MS // 10))
    assert res.final_time == MS // 10
    assert not any(r.completed for r in res.records)
    assert res.conserved and res.in_flight > 0


def test_single_flow_near_line_rate_without_congestion():
    sc = gen_model_verification(4, seed=1, flow_size=4_000_000)
    sc.delay_overrides = {}
    res = run_scenario(sc, RunSettings(routing=RoutingPolicy(Routing.ROUND_ROBIN)))
    assert res.records[0].throughput > 40e9
