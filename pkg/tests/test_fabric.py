import math
from collections import Counter

import pytest

from spraysim.engine import US, Engine, RngStream
from spraysim.fabric import (
    ConfigError, Fabric, Packet, Port, Routing, RoutingPolicy, build_fat_tree,
    calibrated_link_delay, empty_rtt, quantum_for, select_next_hop,
)
from spraysim.scenarios import gen_model_verification
from spraysim.simulation import RunSettings, run_scenario

GBPS100 = 100_000_000_000


class Dummy:
    routing = None
    flow_id = 0


def make_fabric(k=4, policy=Routing.ROUND_ROBIN, capacity=None, seed=1, delay=None):
    eng = Engine()
    topo = build_fat_tree(k, GBPS100, delay, capacity)
    got, dropped = [], []
    fab = Fabric(eng, topo, RoutingPolicy(policy), RngStream(seed, "routing"),
                 deliver=lambda p: got.append((eng.now, p)), on_drop=dropped.append)
    return eng, topo, fab, got, dropped


@pytest.mark.parametrize("k,hosts", [(4, 16), (6, 54), (10, 250), (22, 2662)])
def test_host_counts(k, hosts):
    assert build_fat_tree(k).n_hosts == hosts


@pytest.mark.parametrize("k", [3, 2, 7])
def test_bad_radix(k):
    with pytest.raises(ConfigError):
        build_fat_tree(k)


def test_k4_paths_by_graph_search():
    topo = build_fat_tree(4)
    paths = topo.core_paths(0, 15)
    assert len(paths) == 4 == topo.n_paths_interpod
    assert len({p[3] for p in paths}) == 4  # every path through a distinct core
    assert all(len(p) == 7 for p in paths)
    assert len(topo.core_paths(0, 2)) == 2  # same pod, different leaf
    assert len(topo.core_paths(0, 1)) == 1
    assert len(build_fat_tree(4).describe()["switches"]["core"]) == 4


@pytest.mark.parametrize("k", [4, 6])
def test_every_interpod_pair_has_k2_over_4_paths(k):
    topo = build_fat_tree(k)
    assert len(topo.core_paths(0, topo.n_hosts - 1)) == (k // 2) ** 2


def test_non_blocking_port_counts():
    topo = build_fat_tree(6)
    for t in range(len(topo.tor_up)):
        assert len(topo.tor_up[t]) == len(topo.tor_down[t])
    for g in range(len(topo.agg_up)):
        assert len(topo.agg_up[g]) == len(topo.agg_down[g])


def test_calibrated_rtt_is_14us():
    topo = build_fat_tree(8)
    assert topo.link_delay == calibrated_link_delay(14 * US) == 1_000_266
    assert abs(empty_rtt(topo) - 14 * US) < 12


def test_round_robin_is_periodic():
    ports = [Port(str(i), 0, i, GBPS100, 0, math.inf) for i in range(4)]
    route = {}
    rng = RngStream(0, "r")
    picks = [select_next_hop(ports, Routing.ROUND_ROBIN, route, "s", rng) for _ in range(9)]
    assert picks == [0, 1, 2, 3, 0, 1, 2, 3, 0]


def test_random_spray_is_uniform():
    ports = [Port(str(i), 0, i, GBPS100, 0, math.inf) for i in range(4)]
    rng = RngStream(42, "routing")
    counts = Counter(select_next_hop(ports, Routing.RANDOM_SPRAY, {}, "s", rng)
                     for _ in range(100_000))
    for i in range(4):
        assert abs(counts[i] / 100_000 - 0.25) <= 0.01


def test_single_path_sticks():
    ports = [Port(str(i), 0, i, GBPS100, 0, math.inf) for i in range(4)]
    rng = RngStream(5, "routing")
    route = {}
    picks = {select_next_hop(ports, Routing.SINGLE_PATH, route, "s", rng) for _ in range(50)}
    assert len(picks) == 1


def test_adaptive_ties_between_least_loaded():
    ports = [Port(str(i), 0, i, GBPS100, 0, math.inf) for i in range(4)]
    q = 1000
    for port, quanta in zip(ports, [2, 0, 0, 1]):
        port.occupancy = quanta * q
    rng = RngStream(9, "routing")
    picks = Counter(select_next_hop(ports, Routing.ADAPTIVE, {}, "s", rng, 0, q)
                    for _ in range(4000))
    assert set(picks) == {1, 2}
    assert abs(picks[1] - picks[2]) < 300


def test_adaptive_quantum_defaults():
    assert quantum_for(RoutingPolicy(Routing.ADAPTIVE), 175_000) == 21_875
    assert quantum_for(RoutingPolicy(Routing.ADAPTIVE), math.inf) == 4096
    assert quantum_for(RoutingPolicy(Routing.ADAPTIVE, 500), 175_000) == 500


def test_port_serialization_and_tail_drop():
    p = Port("x", 0, 0, GBPS100, 0, 8192)
    assert p.enqueue(0, 4096) == 327_680
    assert p.enqueue(0, 4096) == 655_360  # FIFO behind the first
    assert p.enqueue(0, 1) == -1 and p.drops == 1
    assert p.occupancy_at(0) == 8192
    # after the first finishes there is room again
    assert p.enqueue(327_680, 4096) == 983_040
    assert p.occupancy_at(10 ** 9) == 0


def test_zero_delay_arrival_is_serialization_only():
    p = Port("x", 0, 0, GBPS100, 0, math.inf)
    assert p.arrival_time(p.enqueue(1000, 4096)) == 1000 + 327_680


def test_packet_hops_and_conservation():
    eng, topo, fab, got, dropped = make_fabric(k=4, capacity=None)
    flow = Dummy()
    route = {}
    for seq, dst in enumerate([1, 2, 15, 8, 15, 15]):
        fab.inject(Packet(flow, seq, 4096, 0, 0, dst, route))
    eng.run_until(10 ** 9)
    assert fab.delivered == len(got) == 6 and fab.hop_violations == 0
    assert fab.injected == fab.delivered + fab.dropped
    assert sorted(p.hops for _, p in got) == [2, 4, 6, 6, 6, 6]


def test_overload_drops_and_still_conserves():
    eng, topo, fab, got, dropped = make_fabric(k=4, capacity=3 * 4096)
    flow = Dummy()
    for s in range(3):
        for seq in range(20):
            fab.inject(Packet(flow, seq, 4096, 0, s, 15, {}))
    eng.run_until(10 ** 9)
    assert fab.dropped > 0 and len(dropped) == fab.dropped
    assert fab.injected == fab.delivered + fab.dropped


def test_override_produces_bimodal_ack_delays():
    sc = gen_model_verification(4, seed=3, flow_size=400_000)
    settings = RunSettings(routing=RoutingPolicy(Routing.ROUND_ROBIN))
    res = run_scenario(sc, settings, record_flows=(0,))
    topo = build_fat_tree(4)
    t_s = empty_rtt(topo)
    delays = [d for _, _, d, _, _ in res.timeseries[0]]
    # the slack covers queueing of a window's worth of packets at the NIC
    slack = 12 * 327_680
    short = [d for d in delays if t_s <= d < t_s + slack]
    long = [d for d in delays if 2 * t_s <= d < 2 * t_s + slack]
    assert min(delays) >= t_s
    assert short and long
    assert len(short) + len(long) == len(delays)
    assert 0.1 < len(long) / len(delays) < 0.4  # one path of four


def test_topology_json(tmp_path):
    topo = build_fat_tree(4)
    topo.set_delay_override(1, 3, 5)
    path = tmp_path / "t.json"
    topo.dump_json(path)
    import json
    d = json.loads(path.read_text())
    assert d["hosts"] == 16
    assert len(d["links"]) == sum(1 for _ in topo.all_ports())
    assert [ln for ln in d["links"] if ln["extra_delay_ps"] == 5][0]["src"] == "core1"
