import json
from collections import Counter

import pytest

from spraysim.fabric import ConfigError, build_fat_tree, empty_rtt
from spraysim.scenarios import gen_incast, gen_model_verification, gen_permutation


@pytest.mark.parametrize("k,paths", [(6, 9), (8, 16), (10, 25), (22, 121)])
def test_model_verification_path_count(k, paths):
    sc = gen_model_verification(k, seed=1)
    topo = build_fat_tree(k)
    f = sc.flows[0]
    assert len(sc.flows) == 1 and f.tracked
    assert topo.pod_of(f.src) != topo.pod_of(f.dst)
    assert topo.n_paths_interpod == paths
    if k <= 8:
        assert len(topo.core_paths(f.src, f.dst)) == paths
    (core, pod), extra = next(iter(sc.delay_overrides.items()))
    assert 0 <= core < paths and pod == topo.pod_of(f.dst)
    assert extra == empty_rtt(topo)  # default: long RTT is twice the short one


def test_delay_factor():
    sc = gen_model_verification(6, seed=1, delay_factor=2.5)
    rtt = empty_rtt(build_fat_tree(6))
    assert next(iter(sc.delay_overrides.values())) == round(1.5 * rtt)
    with pytest.raises(ConfigError):
        gen_model_verification(6, seed=1, delay_factor=1.0)


@pytest.mark.parametrize("k,e", [(4, 0), (4, 1), (6, 2), (6, 3), (6, 6), (8, 6)])
def test_permutation_is_a_bijection(k, e):
    sc = gen_permutation(k, e, seed=11)
    n = k ** 3 // 4
    assert sorted(f.src for f in sc.flows) == list(range(n))
    assert sorted(f.dst for f in sc.flows) == list(range(n))
    assert all(f.src != f.dst for f in sc.flows)
    assert len(sc.elephants) == e
    assert all(not f.tracked for f in sc.elephants)


def test_tracked_flows_go_leaf_to_leaf():
    topo = build_fat_tree(10)
    sc = gen_permutation(10, 0, seed=4)
    tr = sc.tracked
    assert len(tr) == 3  # ceil(1% of 250)
    assert len({topo.tor_of(f.src) for f in tr}) == 1
    assert len({topo.tor_of(f.dst) for f in tr}) == 1
    assert topo.pod_of(tr[0].src) != topo.pod_of(tr[0].dst)


@pytest.mark.parametrize("k", [8, 10])
def test_six_elephants_contend_at_both_leaves(k):
    topo = build_fat_tree(k)
    sc = gen_permutation(k, 6, seed=3)
    a = topo.tor_of(sc.tracked[0].src)
    b = topo.tor_of(sc.tracked[0].dst)
    room = topo.half - len(sc.tracked)
    at_a = sum(topo.tor_of(f.src) == a for f in sc.elephants)
    at_b = sum(topo.tor_of(f.dst) == b for f in sc.elephants)
    assert at_a == at_b == min(3, room)
    pod_a = sum(topo.pod_of(f.src) == topo.pod_of(sc.tracked[0].src) for f in sc.elephants)
    assert pod_a >= 3


def test_small_leaves_fall_back_to_pod():
    topo = build_fat_tree(6)
    sc = gen_permutation(6, 6, seed=3)
    pa = topo.pod_of(sc.tracked[0].src)
    pb = topo.pod_of(sc.tracked[0].dst)
    assert sum(topo.pod_of(f.src) == pa for f in sc.elephants) >= 3
    assert sum(topo.pod_of(f.dst) == pb for f in sc.elephants) >= 3


def test_permutation_deterministic():
    a = gen_permutation(6, 3, seed=5).manifest()
    b = gen_permutation(6, 3, seed=5).manifest()
    c = gen_permutation(6, 3, seed=6).manifest()
    assert a == b and a != c


def test_bad_elephant_count():
    with pytest.raises(ConfigError):
        gen_permutation(6, 4, seed=1)


def test_incast():
    sc = gen_incast(10, 50, seed=2)
    assert len({f.src for f in sc.flows}) == 50
    assert len({f.dst for f in sc.flows}) == 1
    assert sc.flows[0].dst not in {f.src for f in sc.flows}
    assert gen_incast(10, 50, seed=2).manifest() == sc.manifest()
    small = gen_incast(4, 2, seed=1)
    assert len(small.flows) == 2
    with pytest.raises(ConfigError):
        gen_incast(4, 16, seed=1)


def test_start_jitter():
    sc = gen_permutation(4, 0, seed=1, start_jitter=1000)
    starts = Counter(f.start for f in sc.flows)
    assert len(starts) > 1 and max(starts) <= 1000


def test_manifest_round_trips_through_json(tmp_path):
    sc = gen_model_verification(6, seed=9)
    path = tmp_path / "m.json"
    sc.dump_manifest(path)
    d = json.loads(path.read_text())
    assert d["radix_k"] == 6 and d["flows"][0]["tracked"]
    assert d["delay_overrides"][0]["extra_ps"] == next(iter(sc.delay_overrides.values()))
