"""Workload generators: model verification, permutation (+ elephants), incast."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

from .engine import US, RngStream
from .fabric import ConfigError, build_fat_tree, calibrated_link_delay, empty_rtt

ELEPHANT_COUNTS = (0, 1, 2, 3, 6)
DEFAULT_FLOW_SIZE = 20_000_000

# where each elephant goes relative to the tracked flows, by elephant count
_PLACEMENT = {
    0: [],
    1: ["src_leaf"],
    2: ["src_leaf", "dst_pod"],
    3: ["src_leaf", "dst_pod", "dst_pod"],
    6: ["src_leaf"] * 3 + ["dst_leaf"] * 3,
}


@dataclass
class FlowSpec:
    flow_id: int
    src: int
    dst: int
    size: int
    kind: Literal["cca", "elephant"] = "cca"
    tracked: bool = False
    start: int = 0


@dataclass
class Scenario:
    name: str
    radix_k: int
    flows: list[FlowSpec]
    base_rtt: int = 14 * US
    # (core switch, destination pod) -> extra one-way delay in ps
    delay_overrides: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def cca_flows(self) -> list[FlowSpec]:
        return [f for f in self.flows if f.kind == "cca"]

    @property
    def elephants(self) -> list[FlowSpec]:
        return [f for f in self.flows if f.kind == "elephant"]

    @property
    def tracked(self) -> list[FlowSpec]:
        return [f for f in self.flows if f.tracked]

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "radix_k": self.radix_k,
            "seed": self.seed,
            "base_rtt_ps": self.base_rtt,
            "delay_overrides": [
                {"core": c, "dst_pod": p, "extra_ps": v}
                for (c, p), v in sorted(self.delay_overrides.items())
            ],
            "flows": [asdict(f) for f in self.flows],
        }

    def dump_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=1)


def gen_model_verification(radix_k: int, seed: int, base_rtt: int = 14 * US,
                           delay_factor: float = 2.0, flow_size: int = 2_000_000,
                           link_speed: int = 100_000_000_000) -> Scenario:
    """One inter-pod flow in an empty fat tree with exactly one slow core path.

    The slow path's RTT is ``delay_factor`` times the empty-network RTT.
    """
    if delay_factor <= 1:
        raise ConfigError("delay_factor must exceed 1")
    topo = build_fat_tree(radix_k, link_speed, calibrated_link_delay(base_rtt, link_speed))
    rng = RngStream(seed, "scenario")
    src = rng.randbelow(topo.n_hosts)
    src_pod = topo.pod_of(src)
    others = [h for h in range(topo.n_hosts) if topo.pod_of(h) != src_pod]
    dst = rng.choice(others)
    slow_core = rng.randbelow(topo.n_paths_interpod)
    rtt = empty_rtt(topo)
    extra = round((delay_factor - 1.0) * rtt)
    return Scenario(
        name="model_verification",
        radix_k=radix_k,
        flows=[FlowSpec(0, src, dst, flow_size, tracked=True)],
        base_rtt=base_rtt,
        delay_overrides={(slow_core, topo.pod_of(dst)): extra},
        seed=seed,
    )


def _derange(srcs: list[int], dsts: list[int], rng: RngStream) -> list[int]:
    """Shuffle ``dsts`` so no position maps a host to itself."""
    dsts = list(dsts)
    rng.shuffle(dsts)
    n = len(dsts)
    for _ in range(4 * n + 4):
        bad = [i for i in range(n) if srcs[i] == dsts[i]]
        if not bad:
            return dsts
        for i in bad:
            j = (i + 1 + rng.randbelow(n - 1)) % n if n > 1 else i
            dsts[i], dsts[j] = dsts[j], dsts[i]
    raise ConfigError("could not build a permutation without self-flows")


def gen_permutation(radix_k: int, elephant_count: int, seed: int,
                    flow_size: int = DEFAULT_FLOW_SIZE, tracked_fraction: float = 0.01,
                    start_jitter: int = 0) -> Scenario:
    """Random permutation; each host sends one flow and receives one flow.

    Tracked flows go from one leaf (A) to one leaf (B) in another pod. Elephants
    replace permutation flows and are placed relative to A and B.
    """
    if elephant_count not in _PLACEMENT:
        raise ConfigError(f"elephant_count must be one of {ELEPHANT_COUNTS}")
    topo = build_fat_tree(radix_k)
    n = topo.n_hosts
    rng = RngStream(seed, "scenario")
    n_tracked = max(1, math.ceil(tracked_fraction * n))
    if n_tracked > topo.half:
        raise ConfigError("tracked flows do not fit on one leaf")

    leaf_a = rng.randbelow(radix_k * topo.half)
    pod_a = leaf_a // topo.half
    other_leaves = [t for t in range(radix_k * topo.half) if t // topo.half != pod_a]
    leaf_b = rng.choice(other_leaves)
    pod_b = leaf_b // topo.half

    free_src = set(range(n))
    free_dst = set(range(n))
    pairs: list[tuple[int, int, str, bool]] = []

    a_hosts = topo.hosts_on_tor(leaf_a)
    b_hosts = topo.hosts_on_tor(leaf_b)
    tracked_src = rng.sample(a_hosts, n_tracked)
    tracked_dst = rng.sample(b_hosts, n_tracked)
    for s, d in zip(tracked_src, tracked_dst):
        pairs.append((s, d, "cca", True))
        free_src.discard(s)
        free_dst.discard(d)

    def pick(pool, exclude=()):
        cands = sorted(h for h in pool if h not in exclude)
        return rng.choice(cands) if cands else None

    for slot in _PLACEMENT[elephant_count]:
        side, scope = slot.split("_")
        own = set(a_hosts if side == "src" else b_hosts)
        pod = topo.hosts_in_pod(pod_a if side == "src" else pod_b)
        pool = free_src if side == "src" else free_dst
        host = pick(own & pool) if scope == "leaf" else None
        if host is None:
            host = pick(set(pod) & pool, exclude=own)
        if host is None:
            raise ConfigError(f"no host left for elephant slot {slot} at radix {radix_k}")
        if side == "src":
            other = pick(free_dst, exclude={host} | set(b_hosts))
            s, d = host, other
        else:
            other = pick(free_src, exclude={host} | set(a_hosts))
            s, d = other, host
        if s is None or d is None:
            raise ConfigError("host count too small for elephant placement")
        pairs.append((s, d, "elephant", False))
        free_src.discard(s)
        free_dst.discard(d)

    srcs = sorted(free_src)
    dsts = _derange(srcs, sorted(free_dst), rng)
    pairs.extend((s, d, "cca", False) for s, d in zip(srcs, dsts))
    pairs.sort(key=lambda p: p[0])

    flows = []
    for fid, (s, d, kind, tracked) in enumerate(pairs):
        start = rng.randbelow(start_jitter + 1) if start_jitter and kind == "cca" else 0
        flows.append(FlowSpec(fid, s, d, flow_size, kind, tracked, start))
    return Scenario(f"permutation_e{elephant_count}", radix_k, flows, seed=seed)


def gen_incast(radix_k: int, fan_in: int, seed: int,
               flow_size: int = DEFAULT_FLOW_SIZE) -> Scenario:
    """``fan_in`` distinct random senders to one random receiver; no elephants."""
    n = radix_k ** 3 // 4
    if not 1 <= fan_in < n:
        raise ConfigError(f"fan_in must be in [1, {n - 1}] for radix {radix_k}")
    rng = RngStream(seed, "scenario")
    receiver = rng.randbelow(n)
    senders = sorted(rng.sample([h for h in range(n) if h != receiver], fan_in))
    flows = [FlowSpec(i, s, receiver, flow_size) for i, s in enumerate(senders)]
    return Scenario(f"incast_{fan_in}", radix_k, flows, seed=seed)
