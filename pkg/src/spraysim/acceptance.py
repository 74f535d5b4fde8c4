"""Acceptance checks shared by ``spraysim verify`` and the test suite.

Each check returns a :class:`CheckResult`; thresholds are fixed here and never
relaxed at runtime. Scenario run sets are cached per process so that checks
sharing a baseline do not rerun it.
"""
from __future__ import annotations

import filecmp
import math
import random
import statistics
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .config import from_dict
from .experiments import run_set, summaries, tracked_mean_throughput
from .experiments import model_params as mv_model_params
from .metrics import ccdf, write_flows_csv, write_summaries_csv
from .models import (
    FastFlowParams, ModelParams, fastflow_throughput, rr_swift_throughput_numeric,
    sawtooth_oracle, swift_throughput, tcp_throughput,
)
from .simulation import Simulation
from .transport import DelayHistory, HistoryPolicy, history_size

BDP_BYTES = 175_000
MV_RADICES = (6, 8, 10)


@dataclass
class CheckResult:
    cid: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] AC{self.cid:<2d} {self.name}: {self.detail}"


def _flat(values) -> float:
    """Max relative spread of ``values`` around their first element."""
    return max(abs(v / values[0] - 1) for v in values)


# -- analytical --------------------------------------------------------------------
def check_sqrt_law() -> CheckResult:
    qs = (1e-4, 1e-3, 1e-2)
    base = ModelParams(q=0.01, t_s=14_400_000, t_l=36_000_000, target_base=21_000_000)
    tcp = _flat([tcp_throughput(base.with_q(q)) * math.sqrt(q) for q in qs])
    sw = _flat([swift_throughput(base.with_q(q)) * math.sqrt(q) for q in qs])
    small = (1e-4, 1e-3)
    ff = _flat([fastflow_throughput(base.with_q(q), FastFlowParams()) * math.sqrt(q)
                for q in small])
    rr = _flat([rr_swift_throughput_numeric(base.with_q(q)).rate * math.sqrt(q) for q in small])
    ok = tcp <= 1e-3 and sw <= 1e-3 and ff <= 0.03 and rr <= 0.03
    return CheckResult(1, "sqrt law", ok,
                       f"spread tcp {tcp:.2e} swift {sw:.2e} (<=1e-3); "
                       f"fastflow {ff:.3%} rr_swift {rr:.3%} (<=3%)")


def check_oracles() -> CheckResult:
    worst = 0.0
    parts = []
    for n in (100, 1000, 10000):
        p = ModelParams(q=1.0 / n)
        unit = p.unit_rate
        cycles = 40 * math.sqrt(n)
        t = sawtooth_oracle(1.0, 0.5, n, cycles) / (tcp_throughput(p) / unit) - 1
        s = sawtooth_oracle(p.ai, 1 - p.max_mdf, n, cycles) / (swift_throughput(p) / unit) - 1
        worst = max(worst, abs(t), abs(s))
        parts.append(f"n={n}: tcp {t:+.2%} swift {s:+.2%}")
    return CheckResult(2, "oracle equivalence", worst <= 0.05, "; ".join(parts))


def check_degenerate() -> CheckResult:
    worst = 0.0
    for q in (1e-3, 1e-2, 1 / 9):
        # long path far above target, so the decrease saturates at max_mdf
        p = ModelParams(q=q, t_l=200_000_000, target_base=15_800_000)
        sol = rr_swift_throughput_numeric(p, use_flow_scaling=False)
        worst = max(worst, abs(sol.rate / swift_throughput(p) - 1))
    return CheckResult(3, "solver degenerate case", worst <= 1e-6, f"max rel diff {worst:.2e}")


# -- model verification ------------------------------------------------------------
def _mv_cfg(cca: str, routing: str, radix: int, runs: int = 100, delay_factor: float = 2.0):
    return from_dict({
        "scenario": {"kind": "model_verification", "radix_k": radix,
                     "delay_factor": delay_factor},
        "routing": {"variant": routing},
        "cca": {"name": cca},
        "runs": runs,
    })


_MV: dict = {}


def _mv_runs(cca: str, routing: str, radix: int, runs: int = 100):
    key = (cca, routing, radix, runs)
    if key not in _MV:
        _MV[key] = run_set(_mv_cfg(cca, routing, radix, runs))
    return _MV[key]


def _mv_rate(cca, routing, radix) -> float:
    return tracked_mean_throughput(_mv_runs(cca, routing, radix))


def _mv_model(radix) -> float:
    return swift_throughput(mv_model_params(_mv_cfg("swift", "round_robin", radix), radix)) * 8


def check_model_fit() -> CheckResult:
    sim = [_mv_rate("swift", "round_robin", k) for k in MV_RADICES]
    mod = [_mv_model(k) for k in MV_RADICES]
    errs = [s / m - 1 for s, m in zip(sim, mod)]
    ratio_errs = [(sim[i + 1] / sim[i]) / (mod[i + 1] / mod[i]) - 1 for i in range(len(sim) - 1)]
    ok = all(abs(e) <= 0.20 for e in errs) and all(abs(e) <= 0.10 for e in ratio_errs)
    detail = ", ".join(f"k={k} {s / 1e9:.2f}/{m / 1e9:.2f} Gbps ({e:+.1%})"
                       for k, s, m, e in zip(MV_RADICES, sim, mod, errs))
    detail += "; adjacent ratio err " + ", ".join(f"{e:+.1%}" for e in ratio_errs)
    return CheckResult(4, "round-robin model fit", ok, detail)


def check_random_spray() -> CheckResult:
    sim = [_mv_rate("swift", "random_spray", k) for k in MV_RADICES]
    mod = [_mv_model(k) for k in MV_RADICES]
    errs = [s / m - 1 for s, m in zip(sim, mod)]
    # radices grow as q shrinks, so throughput must grow with radix
    monotone = all(a < b for a, b in zip(sim, sim[1:]))
    ok = all(abs(e) <= 0.30 for e in errs) and monotone
    detail = ", ".join(f"k={k} {e:+.1%}" for k, e in zip(MV_RADICES, errs))
    return CheckResult(5, "random spray robustness", ok, f"{detail}; monotone={monotone}")


def _uncongested_rate(cfg) -> float:
    vals = []
    for seed in cfg.seeds():
        sc = cfg.build_scenario(seed)
        sc.delay_overrides = {}
        res = Simulation(sc, cfg.settings(), seed).run()
        vals += [r.throughput for r in res.records if r.tracked and r.completed]
    return statistics.mean(vals)


def check_collapse() -> CheckResult:
    k = 10
    swift = _mv_rate("swift", "round_robin", k)
    lswift = _mv_rate("lswift", "round_robin", k)
    free = _uncongested_rate(_mv_cfg("swift", "round_robin", k, runs=20))
    ok = lswift > swift and swift < free and lswift < free
    return CheckResult(6, "swift collapse vs lswift", ok,
                       f"swift {swift / 1e9:.2f} lswift {lswift / 1e9:.2f} "
                       f"uncongested {free / 1e9:.2f} Gbps")


# -- desk-scale scenarios ----------------------------------------------------------
def _scn_cfg(scenario: dict, cca: str, history: dict, routing: str = "random_spray",
             runs: int = 20):
    return from_dict({
        "scenario": scenario,
        "topology": {"queue_capacity": BDP_BYTES},
        "routing": {"variant": routing},
        "cca": {"name": cca, "history": history},
        "runs": runs,
    })


_KEEP: dict = {}


def _scn(key: tuple, *args, **kw):
    """Cached (mean per-seed p99 FCT, mean throughput, runs) for one run set."""
    if key not in _KEEP:
        runs = run_set(_scn_cfg(*args, **kw))
        per, _ = summaries(runs)
        p99 = statistics.mean(s.fct_p99 for s in per)
        thr = statistics.mean(s.mean_throughput for s in per)
        _KEEP[key] = (p99, thr, runs)
    return _KEEP[key]


LATEST = {"kind": "latest_only"}
BOUNDED = {"kind": "bounded_window", "alpha": 0.5, "K": 10}
PERM6 = {"kind": "permutation", "radix_k": 6, "elephant_count": 6, "flow_size": 2_000_000}
PERM0 = {"kind": "permutation", "radix_k": 6, "elephant_count": 0, "flow_size": 2_000_000}
INCAST = {"kind": "incast", "radix_k": 6, "fan_in": 50, "flow_size": 2_000_000}
CONST_SIZES = (5, 10, 20, 40)


def check_permutation() -> CheckResult:
    lp, lt, _ = _scn(("perm6", "lswift"), PERM6, "lswift", LATEST)
    mp, mt, _ = _scn(("perm6", "mswift"), PERM6, "mswift", BOUNDED)
    fct_gain = 1 - mp / lp
    thr_gain = mt / lt - 1
    ok = fct_gain >= 0.10 and thr_gain >= 0.05
    return CheckResult(7, "mswift vs lswift permutation", ok,
                       f"p99 FCT {lp / 1e6:.0f} -> {mp / 1e6:.0f} us ({fct_gain:+.1%}, need >=10%), "
                       f"throughput {thr_gain:+.1%} (need >=5%)")


def _incast_baseline():
    return _scn(("incast", "lswift"), INCAST, "lswift", LATEST)


def check_incast_constant() -> CheckResult:
    base = _incast_baseline()[0]
    p99 = [_scn(("incast", "const", m), INCAST, "mswift", {"kind": "constant", "m": m})[0]
           for m in CONST_SIZES]
    deg = {m: p / base - 1 for m, p in zip(CONST_SIZES, p99)}
    monotone = all(a <= b for a, b in zip(p99, p99[1:]))
    ok = deg[10] > 0.10 and monotone
    return CheckResult(8, "constant history incast", ok,
                       "p99 vs lswift " + ", ".join(f"m={m} {d:+.1%}" for m, d in deg.items())
                       + f"; need m=10 > +10% and monotone (monotone={monotone})")


def check_incast_bounded() -> CheckResult:
    base = _incast_baseline()[0]
    bw = _scn(("incast", "bounded"), INCAST, "mswift", BOUNDED)[0]
    d = bw / base - 1
    return CheckResult(9, "bounded window incast parity", abs(d) <= 0.05,
                       f"p99 {base / 1e6:.0f} vs {bw / 1e6:.0f} us ({d:+.1%}, need within 5%)")


def check_single_path() -> CheckResult:
    sp, st, _ = _scn(("sp", "swift"), PERM0, "swift", LATEST, routing="single_path")
    mp, mt, _ = _scn(("sp", "mswift"), PERM0, "mswift", BOUNDED, routing="single_path")
    dp, dt = mp / sp - 1, mt / st - 1
    ok = abs(dp) <= 0.05 and abs(dt) <= 0.05
    return CheckResult(10, "single-path parity", ok,
                       f"p99 {dp:+.2%}, throughput {dt:+.2%} (need within 5%)")


# -- properties ----------------------------------------------------------------------
def _all_cached_runs():
    for runs in _MV.values():
        yield from runs
    for _, _, runs in _KEEP.values():
        yield from runs


def check_properties(include_cached: bool = True) -> CheckResult:
    problems = []
    # determinism: two independent executions produce byte-identical CSVs
    cfg = from_dict({"scenario": {"kind": "permutation", "radix_k": 4, "elephant_count": 1,
                                  "flow_size": 500_000},
                     "topology": {"queue_capacity": BDP_BYTES}, "cca": {"name": "mswift",
                     "history": BOUNDED}, "runs": 2})
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for i in range(2):
            runs = run_set(cfg)
            d = Path(tmp) / str(i)
            d.mkdir()
            write_flows_csv(d / "flows.csv", {r.seed: r.records for r in runs})
            write_summaries_csv(d / "summaries.csv", *summaries(runs))
            outs.append(d)
        for name in ("flows.csv", "summaries.csv"):
            if not filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False):
                problems.append(f"{name} differs between runs")
    checked = list(runs)
    if include_cached:
        checked += list(_all_cached_runs())
    min_cwnd = 1.0
    for r in checked:
        res = r.result
        if not res.conserved or res.hop_violations:
            problems.append(f"conservation/hops failed at seed {r.seed}")
        if res.min_cwnd_seen < min_cwnd:
            problems.append(f"cwnd {res.min_cwnd_seen} below floor at seed {r.seed}")
        pts = ccdf(r.records)
        if any(b[1] > a[1] or b[0] < a[0] for a, b in zip(pts, pts[1:])):
            problems.append(f"ccdf not monotone at seed {r.seed}")
    # median against a sort-based oracle
    rng = random.Random(7)
    for _ in range(10_000):
        m = rng.randint(1, 40)
        h = DelayHistory(HistoryPolicy.constant(m))
        vals = [rng.randint(0, 10 ** 7) for _ in range(rng.randint(1, 60))]
        for v in vals:
            h.push(v, 10.0)
        s = sorted(vals[-m:])
        k = len(s)
        want = s[k // 2] if k % 2 else (s[k // 2 - 1] + s[k // 2]) / 2
        if h.effective() != want:
            problems.append("median mismatch")
            break
    table = {30: 10, 2: 3, 16: 8}
    bw = HistoryPolicy.bounded_window(0.5, 10)
    for w, want in table.items():
        if history_size(bw, w) != want:
            problems.append(f"history size at W={w} is {history_size(bw, w)}, want {want}")
    detail = f"{len(checked)} runs checked" if not problems else "; ".join(problems[:5])
    return CheckResult(11, "property suites", not problems, detail)


CHECKS: list[Callable[[], CheckResult]] = [
    check_sqrt_law, check_oracles, check_degenerate, check_model_fit, check_random_spray,
    check_collapse, check_permutation, check_incast_constant, check_incast_bounded,
    check_single_path, check_properties,
]
QUICK = {1, 2, 3, 11}


def run_checks(quick: bool = False, echo: Callable[[str], None] = print) -> list[CheckResult]:
    results = []
    for i, check in enumerate(CHECKS, start=1):
        if quick and i not in QUICK:
            continue
        res = check()
        echo(res.line())
        results.append(res)
    return results
