"""Run sets over seeds, parameter sweeps and simulation-vs-model comparison."""
from __future__ import annotations

import copy
import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .config import ExperimentConfig
from .fabric import ConfigError, build_fat_tree, calibrated_link_delay, empty_rtt
from .metrics import FlowRecord, RunSummary, pool, summarize
from .models import ModelParams, rr_swift_throughput_numeric, swift_throughput
from .simulation import RunResult, Simulation
from .transport import CCA

SWEEP_AXES = ("history_size", "alpha", "K", "radix_k", "elephant_count")


@dataclass
class SeedRun:
    seed: int
    result: RunResult
    trace: str | None = None

    @property
    def records(self) -> list[FlowRecord]:
        return self.result.records


def run_one(cfg: ExperimentConfig, seed: int, trace: bool = False,
            timeseries: bool = False) -> SeedRun:
    scenario = cfg.build_scenario(seed)
    buf = io.StringIO() if trace else None
    record = tuple(f.flow_id for f in scenario.tracked) if timeseries else ()
    res = Simulation(scenario, cfg.settings(), seed, trace=buf, record_flows=record).run()
    return SeedRun(seed, res, buf.getvalue() if buf is not None else None)


def _job(args):
    return run_one(*args)


def run_set(cfg: ExperimentConfig, jobs: int = 1, trace: bool = False,
            timeseries: bool = False) -> list[SeedRun]:
    """All seeds of ``cfg``; results come back in seed order whatever ``jobs`` is."""
    work = [(cfg, s, trace, timeseries) for s in cfg.seeds()]
    if jobs <= 1 or len(work) == 1:
        out = [_job(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_job, work))
    return sorted(out, key=lambda r: r.seed)


def fingerprint(run: SeedRun) -> str:
    h = hashlib.blake2b(digest_size=8)
    for r in run.records:
        h.update(repr((r.flow_id, r.end, r.bytes_delivered, r.retransmissions, r.drops)).encode())
    return h.hexdigest()


def summaries(runs: list[SeedRun]) -> tuple[list[RunSummary], RunSummary]:
    per = [summarize(r.records, r.seed, fingerprint(r)) for r in runs]
    pooled = summarize(pool({r.seed: r.records for r in runs}), seed=-1)
    return per, pooled


def tracked_mean_throughput(runs: list[SeedRun]) -> float:
    """Mean goodput (bits/s) of tracked flows over all seeds."""
    vals = [r.throughput for run in runs for r in run.records if r.tracked and r.completed]
    if not vals:
        raise ConfigError("no tracked flow completed")
    return sum(vals) / len(vals)


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweep axis set; raises if the axis does not apply."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    new = copy.deepcopy(cfg)
    hist = new.cca.history
    if axis == "history_size":
        if new.cca.name != CCA.MSWIFT.value:
            raise ConfigError("history_size sweeps need cca.name = mswift")
        hist.kind, hist.m = "constant", int(value)
    elif axis == "alpha":
        if hist.kind not in ("window", "bounded_window"):
            raise ConfigError("alpha sweeps need a window or bounded_window history")
        hist.alpha = float(value)
    elif axis == "K":
        if hist.kind != "bounded_window":
            raise ConfigError("K sweeps need a bounded_window history")
        hist.K = int(value)
    elif axis == "radix_k":
        new.scenario.radix_k = int(value)
    else:
        if new.scenario.kind != "permutation":
            raise ConfigError("elephant_count sweeps need a permutation scenario")
        new.scenario.elephant_count = int(value)
    new.validate()
    return new


def model_params(cfg: ExperimentConfig, radix_k: int) -> ModelParams:
    """Model inputs matching a model-verification run at ``radix_k``."""
    s = cfg.settings()
    base_rtt = round(cfg.topology.base_rtt_us * 1_000_000)
    topo = build_fat_tree(radix_k, s.link_speed, calibrated_link_delay(base_rtt, s.link_speed))
    t_s = empty_rtt(topo)
    t_l = t_s + round((cfg.scenario.delay_factor - 1.0) * t_s)
    sw = s.swift
    return ModelParams(
        q=1.0 / topo.n_paths_interpod, mss=s.mss, t_s=t_s, t_l=t_l, ai=sw.ai,
        max_mdf=sw.max_mdf, beta=sw.beta, target_base=sw.base_target + 6 * sw.hop_scaling,
        fs_range=sw.fs_range, fs_min_cwnd=sw.fs_min_cwnd, fs_max_cwnd=sw.fs_max_cwnd,
    )


def model_rate_bps(cfg: ExperimentConfig, radix_k: int) -> float:
    p = model_params(cfg, radix_k)
    if cfg.cca.name == CCA.SWIFT.value:
        rate = swift_throughput(p)
    else:
        rate = rr_swift_throughput_numeric(p).rate
    return rate * 8


@dataclass
class CompareRow:
    radix_k: int
    n: int
    q: float
    sim_bps: float
    model_bps: float

    @property
    def rel_error(self) -> float:
        return (self.sim_bps - self.model_bps) / self.model_bps


def model_compare(cfg: ExperimentConfig, radices, jobs: int = 1) -> list[CompareRow]:
    if cfg.scenario.kind != "model_verification":
        raise ConfigError("model-compare needs a model_verification scenario")
    rows = []
    for k in radices:
        c = apply_axis(cfg, "radix_k", k)
        sim = tracked_mean_throughput(run_set(c, jobs))
        n = (k // 2) ** 2
        rows.append(CompareRow(k, n, 1.0 / n, sim, model_rate_bps(c, k)))
    return rows
