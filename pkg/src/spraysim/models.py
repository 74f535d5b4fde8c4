"""Closed-form throughput models for one sprayed flow, plus a sawtooth oracle.

Every model assumes a single flow sprayed round-robin over ``n = 1/q`` paths,
one of which is congested with a constant round-trip time ``T_l`` while the
rest see ``T_s``. Rates are in bytes per second; times are integer picoseconds
as in the rest of the package.

The reordering-resilient Swift model is a reconstruction: window and
flow-scaled target delay are coupled, and we solve the coupled system with a
damped fixed-point iteration instead of a series expansion.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

from .engine import SEC, US

MATHIS = math.sqrt(1.5)


class ModelDomainError(ValueError):
    """Parameters outside the model's domain."""


class SolverError(RuntimeError):
    def __init__(self, msg: str, last_w: float):
        super().__init__(msg)
        self.last_w = last_w


@dataclass(frozen=True)
class ModelParams:
    q: float
    mss: int = 4096
    t_s: int = 14 * US
    t_l: int = 28 * US
    ai: float = 1.0
    max_mdf: float = 0.5
    beta: float = 0.8
    target_base: int = 21 * US
    fs_range: int = 5_200_000
    fs_min_cwnd: float = 0.1
    fs_max_cwnd: float = 100.0

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ModelDomainError(f"q must be in (0, 1], got {self.q}")
        if not 0 < self.t_s < self.t_l:
            raise ModelDomainError("need 0 < T_s < T_l")
        if not 0 < self.max_mdf < 1:
            raise ModelDomainError("max_mdf must be in (0, 1)")
        if self.ai <= 0 or self.mss <= 0:
            raise ModelDomainError("ai and mss must be positive")

    @property
    def n(self) -> float:
        return 1.0 / self.q

    def with_q(self, q: float) -> "ModelParams":
        return ModelParams(q, self.mss, self.t_s, self.t_l, self.ai, self.max_mdf, self.beta,
                           self.target_base, self.fs_range, self.fs_min_cwnd, self.fs_max_cwnd)

    @property
    def unit_rate(self) -> float:
        """One MSS per short RTT, in bytes/s."""
        return self.mss * SEC / self.t_s


@dataclass(frozen=True)
class FastFlowParams:
    base_rtt: int = 12 * US
    alpha: float = 1.2
    bdp: float = 100e9 * 12e-6 / (8 * 4096)
    fd: float = 0.8
    # kept for the record; they enter only through A
    mi: float = 2.0
    md: float = 2.0
    fi: float = 0.25

    def __post_init__(self):
        if not 1 < self.alpha < 1.5:
            raise ModelDomainError("alpha must be in (1, 1.5)")
        if not 0 < self.gamma < 1:
            raise ModelDomainError("fd / BDP must be in (0, 1)")

    @property
    def target_rtt(self) -> float:
        return 1.5 * self.base_rtt

    @property
    def A(self) -> float:
        return (12 - 7 * self.alpha) / (4 * self.alpha)

    @property
    def gamma(self) -> float:
        return 1 - self.fd / self.bdp


def tcp_throughput(p: ModelParams) -> float:
    return p.unit_rate * MATHIS / math.sqrt(p.q)


@dataclass(frozen=True)
class BoundedRate:
    rate: float
    upper_bound: bool


def dctcp_throughput_upper(p: ModelParams, long_path_marked: bool = False) -> BoundedRate:
    """Unmarked long-path packets: same as TCP. Marked: the TCP value is only a bound."""
    return BoundedRate(tcp_throughput(p), bool(long_path_marked))


def swift_throughput(p: ModelParams) -> float:
    return p.unit_rate * math.sqrt((1 / p.max_mdf - 0.5) * p.ai) / math.sqrt(p.q)


def fastflow_window(q: float, f: FastFlowParams) -> float:
    g2 = f.gamma ** 2
    x = 2 * f.A / q
    return (-g2 + math.sqrt(g2 * (1 - x) + x)) / (1 - g2)


def fastflow_throughput(p: ModelParams, f: FastFlowParams | None = None) -> float:
    f = f or FastFlowParams()
    if p.t_l < 2 * f.target_rtt:
        raise ModelDomainError("FastFlow model needs T_l >= 2 * targetRTT")
    w = fastflow_window(p.q, f)
    t_avg = ((1 - p.q) * p.t_s + p.q * p.t_l) / SEC
    return f.A * p.mss / (p.q * (f.gamma + (1 - f.gamma) * w) * t_avg)


def flow_scaling(w: float, p: ModelParams) -> float:
    """Extra target delay in ps for a window of ``w`` packets."""
    lo, hi = 1 / math.sqrt(p.fs_min_cwnd), 1 / math.sqrt(p.fs_max_cwnd)
    v = p.fs_range * (1 / math.sqrt(max(w, 1e-12)) - hi) / (lo - hi)
    return min(max(v, 0.0), p.fs_range)


@dataclass(frozen=True)
class RRSwiftSolution:
    rate: float
    w_star: float
    target_star: float
    iterations: int
    md: float


def rr_swift_throughput_numeric(p: ModelParams, damping: float = 0.5, rel_tol: float = 1e-12,
                                max_iter: int = 10_000, use_flow_scaling: bool = True
                                ) -> RRSwiftSolution:
    """Solve the coupled window / target-delay system for reordering-resilient Swift.

    Each congested packet triggers one decrease whose size follows the delay
    overshoot of the long path, capped at ``max_mdf``. The sawtooth area
    (packets per cycle) must equal ``1/q``.
    """
    def target(w):
        return p.target_base + (flow_scaling(w, p) if use_flow_scaling else 0.0)

    def md_of(w):
        t = target(w)
        if p.t_l <= t:
            raise ModelDomainError("model needs T_l above the target delay")
        return min(p.beta * (p.t_l - t) / p.t_l, p.max_mdf)

    def w_of(md):
        return math.sqrt(p.ai / (p.q * md * (1 - md / 2)))

    w = w_of(p.max_mdf)
    for it in range(1, max_iter + 1):
        w_new = (1 - damping) * w + damping * w_of(md_of(w))
        if abs(w_new - w) < rel_tol * w_new:
            w = w_new
            md = md_of(w)
            return RRSwiftSolution(p.ai * p.unit_rate / (p.q * w * md), w, target(w), it, md)
        w = w_new
    raise SolverError(f"no convergence after {max_iter} iterations", w)


def area_residual(p: ModelParams, sol: RRSwiftSolution) -> float:
    """Relative mismatch between the sawtooth area and ``1/q``."""
    area = sol.w_star ** 2 * sol.md * (1 - sol.md / 2) / p.ai
    return abs(area * p.q - 1.0)


def sawtooth_oracle(ai_per_cwnd: float, decrease: float | Callable[[float], float] | None,
                    n: float | None, duration: float, extra_every: float | None = None,
                    extra_decrease: float | Callable[[float], float] | None = None,
                    w0: float = 1.0, warmup_events: int = 2) -> float:
    """Per-ACK discrete sawtooth; returns packets delivered per RTT.

    Each ACK adds ``ai_per_cwnd / w`` and advances time by ``1/w`` RTT. Every
    ``n``-th packet applies ``decrease`` (a factor or a function of ``w``).
    ``extra_every`` adds a second periodic decrease source. Measurement starts
    after ``warmup_events`` decreases, or at once if there are none.
    """
    def apply(rule, w):
        return rule(w) if callable(rule) else w * rule

    w = w0
    packets = 0
    t = 0.0
    start_pk, start_t = 0, 0.0
    events = 0
    next_ev = n if n else math.inf
    next_extra = extra_every if extra_every else math.inf
    measuring = warmup_events == 0 or not n
    count = 0
    while True:
        count += 1
        t += 1.0 / w
        packets += 1
        w += ai_per_cwnd / w
        fired = False
        if count >= next_ev:
            next_ev += n
            w = apply(decrease, w)
            fired = True
        if count >= next_extra:
            next_extra += extra_every
            w = apply(extra_decrease if extra_decrease is not None else decrease, w)
        w = max(w, 1e-9)
        if fired:
            events += 1
            if not measuring and events >= warmup_events:
                measuring = True
                start_pk, start_t = packets, t
        if measuring and t - start_t >= duration:
            break
    return (packets - start_pk) / (t - start_t)


def fig2_params(q: float) -> ModelParams:
    t_s = 14_400_000
    return ModelParams(q=q, t_s=t_s, t_l=int(2.5 * t_s), target_base=21 * US)


def fig2_fastflow() -> FastFlowParams:
    return FastFlowParams(base_rtt=12 * US, alpha=1.2)


FIG2_MODELS = ("tcp", "dctcp_upper", "swift", "fastflow", "rr_swift")


def fig2_rows(ns=range(2, 101)) -> list[tuple[int, float, str, float]]:
    ff = fig2_fastflow()
    rows = []
    for n in ns:
        p = fig2_params(1.0 / n)
        vals = {
            "tcp": tcp_throughput(p),
            "dctcp_upper": dctcp_throughput_upper(p).rate,
            "swift": swift_throughput(p),
            "fastflow": fastflow_throughput(p, ff),
            "rr_swift": rr_swift_throughput_numeric(p).rate,
        }
        for name in FIG2_MODELS:
            rows.append((n, p.q, name, vals[name] * 8 / 1e9))
    return rows


def write_fig2_csv(path, ns=range(2, 101)) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "q", "model", "throughput_gbps"])
        for n, q, name, gbps in fig2_rows(ns):
            w.writerow([n, f"{q:.6g}", name, f"{gbps:.6f}"])
