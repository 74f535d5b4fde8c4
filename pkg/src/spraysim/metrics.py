"""Per-flow records, FCT percentiles, CCDF, drop rates and CSV export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .engine import NS, SEC

FLOW_COLUMNS = ["seed", "flow_id", "src", "dst", "size", "start_ns", "end_ns", "fct_ns",
                "throughput_bps", "retx", "drops", "tracked", "cca", "kind"]
SUMMARY_COLUMNS = ["seed", "flows", "completed", "mean_throughput_bps", "fct_p99_ns",
                   "cca_drop_rate", "elephant_drop_rate", "rto_count"]


class MetricsError(ValueError):
    """Raised when a statistic is requested over an empty set."""


@dataclass
class FlowRecord:
    flow_id: int
    src: int
    dst: int
    size: int
    start: int
    end: int | None = None
    bytes_delivered: int = 0
    retransmissions: int = 0
    drops: int = 0
    sent: int = 0
    tracked: bool = False
    cca: str = ""
    kind: str = "cca"
    rto_count: int = 0

    @property
    def completed(self) -> bool:
        return self.end is not None

    @property
    def fct(self) -> int:
        return self.end - self.start

    @property
    def throughput(self) -> float:
        """Goodput in bits/s."""
        return self.bytes_delivered * 8 * SEC / self.fct


@dataclass
class RunSummary:
    seed: int
    flows: int
    completed: int
    mean_throughput: float
    fct_p99: int
    ccdf: list = field(repr=False)
    drop_rates: dict
    rto_count: int = 0
    fingerprint: str = ""


def _completed(records):
    done = [r for r in records if r.kind == "cca" and r.completed]
    if not done:
        raise MetricsError("no completed flows")
    return done


def percentile_fct(records, p: float) -> int:
    """Nearest-rank ``p``-th percentile of completed-flow FCTs."""
    fcts = sorted(r.fct for r in _completed(records))
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    rank = max(1, math.ceil(p / 100.0 * len(fcts)))
    return fcts[rank - 1]


def mean_throughput(records) -> float:
    done = _completed(records)
    return sum(r.throughput for r in done) / len(done)


def drop_rate(records, kind: str) -> float:
    sent = sum(r.sent for r in records if r.kind == kind)
    if sent == 0:
        return 0.0
    return sum(r.drops for r in records if r.kind == kind) / sent


def ccdf(records) -> list[tuple[int, float]]:
    """Points (fct, fraction of CCA flows with FCT > fct), starting at (0, 1).

    Unfinished flows never complete, so the curve ends at the unfinished
    fraction rather than 0.
    """
    cca = [r for r in records if r.kind == "cca"]
    total = len(cca)
    if total == 0:
        raise MetricsError("no flows")
    fcts = sorted(r.fct for r in cca if r.completed)
    points = [(0, 1.0)]
    n = len(fcts)
    for i, f in enumerate(fcts):
        if i + 1 < n and fcts[i + 1] == f:
            continue
        points.append((f, (total - (i + 1)) / total))
    return points


def summarize(records, seed: int = 0, fingerprint: str = "") -> RunSummary:
    cca = [r for r in records if r.kind == "cca"]
    return RunSummary(
        seed=seed,
        flows=len(cca),
        completed=sum(r.completed for r in cca),
        mean_throughput=mean_throughput(records),
        fct_p99=percentile_fct(records, 99),
        ccdf=ccdf(records),
        drop_rates={"cca": drop_rate(records, "cca"), "elephant": drop_rate(records, "elephant")},
        rto_count=sum(r.rto_count for r in cca),
        fingerprint=fingerprint,
    )


def pool(runs: dict[int, list[FlowRecord]]) -> list[FlowRecord]:
    """Pool flows across seeds in seed order, so input ordering never matters."""
    out: list[FlowRecord] = []
    for seed in sorted(runs):
        out.extend(runs[seed])
    return out


def flow_row(seed: int, r: FlowRecord) -> list:
    done = r.completed
    return [
        seed, r.flow_id, r.src, r.dst, r.size, r.start // NS,
        r.end // NS if done else "", r.fct // NS if done else "",
        f"{r.throughput:.1f}" if done and r.fct > 0 else "",
        r.retransmissions, r.drops, int(r.tracked), r.cca, r.kind,
    ]


def write_flows_csv(path, runs: dict[int, list[FlowRecord]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLOW_COLUMNS)
        for seed in sorted(runs):
            for r in runs[seed]:
                w.writerow(flow_row(seed, r))


def summary_row(s: RunSummary) -> list:
    return [s.seed, s.flows, s.completed, f"{s.mean_throughput:.1f}", s.fct_p99 // NS,
            f"{s.drop_rates['cca']:.6f}", f"{s.drop_rates['elephant']:.6f}", s.rto_count]


def write_summaries_csv(path, summaries: list[RunSummary], pooled: RunSummary | None = None
                        ) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in sorted(summaries, key=lambda s: s.seed):
            w.writerow(summary_row(s))
        if pooled is not None:
            row = summary_row(pooled)
            row[0] = "pooled"
            w.writerow(row)


def write_ccdf_csv(path, points: list[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fct_ns", "ccdf"])
        for fct, frac in points:
            w.writerow([fct // NS, f"{frac:.6f}"])
