"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 acceptance check failure (``verify`` only).
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, ExperimentConfig, load
from .engine import NS
from .experiments import (
    SWEEP_AXES, apply_axis, model_compare, run_set, summaries,
)
from .metrics import (
    SUMMARY_COLUMNS, ccdf, pool, summary_row, write_ccdf_csv, write_flows_csv,
    write_summaries_csv,
)
from .models import write_fig2_csv

EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 1, 2, 3


class _Fail(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _load(path, seed_base, output) -> ExperimentConfig:
    try:
        cfg = load(path)
        if seed_base is not None:
            cfg.seed_base = seed_base
        if output is not None:
            cfg.output_dir = str(output)
        cfg.validate()
        return cfg
    except (ConfigError, OSError) as exc:
        raise _Fail(f"config error: {exc}", EXIT_CONFIG) from exc


def _guard(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError as exc:
        raise _Fail(f"config error: {exc}", EXIT_CONFIG) from exc
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        raise _Fail(f"runtime error: {type(exc).__name__}: {exc}", EXIT_RUNTIME) from exc


def _write_manifest(out: Path, cfg: ExperimentConfig, runs, extra=None) -> None:
    manifest = {
        "version": __version__,
        "config": cfg.effective(),
        "seeds": [r.seed for r in runs],
        "scenarios": [cfg.build_scenario(r.seed).manifest() for r in runs],
        "runs": [
            {"seed": r.seed, "events": r.result.events_processed,
             "final_time_ps": r.result.final_time, "injected": r.result.injected,
             "delivered": r.result.delivered, "dropped": r.result.dropped,
             "in_flight": r.result.in_flight, "conserved": r.result.conserved}
            for r in runs
        ],
    }
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _write_timeseries(path: Path, runs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "flow_id", "time_ns", "cwnd", "latest_delay_ns",
                    "effective_delay_ns", "target_ns"])
        for r in runs:
            for fid in sorted(r.result.timeseries):
                for now, cwnd, latest, eff, target in r.result.timeseries[fid]:
                    w.writerow([r.seed, fid, now // NS, f"{cwnd:.4f}", latest // NS,
                                f"{eff / NS:.1f}", f"{target / NS:.1f}"])


@click.group()
@click.version_option(__version__)
def main():
    """Packet-spraying datacenter simulator and throughput models."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("-o", "--output", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed-base", type=int, help="First seed (overrides the config).")
@click.option("--jobs", default=1, show_default=True, help="Parallel runs.")
@click.option("--trace", is_flag=True, help="Write a per-seed event trace.")
@click.option("--timeseries", is_flag=True, help="Write cwnd/delay samples of tracked flows.")
def run(config, output, seed_base, jobs, trace, timeseries):
    """Run every seed of CONFIG and write flows, summaries, CCDF and manifest."""
    cfg = _load(config, seed_base, output)
    runs = _guard(run_set, cfg, jobs, trace, timeseries)
    per, pooled = _guard(summaries, runs)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_flows_csv(out / "flows.csv", {r.seed: r.records for r in runs})
    write_summaries_csv(out / "summaries.csv", per, pooled)
    write_ccdf_csv(out / "ccdf.csv", ccdf(pool({r.seed: r.records for r in runs})))
    if trace:
        for r in runs:
            (out / f"trace_seed{r.seed}.csv").write_text(r.trace)
    if timeseries:
        _write_timeseries(out / "timeseries.csv", runs)
    _write_manifest(out, cfg, runs)
    bad = [r.seed for r in runs if not r.result.conserved or r.result.hop_violations]
    if bad:
        raise _Fail(f"runtime error: invariant violated for seeds {bad}", EXIT_RUNTIME)
    click.echo(f"{len(runs)} runs -> {out}  pooled p99 FCT {pooled.fct_p99 // NS} ns, "
               f"mean throughput {pooled.mean_throughput / 1e9:.3f} Gbps")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--axis", required=True, type=click.Choice(SWEEP_AXES))
@click.option("--values", required=True, help="Comma-separated axis values.")
@click.option("-o", "--output", type=click.Path(file_okay=False))
@click.option("--seed-base", type=int)
@click.option("--jobs", default=1, show_default=True)
def sweep(config, axis, values, output, seed_base, jobs):
    """One run set per axis value; writes sweep_<axis>.csv."""
    cfg = _load(config, seed_base, output)
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise _Fail("config error: empty value list", EXIT_CONFIG)
    configs = [(v, _guard(apply_axis, cfg, axis, v)) for v in vals]
    out = Path(cfg.output_dir)
    rows = []
    for v, c in configs:
        per, pooled = _guard(lambda c=c: summaries(run_set(c, jobs)))
        for s in per:
            rows.append([v] + summary_row(s))
        rows.append([v, "pooled"] + summary_row(pooled)[1:])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{axis}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([axis] + SUMMARY_COLUMNS)
        w.writerows(rows)
    click.echo(f"{len(vals)} values -> {out / f'sweep_{axis}.csv'}")


@main.command("model-compare")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--radix", "radices", multiple=True, type=int,
              help="Radix to include (repeatable); default: the config's radix.")
@click.option("-o", "--output", type=click.Path(file_okay=False))
@click.option("--seed-base", type=int)
@click.option("--jobs", default=1, show_default=True)
def model_compare_cmd(config, radices, output, seed_base, jobs):
    """Simulated vs modelled throughput of one sprayed flow, per radix."""
    cfg = _load(config, seed_base, output)
    rows = _guard(model_compare, cfg, radices or (cfg.scenario.radix_k,), jobs)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "model_compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["radix_k", "n", "q", "sim_gbps", "model_gbps", "rel_error"])
        for r in rows:
            w.writerow([r.radix_k, r.n, f"{r.q:.6g}", f"{r.sim_bps / 1e9:.4f}",
                        f"{r.model_bps / 1e9:.4f}", f"{r.rel_error:+.4f}"])
            click.echo(f"k={r.radix_k:3d} n={r.n:4d} sim {r.sim_bps / 1e9:7.3f} Gbps  "
                       f"model {r.model_bps / 1e9:7.3f} Gbps  err {r.rel_error:+.1%}")


@main.command()
@click.option("-o", "--output", default="curves.csv", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--n-max", default=100, show_default=True)
def curves(output, n_max):
    """Model throughput against path count n, one row per (n, model)."""
    if n_max < 2:
        raise _Fail("config error: --n-max must be >= 2", EXIT_CONFIG)
    _guard(write_fig2_csv, output, range(2, n_max + 1))
    click.echo(f"curves -> {output}")


@main.command()
@click.option("--quick", is_flag=True, help="Skip the slow scenario checks.")
def verify(quick):
    """Run the acceptance checks; exit 3 if any fails."""
    from .acceptance import run_checks

    results = run_checks(quick=quick, echo=click.echo)
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        sys.exit(EXIT_ACCEPTANCE)

