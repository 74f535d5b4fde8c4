import csv
import json

import pytest
from click.testing import CliRunner

from spraysim import acceptance
from spraysim.acceptance import CheckResult
from spraysim.cli import main

SMOKE = """
scenario: {kind: permutation, radix_k: 4, flow_size: 1000000, elephant_count: 1}
topology: {queue_capacity: 175000}
cca: {name: mswift, history: {kind: bounded_window}}
runs: 2
"""

MV = """
scenario: {kind: model_verification, radix_k: 4, flow_size: 300000}
routing: {variant: round_robin}
runs: 3
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_outputs(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE)
    out = tmp_path / "o"
    r = runner.invoke(main, ["run", cfg, "-o", str(out), "--trace", "--timeseries"])
    assert r.exit_code == 0, r.output
    for name in ("flows.csv", "summaries.csv", "ccdf.csv", "manifest.json", "timeseries.csv",
                 "trace_seed0.csv", "trace_seed1.csv"):
        assert (out / name).exists()
    m = json.loads((out / "manifest.json").read_text())
    assert m["seeds"] == [0, 1] and all(run["conserved"] for run in m["runs"])
    assert m["config"]["effective_swift"]["max_mdf"] == 0.5
    rows = list(csv.DictReader(open(out / "flows.csv")))
    assert len(rows) == 2 * 16


def test_repeated_runs_are_byte_identical(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE)
    out = tmp_path / "o"
    names = ("flows.csv", "summaries.csv", "ccdf.csv", "manifest.json")
    snaps = []
    for _ in range(2):
        assert runner.invoke(main, ["run", cfg, "-o", str(out)]).exit_code == 0
        snaps.append({n: (out / n).read_bytes() for n in names})
    assert snaps[0] == snaps[1]


def test_jobs_do_not_change_output(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE)
    assert runner.invoke(main, ["run", cfg, "-o", str(tmp_path / "a")]).exit_code == 0
    assert runner.invoke(main, ["run", cfg, "-o", str(tmp_path / "b"), "--jobs", "2"]).exit_code == 0
    assert (tmp_path / "a" / "flows.csv").read_bytes() == (tmp_path / "b" / "flows.csv").read_bytes()


def test_seed_base_override(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE)
    r = runner.invoke(main, ["run", cfg, "-o", str(tmp_path / "o"), "--seed-base", "5"])
    assert r.exit_code == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seeds"] == [5, 6]


def test_missing_field_exits_1_without_output(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", "scenario: {kind: permutation}\n")
    out = tmp_path / "o"
    r = runner.invoke(main, ["run", cfg, "-o", str(out)])
    assert r.exit_code == 1 and "config error" in r.output
    assert not out.exists()


def test_missing_file_exits_1(runner, tmp_path):
    assert runner.invoke(main, ["run", str(tmp_path / "none.yaml")]).exit_code == 1


def test_sweep(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE.replace("runs: 2", "runs: 1"))
    out = tmp_path / "s"
    r = runner.invoke(main, ["sweep", cfg, "--axis", "K", "--values", "3,10", "-o", str(out)])
    assert r.exit_code == 0, r.output
    rows = list(csv.reader(open(out / "sweep_K.csv")))
    assert rows[0][0] == "K" and [row[0] for row in rows[1:]] == ["3", "3", "10", "10"]
    assert rows[2][1] == "pooled"


@pytest.mark.parametrize("args", [
    ["--axis", "K", "--values", ","],
    ["--axis", "elephant_count", "--values", "1"],  # config is incast
    ["--axis", "history_size", "--values", "5"],  # cca is swift
])
def test_sweep_errors(runner, tmp_path, args):
    cfg = write(tmp_path, "c.yaml", "scenario: {kind: incast, radix_k: 4, fan_in: 2}\nruns: 1\n")
    r = runner.invoke(main, ["sweep", cfg, "-o", str(tmp_path / "s")] + args)
    assert r.exit_code == 1


def test_model_compare(runner, tmp_path):
    cfg = write(tmp_path, "mv.yaml", MV)
    out = tmp_path / "m"
    r = runner.invoke(main, ["model-compare", cfg, "--radix", "4", "--radix", "6", "-o", str(out)])
    assert r.exit_code == 0, r.output
    rows = list(csv.DictReader(open(out / "model_compare.csv")))
    assert [int(x["n"]) for x in rows] == [4, 9]
    assert all(abs(float(x["rel_error"])) < 0.5 for x in rows)


def test_model_compare_needs_model_scenario(runner, tmp_path):
    cfg = write(tmp_path, "c.yaml", SMOKE)
    assert runner.invoke(main, ["model-compare", cfg, "-o", str(tmp_path / "m")]).exit_code == 1


def test_curves(runner, tmp_path):
    out = tmp_path / "curves.csv"
    r = runner.invoke(main, ["curves", "-o", str(out), "--n-max", "20"])
    assert r.exit_code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 19 * 5
    assert runner.invoke(main, ["curves", "-o", str(out), "--n-max", "1"]).exit_code == 1


def test_verify_exit_codes(runner, monkeypatch):
    monkeypatch.setattr(acceptance, "CHECKS", [lambda: CheckResult(1, "ok", True, "")])
    monkeypatch.setattr(acceptance, "QUICK", {1})
    r = runner.invoke(main, ["verify", "--quick"])
    assert r.exit_code == 0 and "[PASS]" in r.output
    monkeypatch.setattr(acceptance, "CHECKS", [lambda: CheckResult(1, "bad", False, "x")])
    assert runner.invoke(main, ["verify", "--quick"]).exit_code == 3


def test_runtime_error_exit_code(runner, tmp_path, monkeypatch):
    import spraysim.cli as cli

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli, "run_set", boom)
    cfg = write(tmp_path, "c.yaml", SMOKE)
    r = runner.invoke(main, ["run", cfg, "-o", str(tmp_path / "o")])
    assert r.exit_code == 2 and "kaput" in r.output


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "spraysim", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "model-compare" in out.stdout
