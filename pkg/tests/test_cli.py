import csv
import io
import os
import subprocess
import sys

import numpy as np
import pytest

from cavityobs import cli
from cavityobs.config import RunConfig, loads_config
from cavityobs.harness import Scenario

QUIET = """
detuning.bias_range = 0
detuning.n_sinusoids = 0, 0
detuning.sinusoid_amp_range = 0, 0
detuning.wander_std = 0
detuning.thermal_amp = 0
phase_fwd.init_range = 0
phase_fwd.walk_std = 0
phase_fwd.periodic_amp = 0
phase_rec.init_range = 0
phase_rec.walk_std = 0
phase_rec.periodic_amp = 0
disturbance.init_range = 0
disturbance.walk_std = 0
disturbance.periodic_amp = 0
noise.sigma = 0
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return meta, rows


def _tree(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as fh:
            out[name] = fh.read()
    return out


def test_quiet_text_matches_quiet_scenario():
    assert loads_config(QUIET).echo() == RunConfig(scenario=Scenario.quiet()).echo()


def test_simulate_quiet_trace(tmp_path):
    cfg = _write(tmp_path, QUIET)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", cfg, "--seed", "3", "--out-dir", str(out)]) == 0
    for variant in ("proposed", "standard"):
        path = out / f"trace_{variant}_seed3.csv"
        with open(path, encoding="utf-8") as fh:
            assert fh.readline() == "# schema: cavityobs-trace/1\n"
        meta, rows = _read_csv(path)
        assert meta["seed"] == "3" and meta["variant"] == variant
        assert meta["config_sha256"] == loads_config(QUIET).config_hash()
        assert len(rows) == 1000
        assert tuple(rows[0]) == cli.TRACE_COLUMNS
        flattop = [float(r["track_err"]) for r in rows if r["in_flattop"] == "1"]
        assert flattop and max(flattop) < 1e-9
    first = _tree(out)
    assert cli.main(["simulate", "--config", cfg, "--seed", "3", "--out-dir", str(out)]) == 0
    assert _tree(out) == first


def test_mc_outputs(tmp_path, capsys):
    out = tmp_path / "mc"
    assert cli.main(["mc", "--trials", "6", "--seed", "5", "--out-dir", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["curves_proposed.csv", "curves_standard.csv", "manifest.txt",
                                       "scores_proposed.csv", "scores_standard.csv"]
    for variant in ("proposed", "standard"):
        meta, rows = _read_csv(out / f"curves_{variant}.csv")
        assert meta["schema"] == "cavityobs-curves/1" and meta["trials"] == "6"
        lik = np.array([float(r["likelihood"]) for r in rows])
        assert lik.min() >= 0.0 and lik.max() <= 1.0
        assert len(rows) == 2 * 5 * 41
        meta, rows = _read_csv(out / f"scores_{variant}.csv")
        assert len(rows) == 2 * 6
    manifest = (out / "manifest.txt").read_text().splitlines()
    assert manifest[0] == "schema = cavityobs-manifest/1"
    assert f"config_sha256 = {loads_config('mc.trials = 6').config_hash()}" in manifest
    assert "seed = 5" in manifest and "proposed.aborted = 0" in manifest
    assert any(line.startswith("config.cavity.ts = ") for line in manifest)
    assert "mid-grid likelihood" in capsys.readouterr().out


def test_single_trial_curves_are_steps(tmp_path):
    out = tmp_path / "one"
    assert cli.main(["mc", "--trials", "1", "--variant", "proposed", "--out-dir", str(out)]) == 0
    _, rows = _read_csv(out / "curves_proposed.csv")
    assert {r["likelihood"] for r in rows} <= {"0", "1"}
    for metric in ("amplitude", "phase", "fwd", "rec", "detuning"):
        lik = [float(r["likelihood"]) for r in rows if r["metric"] == metric and r["window"] == "flattop"]
        assert lik == sorted(lik, reverse=True)


def test_mc_deterministic_across_runs_and_workers(tmp_path):
    args = ["mc", "--trials", "8", "--seed", "11"]
    assert cli.main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    assert cli.main(args + ["--out-dir", str(tmp_path / "c"), "--workers", "4"]) == 0
    a = _tree(tmp_path / "a")
    assert a == _tree(tmp_path / "b") == _tree(tmp_path / "c")


def test_seed_changes_results(tmp_path):
    assert cli.main(["mc", "--trials", "4", "--seed", "1", "--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["mc", "--trials", "4", "--seed", "2", "--out-dir", str(tmp_path / "b")]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a["scores_proposed.csv"] != b["scores_proposed.csv"]


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "cavity.ts = 0\n")
    assert cli.main(["validate", "--config", cfg]) == cli.EXIT_CONFIG
    assert "ts" in capsys.readouterr().err
    assert cli.main(["validate", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG


def test_validate_exit_codes(capsys):
    assert cli.main(["validate"]) == cli.EXIT_OK
    assert "5/5 properties passed" in capsys.readouterr().out
    assert cli.main(["validate", "--flip-descent-sign"]) == cli.EXIT_PROPERTY
    out = capsys.readouterr().out
    assert "FAIL  detuning_descent_sign" in out


def test_abort_exit_code(tmp_path):
    cfg = _write(tmp_path, "proposed.alpha_x = 4\n")
    out = tmp_path / "ab"
    code = cli.main(["mc", "--config", cfg, "--trials", "3", "--variant", "proposed", "--out-dir", str(out)])
    assert code == cli.EXIT_ABORTS
    manifest = (out / "manifest.txt").read_text()
    assert "proposed.aborted = 3" in manifest and "proposed.aborted_trials = 0, 1, 2" in manifest


def test_unwritable_output_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--out-dir", str(blocker / "sub")]) == cli.EXIT_IO


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cavityobs.cli", "--version"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "cavityobs" in proc.stdout
