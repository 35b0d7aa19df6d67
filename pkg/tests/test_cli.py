import json
import os
import shutil
import subprocess
import sys

import pytest

from apdsim.cli import main

TOY_TOML = """\
[problem]
n = 2
z_mean = [1.0, 3.0]
noise_sd = 0.5
capacity = 1.0
box_lo = [0.0, 0.0]
box_hi = [2.0, 4.0]
lambda_max = 2.0
upsilon = 0.5

[schedule]
compute_ticks = [1, 1]
upload_delay = 1

[stepsize]
kind = "constant"
gamma = 0.2

[run]
horizon = 60
seed_count = 2
checkpoint_stride = 10
"""


@pytest.fixture()
def toy_toml(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(TOY_TOML)
    return path


def test_run_writes_artifacts(toy_toml, tmp_path, capsys):
    out = tmp_path / "results"
    rc = main(["run", "--config", str(toy_toml), "--out", str(out)])
    assert rc == 0
    for name in ("traces.csv", "summary.csv", "bound.csv", "manifest.json"):
        assert (out / name).exists()
    assert "time-to-threshold" in capsys.readouterr().out


def test_run_backend_flag(toy_toml, tmp_path):
    rc = main(["run", "--config", str(toy_toml), "--out",
               str(tmp_path / "o"), "--backend", "py"])
    assert rc == 0


def test_run_seed_and_stride_overrides(toy_toml, tmp_path):
    out = tmp_path / "o"
    rc = main(["run", "--config", str(toy_toml), "--out", str(out),
               "--seeds", "3", "--checkpoint-stride", "30"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["seeds"]) == 3
    assert manifest["config"]["checkpoint_stride"] == 30


def test_bad_config_lists_every_field(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(TOY_TOML.replace("n = 2", "n = 0")
                    .replace("gamma = 0.2", "gamma = -1.0")
                    .replace("horizon = 60", "horizon = 0"))
    rc = main(["run", "--config", str(path)])
    assert rc == 2
    err = capsys.readouterr().err
    for frag in ("invalid config", "problem.n", "stepsize.gamma", "run.horizon"):
        assert frag in err


def test_missing_config_file(tmp_path, capsys):
    rc = main(["oracle", "--config", str(tmp_path / "nope.toml")])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_oracle_prints_saddle(toy_toml, capsys):
    rc = main(["oracle", "--config", str(toy_toml)])
    assert rc == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0].split() == ["lambda*", "1.333333333333333"]
    assert lines[1].split() == ["theta*_1", "0.66666666666666674"]
    assert lines[2].split() == ["theta*_2", "2.666666666666667"]
    assert any(l.startswith("g(mean)") for l in lines)
    assert any(l.startswith("residual") for l in lines)


def test_validate_clean_schedule(toy_toml, capsys):
    rc = main(["validate", "--config", str(toy_toml)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "window length        3" in out
    assert "uniform activations  1" in out
    assert "step-size sup condition:   ok" in out
    assert "VIOLATION" not in out


def test_validate_flags_halted_worker(tmp_path, capsys):
    path = tmp_path / "halted.toml"
    path.write_text(TOY_TOML.replace("upload_delay = 1",
                                     "upload_delay = 1\nhalt_after = [6, -1]"))
    rc = main(["validate", "--config", str(path)])
    assert rc == 1
    assert "VIOLATION: worker 0 is inactive" in capsys.readouterr().out


def test_bound_success(toy_toml, tmp_path, capsys):
    out = tmp_path / "b"
    rc = main(["bound", "--config", str(toy_toml), "--out", str(out)])
    assert rc == 0
    assert (out / "bound.csv").exists()
    stdout = capsys.readouterr().out
    for label in ("C1", "C2", "C3", "C4", "C_total"):
        row = [l for l in stdout.splitlines() if l.startswith(label + " ")]
        assert row and float(row[0].split()[1]) > 0


def test_bound_refused_when_conditions_fail(tmp_path, capsys):
    path = tmp_path / "decay.toml"
    path.write_text(TOY_TOML.replace(
        'kind = "constant"\ngamma = 0.2',
        'kind = "inverse"\na0 = 10.0\na1 = 100.0'))
    rc = main(["bound", "--config", str(path), "--out", str(tmp_path / "b")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "not applicable" in err
    assert "ratio condition" in err
    assert not (tmp_path / "b" / "bound.csv").exists()


def test_out_dir_env_fallback(toy_toml, tmp_path, monkeypatch):
    env_dir = tmp_path / "from-env"
    monkeypatch.setenv("APDSIM_OUT", str(env_dir))
    rc = main(["run", "--config", str(toy_toml)])
    assert rc == 0
    assert (env_dir / "traces.csv").exists()


def test_out_flag_beats_env(toy_toml, tmp_path, monkeypatch):
    env_dir = tmp_path / "from-env"
    flag_dir = tmp_path / "from-flag"
    monkeypatch.setenv("APDSIM_OUT", str(env_dir))
    rc = main(["run", "--config", str(toy_toml), "--out", str(flag_dir)])
    assert rc == 0
    assert (flag_dir / "traces.csv").exists()
    assert not env_dir.exists()


def test_scenario_with_overrides(tmp_path, capsys):
    out = tmp_path / "fig2"
    rc = main(["scenario", "fig2", "--out", str(out), "--seeds", "2",
               "--checkpoint-stride", "2000"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["compute_ticks"] == [4, 4, 3, 2, 1]
    assert manifest["config"]["horizon"] == 20000
    assert len(manifest["seeds"]) == 2
    assert manifest["saddle"]["lambda"] == 10.0
    # the decaying rule violates the window ratio condition on this
    # schedule, so no bound curve is claimed
    assert manifest["bound"]["applicable"] is False


def test_module_entry_point(toy_toml):
    proc = subprocess.run([sys.executable, "-m", "apdsim", "oracle",
                           "--config", str(toy_toml)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("lambda*")


@pytest.mark.skipif(shutil.which("apdsim") is None,
                    reason="console script not on PATH")
def test_console_script(toy_toml):
    proc = subprocess.run(["apdsim", "oracle", "--config", str(toy_toml)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("lambda*")
