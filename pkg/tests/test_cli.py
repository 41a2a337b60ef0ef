import json

import pytest

from driftlab.cli import main
from driftlab.harness import EpisodeLog, Status

SMALL_TUNE = "[tune]\nseeds = 3\niters = 1\nseed = 4\n"


def block_values(text):
    values = {}
    for line in text.splitlines():
        if " = " in line:
            key, value = line.split(" = ", 1)
            values[key.strip()] = value.strip()
    return values


def test_equilibrium_command(capsys, tmp_path):
    assert main(["equilibrium", "--V", "19.1", "--R", "44", "--out", str(tmp_path)]) == 0
    values = block_values(capsys.readouterr().out)
    assert float(values["residual"]) < 1e-8
    assert abs(abs(float(values["r"])) - 0.4341) < 1e-4
    data = json.loads((tmp_path / "equilibrium.json").read_text())
    assert len(data["eigenvalues"]) == 3


def test_equilibrium_right_mirrors(capsys):
    main(["equilibrium", "--dir", "left"])
    left = block_values(capsys.readouterr().out)
    main(["equilibrium", "--dir", "right"])
    right = block_values(capsys.readouterr().out)
    assert float(left["beta"]) == pytest.approx(-float(right["beta"]), abs=1e-12)
    assert left["F_xr"] == right["F_xr"]


def test_simulate_and_replay(capsys, tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 0
    sim = block_values(capsys.readouterr().out)
    log = EpisodeLog.read(tmp_path / "episode.csv")
    assert len(log) == 600 and log.status is Status.COMPLETED
    assert main(["replay", str(tmp_path / "episode.csv")]) == 0
    rep = block_values(capsys.readouterr().out)
    assert rep["J"] == sim["J"]


def test_tune_zero_iterations_only_seeds(capsys, tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL_TUNE)
    assert main(["tune", "--quiet", "--config", str(cfg), "--iters", "0", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0] == "iteration,c_lr,c_rl,dV_i,k,J,incumbent_J"
    assert len(rows) == 1 + 3
    assert (tmp_path / "best_theta.ini").read_text().startswith("[theta]")


def test_errors_are_one_line(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[mpc]\nN_p = abc\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:") and "\n" not in err and "line 2" in err
    assert main(["simulate", "--theta", "1,2", "--out", str(tmp_path)]) == 1
    assert main(["replay", str(tmp_path / "missing.csv")]) == 1
