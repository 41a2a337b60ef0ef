import numpy as np
import pytest

from driftlab.config import ConfigError, RunConfig, load_config, parse_config
from driftlab.planner import REFERENCE_THETA

FULL = """
[vehicle]
m = 2000          # kg
[track]
R_eq = 40
[mpc]
N_p = 10
N_c = 5
Q = 1, 2, 3, 4, 5
[episode]
V_eq = 18.5
T = 12
feedback_limit = none
[theta]
k = 0.3
[tune]
seeds = 6
iters = 2
seed = 9
"""


def test_defaults_when_empty():
    run = parse_config("")
    default = RunConfig()
    assert run.tune == default.tune
    assert run.episode.theta == REFERENCE_THETA
    assert run.episode.V_eq == default.episode.V_eq


def test_full_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(FULL)
    run = load_config(path)
    ep = run.episode
    assert ep.vehicle.m == 2000.0 and ep.track.R_eq == 40.0
    assert ep.mpc.N_p == 10 and ep.mpc.N_c == 5
    assert np.array_equal(np.diag(ep.mpc.Q), [1, 2, 3, 4, 5])
    assert ep.V_eq == 18.5 and ep.T == 12.0 and ep.feedback_limit is None
    assert ep.theta.k == 0.3 and ep.theta.c_lr == REFERENCE_THETA.c_lr
    assert (run.tune.seeds, run.tune.iters, run.tune.seed) == (6, 2, 9)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[mpc]\nN_p = abc\n", "line 2: [mpc] N_p: expected int"),
        ("[episode]\nV_eq = 19\nwheels = 4\n", "line 3: [episode] wheels: unknown key"),
        ("[mpc]\nQ = 1, x\n", "line 2: [mpc] Q"),
        ("[mpc]\nN_p = 5\nN_c = 6\n", "[mpc]"),
        ("[engine]\nhp = 300\n", "unknown section [engine]"),
        ("[track]\nR_eq = -3\n", "line 2: [track] R_eq"),
    ],
)
def test_errors_name_field_and_line(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, source="bad.ini")
    assert fragment in str(info.value)
    assert str(info.value).startswith("bad.ini") or "section" in str(info.value)


def test_episode_dt_reaches_controller():
    run = parse_config("[episode]\ndt = 0.04\n")
    assert run.episode.dt == run.episode.mpc.dt == 0.04
