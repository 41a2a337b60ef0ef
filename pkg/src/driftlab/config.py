"""Sectioned key-value configuration files.

Example (every key is optional; units in brackets)::

    [vehicle]
    m = 2030          # [kg]
    mu = 0.862        # [-]

    [track]
    R_eq = 44         # [m]

    [mpc]
    N_p = 20
    Q = 2, 50, 10, 1, 1e-7      # diagonal, SI units
    ddelta_th = 0.15  # [rad/step]

    [episode]
    V_eq = 19.1       # [m/s]
    T = 30            # [s]
    x_la = 10         # [m]
    feedback_limit = 0.1   # [rad], "none" disables the bound

    [theta]
    c_lr = 0.0273
    c_rl = 0.0215
    dV_i = 0.12       # [m/s]
    k = 0.21          # [rad/m]

    [tune]
    seeds = 20
    iters = 50
    seed = 0
    lengthscale = 0.2
    refit_every = 0
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import VehicleParams
from .harness import EpisodeConfig
from .mpc import MpcConfig
from .planner import REFERENCE_THETA, ThetaParams, Track8


class ConfigError(ValueError):
    pass


@dataclass
class TuneSettings:
    seeds: int = 20
    iters: int = 50
    seed: int = 0
    active_limit: int = 400
    lengthscale: float = 0.2
    signal_std: float = 1.0
    noise_std: float = 0.05
    refit_every: int = 0


@dataclass
class RunConfig:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    tune: TuneSettings = field(default_factory=TuneSettings)


_VEHICLE_KEYS = {f.name for f in dataclasses.fields(VehicleParams)}
_MPC_SCALARS = {"N_p": int, "N_c": int, "delta_th": float, "F_min": float, "F_max": float,
                "ddelta_th": float, "dF_th": float}  # fmt: skip
_MPC_DIAGONALS = {"Q", "R_w"}
_EPISODE_KEYS = {"V_eq": float, "dt": float, "T": float, "substeps": int, "lambda_1": float,
                 "lambda_2": float, "x_la": float, "seed": int, "spin_beta": float,
                 "spin_V": float, "feedback_limit": float}  # fmt: skip
_THETA_KEYS = {"c_lr", "c_rl", "dV_i", "k"}
_TUNE_KEYS = {f.name: f.type for f in dataclasses.fields(TuneSettings)}
_SECTIONS = {"vehicle", "track", "mpc", "episode", "theta", "tune"}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if header:
            current = header.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.IGNORECASE):
            return number
    return None


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (V_eq, R_eq, ...)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from exc

    def fail(section, key, reason):
        line = _line_of(text, section, key)
        where = f"line {line}" if line else "unknown line"
        raise ConfigError(f"{source}: {where}: [{section}] {key}: {reason}")

    def number(section, key, kind):
        raw = parser.get(section, key)
        try:
            return kind(float(raw)) if kind is int and float(raw).is_integer() else kind(raw)
        except ValueError:
            fail(section, key, f"expected {kind.__name__}, got {raw!r}")

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")

    def read(section, allowed):
        values = {}
        if not parser.has_section(section):
            return values
        for key in parser.options(section):
            if key not in allowed:
                fail(section, key, "unknown key")
            kind = allowed[key] if isinstance(allowed, dict) else float
            if isinstance(kind, str):  # dataclass field annotations are strings here
                kind = {"int": int, "float": float}[kind]
            if section == "episode" and key == "feedback_limit" and parser.get(section, key).lower() == "none":
                values[key] = None
            else:
                values[key] = number(section, key, kind)
        return values

    def build(section, factory, values):
        try:
            return factory(**values)
        except (TypeError, ValueError) as exc:
            key = next(iter(values), "?")
            fail(section, key, str(exc))

    vehicle = build("vehicle", VehicleParams, read("vehicle", _VEHICLE_KEYS))

    track_values = read("track", {"R_eq": float})
    if track_values.get("R_eq", 44.0) <= 0:
        fail("track", "R_eq", "must be positive")
    track = Track8.vertical(track_values.get("R_eq", 44.0))

    mpc_values = {}
    if parser.has_section("mpc"):
        for key in parser.options("mpc"):
            if key in _MPC_DIAGONALS:
                raw = parser.get("mpc", key)
                try:
                    mpc_values[key] = np.diag([float(v) for v in raw.split(",")])
                except ValueError:
                    fail("mpc", key, f"expected comma-separated numbers, got {raw!r}")
            elif key in _MPC_SCALARS:
                mpc_values[key] = number("mpc", key, _MPC_SCALARS[key])
            else:
                fail("mpc", key, "unknown key")
    episode_values = read("episode", _EPISODE_KEYS)
    if "dt" in episode_values:
        mpc_values.setdefault("dt", episode_values["dt"])
    mpc = build("mpc", MpcConfig, mpc_values)

    theta_values = read("theta", _THETA_KEYS)
    theta = dataclasses.replace(REFERENCE_THETA, **theta_values)
    episode = build(
        "episode",
        lambda **kw: EpisodeConfig(vehicle=vehicle, track=track, mpc=mpc, theta=theta, **kw),
        episode_values,
    )
    tune = build("tune", TuneSettings, read("tune", _TUNE_KEYS))
    return RunConfig(episode, tune)
