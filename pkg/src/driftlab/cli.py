"""Command-line entry point: ``driftlab {equilibrium,simulate,tune,replay}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bayesopt import KernelSettings, bo_minimize
from .config import ConfigError, RunConfig, load_config
from .dynamics import DriftState, state_derivative
from .equilibria import Direction, linearize, solve_equilibrium
from .harness import EpisodeConfig, EpisodeLog, objective_J, run_episode, summarize
from .planner import THETA_BOUNDS, ThetaParams

THETA_NAMES = ("c_lr", "c_rl", "dV_i", "k")


def _load(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_block(title: str, values: dict) -> None:
    print(f"[{title}]")
    for key, value in values.items():
        print(f"{key} = {value:.6g}" if isinstance(value, float) else f"{key} = {value}")


def cmd_equilibrium(args) -> int:
    cfg = _load(args).episode
    V = cfg.V_eq if args.V is None else args.V
    R = cfg.track.R_eq if args.R is None else args.R
    eq = solve_equilibrium(cfg.vehicle, V, R, Direction.parse(args.dir))
    res = state_derivative(DriftState(eq.V_eq, eq.beta_eq, eq.r_eq), eq.control, cfg.vehicle)
    A_c, _ = linearize(eq, cfg.vehicle, cfg.dt)
    eigs = np.linalg.eigvals(A_c[:3, :3])
    values = {
        "direction": eq.direction.name.lower(),
        "V": eq.V_eq,
        "beta": eq.beta_eq,
        "r": eq.r_eq,
        "delta": eq.delta_eq,
        "F_xr": eq.F_xr_eq,
        "residual": float(np.max(np.abs(res))),
        "max_real_eig": float(np.max(eigs.real)),
    }
    _print_block("equilibrium", values)
    if args.out:
        path = _out_dir(args) / "equilibrium.json"
        values["eigenvalues"] = [[float(z.real), float(z.imag)] for z in eigs]
        path.write_text(json.dumps(values, indent=2) + "\n", encoding="utf-8")
    return 0


def _theta_from_args(args, cfg: EpisodeConfig) -> ThetaParams:
    if args.theta is None:
        return cfg.theta
    parts = [float(v) for v in args.theta.split(",")]
    if len(parts) != 4:
        raise ValueError("--theta needs four comma-separated values c_lr,c_rl,dV_i,k")
    return ThetaParams.from_array(parts)


def cmd_simulate(args) -> int:
    cfg = _load(args).episode
    theta = _theta_from_args(args, cfg)
    start = time.perf_counter()
    log = run_episode(cfg, theta)
    elapsed = time.perf_counter() - start
    path = _out_dir(args) / "episode.csv"
    log.write(path)
    summary = summarize(log, cfg)
    summary["wall_time_s"] = elapsed
    _print_block("summary", summary)
    print(f"log = {path}")
    return 0


def cmd_tune(args) -> int:
    run = _load(args)
    cfg, tune = run.episode, run.tune
    seed = tune.seed if args.seed is None else args.seed
    iters = tune.iters if args.iters is None else args.iters
    hyper = KernelSettings(tune.lengthscale, tune.signal_std, tune.noise_std, tune.refit_every)

    def objective(x):
        return objective_J(run_episode(cfg, ThetaParams.from_array(x)), cfg)

    def progress(state):
        if not args.quiet:
            n = state.n_evaluations
            print(f"eval {n:4d}  J = {state.values[-1]:+.4f}  best = {state.incumbents[-1]:+.4f}", file=sys.stderr)

    state = bo_minimize(
        objective, THETA_BOUNDS, n_seeds=tune.seeds, n_iters=iters, seed=seed,
        hyper=hyper, active_limit=tune.active_limit, callback=progress,
    )  # fmt: skip
    out = _out_dir(args)
    (out / "trace.csv").write_text(state.trace_csv(THETA_NAMES), encoding="utf-8")
    best = ThetaParams.from_array(state.best_theta)
    lines = ["[theta]"] + [f"{name} = {getattr(best, name)!r}" for name in THETA_NAMES]
    (out / "best_theta.ini").write_text("\n".join(lines) + "\n", encoding="utf-8")
    seed_best = min(state.values[: tune.seeds])
    _print_block(
        "tune",
        {
            "evaluations": state.n_evaluations,
            "best_seed_J": seed_best,
            "best_J": state.best_value,
            **{name: float(getattr(best, name)) for name in THETA_NAMES},
        },
    )
    print(f"trace = {out / 'trace.csv'}")
    return 0


def cmd_replay(args) -> int:
    cfg = _load(args).episode
    log = EpisodeLog.read(args.log)
    _print_block("summary", summarize(log, cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key-value config file")
    common.add_argument("--seed", type=int, help="random seed for tuning")
    common.add_argument("--iters", type=int, help="BO iterations after the seed design")
    common.add_argument("--out", default=".", help="output directory")

    parser = argparse.ArgumentParser(prog="driftlab", description="Drift control on a figure-eight track.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", parents=[common], help="solve a sustained-drift equilibrium")
    p.add_argument("--V", type=float, help="speed [m/s]")
    p.add_argument("--R", type=float, help="radius [m]")
    p.add_argument("--dir", default="left", help="left or right")
    p.set_defaults(func=cmd_equilibrium, out=None)

    p = sub.add_parser("simulate", parents=[common], help="run one episode and write its log")
    p.add_argument("--theta", help="c_lr,c_rl,dV_i,k (overrides the config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", parents=[common], help="tune theta with Bayesian optimization")
    p.add_argument("--quiet", action="store_true", help="no per-evaluation progress")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("replay", parents=[common], help="recompute the summary of a stored log")
    p.add_argument("log", help="episode CSV written by simulate")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
