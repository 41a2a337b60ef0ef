"""Learning-tuned inertia drift control on a figure-eight track."""

from .dynamics import ControlInput, DriftState, Pose, VehicleParams, step
from .equilibria import Direction, Equilibrium, linear_model, mirror, solve_equilibrium
from .harness import EpisodeConfig, EpisodeLog, Status, objective_J, run_episode
from .mpc import MpcConfig, MpcController
from .planner import REFERENCE_THETA, THETA_BOUNDS, ThetaParams, Track8

__all__ = [
    "ControlInput", "Direction", "DriftState", "EpisodeConfig", "EpisodeLog", "Equilibrium",
    "MpcConfig", "MpcController", "REFERENCE_THETA", "Pose", "Status", "THETA_BOUNDS", "ThetaParams",
    "Track8", "VehicleParams", "linear_model", "mirror", "objective_J", "run_episode",
    "solve_equilibrium", "step",
]  # fmt: skip
