"""Sustained-drift equilibria and their linear discrete-time models.

Convention: a left-handed drift turns counter-clockwise (``r_eq > 0``) with
``beta_eq < 0`` and a counter-steered ``delta_eq < 0``; the right-handed
equilibrium is its mirror image.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlInput, DriftState, VehicleParams, state_derivative, vertical_loads

STATE_DIM = 5
INPUT_DIM = 2
DRIFT_BETA_MIN = 0.1  # [rad] below this the root is the grip-driving one


class Direction(enum.Enum):
    LEFT = 1
    RIGHT = -1

    @property
    def sign(self) -> int:
        return self.value

    def flipped(self) -> "Direction":
        return Direction.RIGHT if self is Direction.LEFT else Direction.LEFT

    @classmethod
    def parse(cls, text: str) -> "Direction":
        key = text.strip().lower()
        if key in ("left", "l", "lefthanded", "left-handed"):
            return cls.LEFT
        if key in ("right", "r", "righthanded", "right-handed"):
            return cls.RIGHT
        raise ValueError(f"unknown turn direction {text!r} (expected 'left' or 'right')")


class NoConvergence(RuntimeError):
    pass


class NonDriftBranch(RuntimeError):
    pass


@dataclass(frozen=True)
class Equilibrium:
    V_eq: float
    beta_eq: float
    r_eq: float
    delta_eq: float
    F_xr_eq: float
    direction: Direction
    R_eq: float

    @property
    def state(self) -> DriftState:
        return DriftState(self.V_eq, self.beta_eq, self.r_eq)

    @property
    def control(self) -> ControlInput:
        return ControlInput(self.delta_eq, self.F_xr_eq)

    def as_array(self) -> np.ndarray:
        """Augmented vector ``[V, beta, r, delta, F_xr]``."""
        return np.array([self.V_eq, self.beta_eq, self.r_eq, self.delta_eq, self.F_xr_eq])


@dataclass(frozen=True)
class LinearModel:
    A_d: np.ndarray
    B_d: np.ndarray
    dt: float
    origin: Equilibrium | None = None


def _residual(params, V, r, unknowns):
    beta, delta, F_kN = unknowns
    return np.array(
        state_derivative(DriftState(V, beta, r), ControlInput(delta, 1e3 * F_kN), params)
    )


def solve_equilibrium(
    params: VehicleParams,
    V_target: float,
    R_target: float,
    direction: Direction,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> Equilibrium:
    """Solve ``dV = dbeta = dr = 0`` for ``(beta, delta, F_xr)`` at fixed speed and radius.

    The yaw rate is fixed to ``sign * V_target / R_target``.  A damped Newton
    iteration with a central-difference Jacobian is started from a
    counter-steered seed so that it lands on the high-sideslip drift root.
    """
    if not (V_target > 0.0 and R_target > 0.0):
        raise ValueError("V_target and R_target must be positive")
    s = direction.sign
    r = s * V_target / R_target
    _, F_zr = vertical_loads(params)
    # force is carried in kN so the three unknowns have comparable scale
    x = np.array([-s * 0.4, -s * 0.27, 0.3 * F_zr / 1e3])
    res = _residual(params, V_target, r, x)
    norm = np.max(np.abs(res))
    for _ in range(max_iter):
        if norm < tol:
            break
        jac = np.empty((3, 3))
        for j in range(3):
            h = np.zeros(3)
            h[j] = 1e-7
            jac[:, j] = (_residual(params, V_target, r, x + h) - _residual(params, V_target, r, x - h)) / 2e-7
        try:
            dx = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Jacobian at {x}") from exc
        t = 1.0
        while t > 1e-4:
            trial = x + t * dx
            if abs(trial[0]) < 0.5 * math.pi:
                trial_res = _residual(params, V_target, r, trial)
                trial_norm = np.max(np.abs(trial_res))
                if trial_norm < norm:
                    break
            t *= 0.5
        else:
            raise NoConvergence(f"line search stalled at residual {norm:.3e}")
        x, res, norm = trial, trial_res, trial_norm
    else:
        raise NoConvergence(f"no convergence after {max_iter} iterations (residual {norm:.3e})")
    if norm >= tol:
        raise NoConvergence(f"residual {norm:.3e} above tolerance")
    beta, delta, F_kN = x
    if abs(beta) < DRIFT_BETA_MIN:
        raise NonDriftBranch(f"converged to |beta| = {abs(beta):.4f} rad, the grip-driving root")
    return Equilibrium(V_target, float(beta), r, float(delta), float(1e3 * F_kN), direction, R_target)


def mirror(eq: Equilibrium) -> Equilibrium:
    """Reflect an equilibrium to the opposite turn direction."""
    return Equilibrium(
        eq.V_eq, -eq.beta_eq, -eq.r_eq, -eq.delta_eq, eq.F_xr_eq, eq.direction.flipped(), eq.R_eq
    )


def augmented_rhs(xi: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Drift dynamics extended with constant steering and force states."""
    V, beta, r, delta, F_xr = xi
    dV, dbeta, dr = state_derivative(DriftState(V, beta, r), ControlInput(delta, F_xr), params)
    return np.array([dV, dbeta, dr, 0.0, 0.0])


def linearize(
    eq: Equilibrium, params: VehicleParams, dt: float = 0.05, step: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous Jacobians ``(A_c, B_c)`` of the augmented model at ``eq``.

    The decision variable is the per-sample increment of ``(delta, F_xr)``,
    so the input rows of ``B_c`` are ``I / dt`` and a forward-Euler step turns
    them into the identity.
    """
    xi0 = eq.as_array()
    A_c = np.zeros((STATE_DIM, STATE_DIM))
    for j in range(STATE_DIM):
        h = np.zeros(STATE_DIM)
        h[j] = step
        A_c[:, j] = (augmented_rhs(xi0 + h, params) - augmented_rhs(xi0 - h, params)) / (2.0 * step)
    B_c = np.zeros((STATE_DIM, INPUT_DIM))
    B_c[3:, :] = np.eye(INPUT_DIM) / dt
    return A_c, B_c


def discretize(A_c: np.ndarray, B_c: np.ndarray, dt: float, origin: Equilibrium | None = None) -> LinearModel:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    n = A_c.shape[0]
    return LinearModel(np.eye(n) + dt * A_c, dt * B_c, dt, origin)


def linear_model(eq: Equilibrium, params: VehicleParams, dt: float) -> LinearModel:
    A_c, B_c = linearize(eq, params, dt)
    return discretize(A_c, B_c, dt, eq)
