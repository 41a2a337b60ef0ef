"""Three-state drift vehicle model with a simplified Pacejka lateral tire.

States are the speed at the centre of gravity ``V``, the sideslip angle
``beta`` and the yaw rate ``r``.  Inputs are the front steering angle and the
rear longitudinal tire force (rear-wheel drive, no front drive force).  The
world-frame pose is propagated along the course angle ``psi + beta``.

Sign convention: ``r > 0`` and ``delta > 0`` turn the vehicle to the left
(counter-clockwise seen from above).  A left-hand drift therefore has
``r > 0``, ``beta < 0`` and a counter-steered ``delta < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

V_MIN = 0.1  # [m/s] below this the model is singular (division by m*V)


class DegenerateState(ValueError):
    """Raised when the model is evaluated where it is not defined."""


@dataclass(frozen=True)
class VehicleParams:
    m: float = 2030.0  # [kg]
    I_z: float = 2500.0  # [kg m^2]
    a: float = 1.2  # [m] CoG to front axle
    b: float = 1.3  # [m] CoG to rear axle
    mu: float = 0.862  # [-]
    B: float = 10.0  # [-] tire stiffness factor
    C: float = 1.503  # [-] tire shape factor
    g: float = 9.81  # [m/s^2]

    def __post_init__(self):
        for name in ("m", "I_z", "a", "b", "mu", "B", "C", "g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"VehicleParams.{name} must be positive, got {value}")
        if not 1.0 < self.C <= 2.0:
            raise ValueError(f"VehicleParams.C must lie in (1, 2], got {self.C}")


@dataclass(frozen=True)
class DriftState:
    V: float  # [m/s]
    beta: float  # [rad]
    r: float  # [rad/s]

    def as_array(self) -> np.ndarray:
        return np.array([self.V, self.beta, self.r])


@dataclass(frozen=True)
class Pose:
    x: float  # [m] east
    y: float  # [m] north
    psi: float  # [rad] heading

    def normalized(self) -> "Pose":
        return Pose(self.x, self.y, wrap_angle(self.psi))


@dataclass(frozen=True)
class ControlInput:
    delta: float  # [rad] steering
    F_xr: float  # [N] rear longitudinal force


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def vertical_loads(params: VehicleParams) -> tuple[float, float]:
    """Static axle loads (front, rear) in newtons; no load transfer."""
    weight = params.m * params.g
    wheelbase = params.a + params.b
    return weight * params.b / wheelbase, weight * params.a / wheelbase


def slip_angles(state: DriftState, delta: float, params: VehicleParams) -> tuple[float, float]:
    """Front and rear tire slip angles."""
    return _slip_angles(state.V, state.beta, state.r, delta, params.a, params.b)


def _slip_angles(V, beta, r, delta, a, b):
    vx = V * math.cos(beta)
    if abs(vx) < 1e-9:
        raise DegenerateState(f"longitudinal velocity V*cos(beta) = {vx:.3g} is zero")
    vy = V * math.sin(beta)
    return math.atan((vy + a * r) / vx) - delta, math.atan((vy - b * r) / vx)


def lateral_tire_force(alpha, F_z, params: VehicleParams):
    """Simplified Pacejka lateral force ``-mu Fz sin(C atan(B alpha))``.

    Works on scalars and numpy arrays alike.
    """
    return -params.mu * F_z * np.sin(params.C * np.arctan(params.B * alpha))


def _derivative(V, beta, r, delta, F_xr, p: VehicleParams, F_zf, F_zr):
    if not V > V_MIN:
        raise DegenerateState(f"speed {V:.3g} m/s is below the model floor {V_MIN} m/s")
    alpha_f, alpha_r = _slip_angles(V, beta, r, delta, p.a, p.b)
    F_yf = -p.mu * F_zf * math.sin(p.C * math.atan(p.B * alpha_f))
    F_yr = -p.mu * F_zr * math.sin(p.C * math.atan(p.B * alpha_r))
    sb, cb = math.sin(beta), math.cos(beta)
    dV = (-F_yf * math.sin(delta - beta) + F_yr * sb + F_xr * cb) / p.m
    dbeta = (F_yf * math.cos(delta - beta) + F_yr * cb - F_xr * sb) / (p.m * V) - r
    dr = (p.a * F_yf * math.cos(delta) - p.b * F_yr) / p.I_z
    return dV, dbeta, dr


def state_derivative(state: DriftState, u: ControlInput, params: VehicleParams) -> tuple[float, float, float]:
    """Time derivatives ``(dV, dbeta, dr)`` of the drift model."""
    F_zf, F_zr = vertical_loads(params)
    return _derivative(state.V, state.beta, state.r, u.delta, u.F_xr, params, F_zf, F_zr)


def pose_derivative(state: DriftState, pose: Pose) -> tuple[float, float, float]:
    course = pose.psi + state.beta
    return state.V * math.cos(course), state.V * math.sin(course), state.r


def _full_rhs(z, delta, F_xr, p, F_zf, F_zr):
    V, beta, r, _, _, psi = z
    dV, dbeta, dr = _derivative(V, beta, r, delta, F_xr, p, F_zf, F_zr)
    course = psi + beta
    return (dV, dbeta, dr, V * math.cos(course), V * math.sin(course), r)


def step(
    state: DriftState,
    pose: Pose,
    u: ControlInput,
    params: VehicleParams,
    dt: float,
    substeps: int = 1,
) -> tuple[DriftState, Pose]:
    """Advance state and pose by ``dt`` with classical RK4 under zero-order hold.

    ``substeps`` splits the interval into equal RK4 steps.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must lie in (0, 0.05], got {dt}")
    F_zf, F_zr = vertical_loads(params)
    z = (state.V, state.beta, state.r, pose.x, pose.y, pose.psi)
    h = dt / substeps
    for _ in range(substeps):
        z = _rk4(z, h, u.delta, u.F_xr, params, F_zf, F_zr)
    V, beta, r, x, y, psi = z
    return DriftState(V, beta, r), Pose(x, y, wrap_angle(psi))


def _rk4(z, h, delta, F_xr, p, F_zf, F_zr):
    k1 = _full_rhs(z, delta, F_xr, p, F_zf, F_zr)
    k2 = _full_rhs([zi + 0.5 * h * ki for zi, ki in zip(z, k1)], delta, F_xr, p, F_zf, F_zr)
    k3 = _full_rhs([zi + 0.5 * h * ki for zi, ki in zip(z, k2)], delta, F_xr, p, F_zf, F_zr)
    k4 = _full_rhs([zi + h * ki for zi, ki in zip(z, k3)], delta, F_xr, p, F_zf, F_zr)
    return tuple(
        zi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d) for zi, a, b, c, d in zip(z, k1, k2, k3, k4)
    )
