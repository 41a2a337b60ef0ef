"""Figure-eight track geometry, drift phase logic and path-tracking feedback.

The track is two tangent circles of radius ``R_eq``.  The left circle is
driven counter-clockwise and the right circle clockwise, so the direction of
travel is continuous through the tangency point ``P_0``.

Signed errors are expressed relative to the active circle:

* ``e`` is positive outside the circle;
* ``dpsi`` is positive when the course ``psi + beta`` points outward.

With both measured toward the outside, ``e + x_la*sin(dpsi)`` is the outward
offset expected ``x_la`` metres ahead on either circle, and steering toward
the centre reduces it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import DriftState, Pose, wrap_angle
from .equilibria import Direction, Equilibrium

TWO_PI = 2.0 * math.pi


class AtCenter(ValueError):
    pass


@dataclass(frozen=True)
class Track8:
    R_eq: float = 44.0
    center_L: tuple[float, float] = (0.0, 44.0)
    center_R: tuple[float, float] = (0.0, -44.0)

    def __post_init__(self):
        gap = math.dist(self.center_L, self.center_R)
        if not math.isclose(gap, 2.0 * self.R_eq, rel_tol=1e-9):
            raise ValueError(f"circles must be tangent: centre distance {gap} != 2*R_eq")

    @classmethod
    def vertical(cls, R_eq: float = 44.0, origin: tuple[float, float] = (0.0, 0.0)) -> "Track8":
        x0, y0 = origin
        return cls(R_eq, (x0, y0 + R_eq), (x0, y0 - R_eq))

    @property
    def P_0(self) -> tuple[float, float]:
        return (
            0.5 * (self.center_L[0] + self.center_R[0]),
            0.5 * (self.center_L[1] + self.center_R[1]),
        )

    def center(self, direction: Direction) -> tuple[float, float]:
        return self.center_L if direction is Direction.LEFT else self.center_R

    def start_pose(self, beta: float) -> Pose:
        """Pose half a lap before ``P_0`` on the left circle, course tangent to it."""
        cx, cy = self.center_L
        px, py = self.P_0
        theta = math.atan2(cy - py, cx - px)  # opposite side of the centre from P_0
        x = cx + self.R_eq * math.cos(theta)
        y = cy + self.R_eq * math.sin(theta)
        course = theta + 0.5 * math.pi
        return Pose(x, y, wrap_angle(course - beta))


@dataclass(frozen=True)
class TrackProjection:
    e: float
    dpsi: float
    s_to_P0: float
    closest_point: tuple[float, float]
    turn: int  # +1 counter-clockwise (left circle), -1 clockwise (right circle)
    angle: float  # polar angle of the vehicle around the active centre


@dataclass(frozen=True)
class ThetaParams:
    c_lr: float
    c_rl: float
    dV_i: float
    k: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c_lr, self.c_rl, self.dV_i, self.k])

    @classmethod
    def from_array(cls, values) -> "ThetaParams":
        c_lr, c_rl, dV_i, k = (float(v) for v in values)
        return cls(c_lr, c_rl, dV_i, k)


THETA_BOUNDS = np.array([[0.0, 0.1], [0.0, 0.1], [-2.0, 2.0], [0.0, 1.0]])
# learned values reported for the original Carsim plant
REFERENCE_THETA = ThetaParams(0.0273, 0.0215, 0.12, 0.21)


def project(pose: Pose, state: DriftState, track: Track8, direction: Direction) -> TrackProjection:
    """Project the vehicle onto the circle driven in ``direction``."""
    cx, cy = track.center(direction)
    dx, dy = pose.x - cx, pose.y - cy
    rho = math.hypot(dx, dy)
    if rho < 1e-9:
        raise AtCenter("vehicle sits on the circle centre; projection is undefined")
    R = track.R_eq
    turn = direction.sign
    theta = math.atan2(dy, dx)
    closest = (cx + R * dx / rho, cy + R * dy / rho)
    tangent = theta + turn * 0.5 * math.pi
    # outward is to the right of travel on a counter-clockwise circle
    dpsi = -turn * wrap_angle(pose.psi + state.beta - tangent)
    px, py = track.P_0
    theta_p0 = math.atan2(py - cy, px - cx)
    remaining = (turn * (theta_p0 - theta)) % TWO_PI
    return TrackProjection(rho - R, dpsi, R * remaining, closest, turn, theta)


@dataclass(frozen=True)
class ScriptLeg:
    direction: Direction
    laps: float


DEFAULT_SCRIPT = (
    ScriptLeg(Direction.LEFT, 0.5),
    ScriptLeg(Direction.RIGHT, 1.0),
    ScriptLeg(Direction.LEFT, 0.5),
)


@dataclass
class DriftPhase:
    """Sustained-drift phase plus the cursor into the scripted route.

    ``progress`` is the unwrapped angle travelled around the active centre
    since the phase began; a trigger is armed only after half the leg's
    scripted angle, which keeps it from firing while the vehicle is still
    next to ``P_0`` right after a switch.
    """

    script: tuple[ScriptLeg, ...] = DEFAULT_SCRIPT
    cursor: int = 0
    progress: float = 0.0
    _last_angle: float | None = field(default=None, repr=False)

    @property
    def direction(self) -> Direction:
        return self.script[self.cursor].direction

    @property
    def name(self) -> str:
        return "SustainL" if self.direction is Direction.LEFT else "SustainR"

    @property
    def armed(self) -> bool:
        if self.cursor >= len(self.script) - 1:
            return False
        return self.progress >= 0.5 * self.script[self.cursor].laps * TWO_PI

    def update_progress(self, proj: TrackProjection) -> None:
        if self._last_angle is not None:
            self.progress += proj.turn * wrap_angle(proj.angle - self._last_angle)
        self._last_angle = proj.angle

    def advance(self) -> None:
        self.cursor += 1
        self.progress = 0.0
        self._last_angle = None

    def snapshot(self) -> tuple[str, int, float]:
        return self.name, self.cursor, self.progress


def trigger_threshold(phase: DriftPhase, theta: ThetaParams) -> float:
    return theta.c_lr if phase.direction is Direction.LEFT else theta.c_rl


def check_trigger(
    proj: TrackProjection, phase: DriftPhase, theta: ThetaParams, track: Track8
) -> Direction | None:
    """Return the destination direction if the reference should switch now.

    A threshold of zero disables the trigger.
    """
    if not phase.armed:
        return None
    c = trigger_threshold(phase, theta)
    if c <= 0.0:
        return None
    if proj.s_to_P0 / (TWO_PI * track.R_eq) <= c:
        return phase.script[phase.cursor + 1].direction
    return None


def reference_for_phase(
    phase: DriftPhase | Direction, eq_L: Equilibrium, eq_R: Equilibrium, theta: ThetaParams
) -> Equilibrium:
    """Active equilibrium with the speed shifted by the learned residual."""
    direction = phase.direction if isinstance(phase, DriftPhase) else phase
    eq = eq_L if direction is Direction.LEFT else eq_R
    return replace(eq, V_eq=eq.V_eq + theta.dV_i)


def lookahead_error(proj: TrackProjection, x_la: float) -> float:
    return proj.e + x_la * math.sin(proj.dpsi)


def feedback_steer(
    delta_mpc: float,
    proj: TrackProjection,
    theta: ThetaParams,
    x_la: float,
    delta_th: float,
    limit: float | None = None,
) -> float:
    """Add ``k * e_la`` toward the active centre and saturate at ``delta_th``.

    ``limit`` optionally bounds the correction itself, so a large error right
    after a reference switch cannot steer the car out of the drift.
    """
    e_la = lookahead_error(proj, x_la)
    correction = proj.turn * theta.k * e_la
    if limit is not None:
        correction = min(max(correction, -limit), limit)
    delta = delta_mpc + correction
    return min(max(delta, -delta_th), delta_th)
