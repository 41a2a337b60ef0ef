"""Linear MPC drift controller.

The controller tracks an augmented reference ``[V, beta, r, delta, F_xr]`` with
a model linearized at a drift equilibrium.  Decision variables are the
per-sample input increments ``(d_delta, d_F_xr)`` over the control horizon;
beyond it the increments are zero.  Inside the QP the rear force is carried in
kN so that the Hessian is reasonably conditioned; the weights ``Q`` and ``R_w``
are specified in SI units and rescaled accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlInput, DriftState
from .equilibria import Equilibrium, LinearModel
from .qp import MaxIterations, QpProblem, solve_qp


class DimensionMismatch(ValueError):
    pass


def _diag(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=float))


@dataclass
class MpcConfig:
    N_p: int = 20
    N_c: int = 20
    Q: np.ndarray = field(default_factory=lambda: _diag([2.0, 50.0, 10.0, 1.0, 1e-7]))
    R_w: np.ndarray = field(default_factory=lambda: _diag([5.0, 1e-7]))
    delta_th: float = 0.6  # [rad]
    F_min: float = -3000.0  # [N]
    F_max: float = 8000.0  # [N]
    ddelta_th: float = 0.15  # [rad/step]
    dF_th: float = 500.0  # [N/step]
    dt: float = 0.05  # [s]
    # QP units per SI unit for the states and the inputs (force in kN)
    state_scale: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0, 1.0, 1e-3]))
    input_scale: np.ndarray = field(default_factory=lambda: np.array([1.0, 1e-3]))

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R_w = np.atleast_2d(np.asarray(self.R_w, dtype=float))
        self.state_scale = np.asarray(self.state_scale, dtype=float)
        self.input_scale = np.asarray(self.input_scale, dtype=float)
        if not 1 <= self.N_c <= self.N_p:
            raise ValueError(f"need 1 <= N_c <= N_p, got N_c={self.N_c}, N_p={self.N_p}")
        if np.min(np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(0.5 * (self.R_w + self.R_w.T))) <= 0.0:
            raise ValueError("R_w must be positive definite")
        if not (self.delta_th > 0 and self.F_min < self.F_max and self.ddelta_th > 0 and self.dF_th > 0):
            raise ValueError("input constraint sets must be nonempty")

    @property
    def tau_min(self) -> np.ndarray:
        return np.array([-self.delta_th, self.F_min])

    @property
    def tau_max(self) -> np.ndarray:
        return np.array([self.delta_th, self.F_max])

    @property
    def dtau_max(self) -> np.ndarray:
        return np.array([self.ddelta_th, self.dF_th])


@dataclass
class Prediction:
    """Condensed prediction ``X = Phi x0 + Gamma U`` in QP units."""

    A: np.ndarray
    B: np.ndarray
    Phi: np.ndarray
    Gamma: np.ndarray
    H: np.ndarray
    Qbar: np.ndarray


def prediction_matrices(model: LinearModel, cfg: MpcConfig) -> Prediction:
    n, m = model.B_d.shape
    if cfg.Q.shape != (n, n) or cfg.R_w.shape != (m, m):
        raise DimensionMismatch(f"weights {cfg.Q.shape}/{cfg.R_w.shape} do not fit a {n}x{m} model")
    if cfg.state_scale.shape != (n,) or cfg.input_scale.shape != (m,):
        raise DimensionMismatch("scaling vectors do not fit the model")
    Sx = np.diag(cfg.state_scale)
    A = Sx @ model.A_d @ np.diag(1.0 / cfg.state_scale)
    B = Sx @ model.B_d @ np.diag(1.0 / cfg.input_scale)
    Np, Nc = cfg.N_p, cfg.N_c
    Phi = np.zeros((n * Np, n))
    Gamma = np.zeros((n * Np, m * Nc))
    power = np.eye(n)
    powers = []
    for k in range(Np):
        powers.append(power)  # A^k
        power = A @ power
        Phi[k * n : (k + 1) * n] = power
    for k in range(Np):  # row block k predicts x_{k+1}
        for j in range(min(k + 1, Nc)):
            Gamma[k * n : (k + 1) * n, j * m : (j + 1) * m] = powers[k - j] @ B
    # weights are given per SI unit; rescale them to QP units
    Q = cfg.Q / np.outer(cfg.state_scale, cfg.state_scale)
    R = cfg.R_w / np.outer(cfg.input_scale, cfg.input_scale)
    Qbar = np.kron(np.eye(Np), Q)
    Rbar = np.kron(np.eye(Nc), R)
    H = 2.0 * (Gamma.T @ Qbar @ Gamma + Rbar)
    H = 0.5 * (H + H.T)
    return Prediction(A, B, Phi, Gamma, H, Qbar)


def build_qp(
    model: LinearModel,
    xi_0: np.ndarray,
    xi_ref: np.ndarray,
    cfg: MpcConfig,
    prediction: Prediction | None = None,
) -> QpProblem:
    """Condensed QP over the stacked increments.

    The objective ``0.5 z'Hz + g'z`` equals the horizon cost
    ``sum ||xi_k - xi_ref||_Q^2 + sum ||dtau_k||_R^2`` up to a constant.
    States are measured relative to ``model.origin`` when it is set.
    Absolute input bounds are imposed on ``tau_prev + cumsum(dtau)`` where
    ``tau_prev`` is read from the last ``m`` entries of ``xi_0``.
    """
    n, m = model.B_d.shape
    xi_0 = np.asarray(xi_0, dtype=float)
    xi_ref = np.asarray(xi_ref, dtype=float)
    if xi_0.shape != (n,) or xi_ref.shape != (n,):
        raise DimensionMismatch(f"expected state vectors of length {n}")
    if not np.all(np.isfinite(xi_0)):
        raise ValueError("xi_0 must be finite")
    if abs(model.dt - cfg.dt) > 1e-12:
        raise DimensionMismatch(f"model dt {model.dt} differs from controller dt {cfg.dt}")
    pred = prediction or prediction_matrices(model, cfg)
    origin = model.origin.as_array() if model.origin is not None else np.zeros(n)
    x0 = cfg.state_scale * (xi_0 - origin)
    ref = cfg.state_scale * (xi_ref - origin)
    free = pred.Phi @ x0 - np.tile(ref, cfg.N_p)
    g = 2.0 * pred.Gamma.T @ (pred.Qbar @ free)

    Nc = cfg.N_c
    su = cfg.input_scale
    w = np.tile(cfg.dtau_max * su, Nc)
    tau_prev = xi_0[n - m :] * su
    room_lo = cfg.tau_min * su - tau_prev
    room_hi = cfg.tau_max * su - tau_prev
    lb, ub = -w.copy(), w.copy()
    # the first cumulative row is the first increment itself: merge into its bounds
    lb[:m] = np.maximum(lb[:m], room_lo)
    ub[:m] = np.minimum(ub[:m], room_hi)
    if Nc > 1:
        S = np.kron(np.tril(np.ones((Nc, Nc))), np.eye(m))[m:]
        lA = np.tile(room_lo, Nc - 1)
        uA = np.tile(room_hi, Nc - 1)
    else:
        S = lA = uA = None
    return QpProblem(pred.H, g, lb, ub, S, lA, uA)


@dataclass
class MpcDiagnostics:
    cost: float
    kkt_residual: float
    iterations: int
    active_constraints: int
    max_iter_hit: bool = False


class MpcController:
    """Caches the condensed prediction per linear model."""

    def __init__(self, cfg: MpcConfig, tol: float = 1e-6, max_iter: int = 500):
        self.cfg = cfg
        self.tol = tol
        self.max_iter = max_iter
        self._cache: dict[int, tuple[LinearModel, Prediction]] = {}

    def prediction(self, model: LinearModel) -> Prediction:
        key = id(model)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not model:
            hit = (model, prediction_matrices(model, self.cfg))
            self._cache[key] = hit
        return hit[1]

    def step(
        self, state: DriftState, tau_prev: ControlInput, ref: Equilibrium, model: LinearModel
    ) -> tuple[ControlInput, MpcDiagnostics]:
        cfg = self.cfg
        m = 2
        tau = np.clip([tau_prev.delta, tau_prev.F_xr], cfg.tau_min, cfg.tau_max)
        xi_0 = np.array([state.V, state.beta, state.r, tau[0], tau[1]])
        qp = build_qp(model, xi_0, ref.as_array(), cfg, self.prediction(model))
        try:
            sol = solve_qp(qp, tol=self.tol, max_iter=self.max_iter)
            z = sol.x
            diag = MpcDiagnostics(sol.objective, sol.kkt_residual, sol.iterations, len(sol.active))
        except MaxIterations as exc:
            z = exc.x
            diag = MpcDiagnostics(qp.objective(z), float("nan"), self.max_iter, -1, max_iter_hit=True)
        dtau = z[:m] / cfg.input_scale
        # the bounds of the first increment already encode both sets; clip guards round-off
        dtau = np.clip(dtau, -cfg.dtau_max, cfg.dtau_max)
        new_tau = np.clip(tau + dtau, cfg.tau_min, cfg.tau_max)
        return ControlInput(float(new_tau[0]), float(new_tau[1])), diag


def mpc_step(
    state: DriftState,
    tau_prev: ControlInput,
    ref: Equilibrium,
    model: LinearModel,
    cfg: MpcConfig,
) -> ControlInput:
    """One receding-horizon step: ``tau_prev`` plus the first optimal increment."""
    control, _ = MpcController(cfg).step(state, tau_prev, ref, model)
    return control
