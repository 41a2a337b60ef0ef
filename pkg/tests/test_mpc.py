import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlab.dynamics import ControlInput, DriftState, VehicleParams
from driftlab.equilibria import Direction, LinearModel, linear_model, solve_equilibrium
from driftlab.mpc import DimensionMismatch, MpcConfig, MpcController, build_qp, mpc_step, prediction_matrices
from driftlab.qp import solve_qp

P = VehicleParams()
EQ = solve_equilibrium(P, 19.1, 44.0, Direction.LEFT)
MODEL = linear_model(EQ, P, 0.05)


def horizon_cost(model, xi_0, xi_ref, z, cfg):
    """Direct rollout of the SI-unit cost for increments ``z`` (QP units)."""
    m = model.B_d.shape[1]
    dtau = z.reshape(cfg.N_c, m) / cfg.input_scale
    x = xi_0 - model.origin.as_array()
    ref = xi_ref - model.origin.as_array()
    cost = 0.0
    for k in range(cfg.N_p):
        u = dtau[k] if k < cfg.N_c else np.zeros(m)
        x = model.A_d @ x + model.B_d @ u
        cost += (x - ref) @ cfg.Q @ (x - ref)
        if k < cfg.N_c:
            cost += u @ cfg.R_w @ u
    return cost


def test_zero_gradient_at_reference():
    cfg = MpcConfig()
    qp = build_qp(MODEL, EQ.as_array(), EQ.as_array(), cfg)
    assert np.max(np.abs(qp.g)) < 1e-12
    assert np.allclose(solve_qp(qp).x, 0.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), Np=st.integers(1, 6), Nc_frac=st.floats(0.0, 1.0))
def test_condensed_objective_equals_rollout(seed, Np, Nc_frac):
    Nc = max(1, int(round(Nc_frac * Np)))
    cfg = MpcConfig(N_p=Np, N_c=Nc)
    rng = np.random.default_rng(seed)
    xi_0 = EQ.as_array() + rng.normal(0, [0.5, 0.05, 0.05, 0.02, 200.0])
    xi_ref = EQ.as_array() + rng.normal(0, [0.3, 0.0, 0.0, 0.0, 0.0])
    qp = build_qp(MODEL, xi_0, xi_ref, cfg)
    z1, z2 = rng.normal(0, 0.05, 2 * Nc), rng.normal(0, 0.05, 2 * Nc)
    lhs = qp.objective(z1) - qp.objective(z2)
    rhs = horizon_cost(MODEL, xi_0, xi_ref, z1, cfg) - horizon_cost(MODEL, xi_0, xi_ref, z2, cfg)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-9)


def test_one_step_hand_expansion():
    cfg = MpcConfig(N_p=1, N_c=1)
    pred = prediction_matrices(MODEL, cfg)
    S = np.diag(cfg.state_scale)
    Su = np.diag(cfg.input_scale)
    B = S @ MODEL.B_d @ np.linalg.inv(Su)
    Q = np.linalg.inv(S) @ cfg.Q @ np.linalg.inv(S)
    R = np.linalg.inv(Su) @ cfg.R_w @ np.linalg.inv(Su)
    assert np.allclose(pred.H, 2 * (B.T @ Q @ B + R), rtol=1e-12, atol=1e-12)
    xi_0 = EQ.as_array() + np.array([1.0, 0, 0, 0, 0])
    qp = build_qp(MODEL, xi_0, EQ.as_array(), cfg)
    x0 = S @ (xi_0 - EQ.as_array())
    A = S @ MODEL.A_d @ np.linalg.inv(S)
    assert np.allclose(qp.g, 2 * B.T @ Q @ (A @ x0), rtol=1e-12, atol=1e-12)


def test_inactive_bounds_give_unconstrained_optimum():
    cfg = MpcConfig()
    xi_0 = EQ.as_array() + np.array([0.01, 0.0, 0.0, 0.0, 0.0])
    qp = build_qp(MODEL, xi_0, EQ.as_array(), cfg)
    sol = solve_qp(qp)
    assert np.max(np.abs(sol.x - np.linalg.solve(qp.H, -qp.g))) < 1e-8


def test_hold_at_equilibrium():
    tau = mpc_step(EQ.state, EQ.control, EQ, MODEL, MpcConfig())
    assert tau.delta == pytest.approx(EQ.delta_eq, abs=1e-12)
    assert tau.F_xr == pytest.approx(EQ.F_xr_eq, abs=1e-9)


def test_overspeed_reduces_throttle():
    state = DriftState(EQ.V_eq + 1.0, EQ.beta_eq, EQ.r_eq)
    tau = mpc_step(state, EQ.control, EQ, MODEL, MpcConfig())
    assert tau.F_xr < EQ.F_xr_eq


def test_hold_on_own_linear_model():
    cfg = MpcConfig()
    ctl = MpcController(cfg)
    x = EQ.as_array().copy()
    tau = EQ.control
    for _ in range(40):
        tau, _ = ctl.step(DriftState(*x[:3]), tau, EQ, MODEL)
        dtau = np.array([tau.delta, tau.F_xr]) - x[3:]
        x = EQ.as_array() + MODEL.A_d @ (x - EQ.as_array()) + MODEL.B_d @ dtau
        assert tau == EQ.control


@settings(max_examples=40, deadline=None)
@given(
    dV=st.floats(-3, 3), dbeta=st.floats(-0.3, 0.3), dr=st.floats(-0.5, 0.5),
    delta=st.floats(-0.6, 0.6), F=st.floats(-3000, 8000),
)  # fmt: skip
def test_controls_respect_sets(dV, dbeta, dr, delta, F):
    cfg = MpcConfig()
    state = DriftState(EQ.V_eq + dV, EQ.beta_eq + dbeta, EQ.r_eq + dr)
    prev = ControlInput(delta, F)
    tau, diag = MpcController(cfg).step(state, prev, EQ, MODEL)
    assert -cfg.delta_th <= tau.delta <= cfg.delta_th
    assert cfg.F_min <= tau.F_xr <= cfg.F_max
    assert abs(tau.delta - delta) <= cfg.ddelta_th + 1e-12
    assert abs(tau.F_xr - F) <= cfg.dF_th + 1e-9
    assert diag.kkt_residual < 1e-6


def test_deterministic_qp():
    xi_0 = EQ.as_array() + np.array([0.5, -0.02, 0.03, 0.0, 0.0])
    a = build_qp(MODEL, xi_0, EQ.as_array(), MpcConfig())
    b = build_qp(MODEL, xi_0, EQ.as_array(), MpcConfig())
    assert np.array_equal(a.H, b.H) and np.array_equal(a.g, b.g)
    assert np.array_equal(solve_qp(a).x, solve_qp(b).x)


def test_validation():
    with pytest.raises(ValueError):
        MpcConfig(N_p=5, N_c=6)
    with pytest.raises(ValueError):
        MpcConfig(R_w=np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        MpcConfig(F_min=1.0, F_max=0.0)
    with pytest.raises(DimensionMismatch):
        build_qp(MODEL, np.zeros(3), np.zeros(5), MpcConfig())
    bad = LinearModel(np.eye(4), np.zeros((4, 2)), 0.05)
    with pytest.raises(DimensionMismatch):
        prediction_matrices(bad, MpcConfig())
    with pytest.raises(DimensionMismatch):
        build_qp(MODEL, EQ.as_array(), EQ.as_array(), MpcConfig(dt=0.1))
