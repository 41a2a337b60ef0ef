import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlab.qp import Infeasible, MaxIterations, QpError, QpProblem, kkt_residual, solve_qp

from . import oracles


def random_spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + n * 0.1 * np.eye(n)


def test_clipped_scalar():
    # (x-1)^2 = x^2 - 2x + 1
    sol = solve_qp(QpProblem(np.array([[2.0]]), np.array([-2.0]), ub=np.array([0.5])))
    assert sol.x[0] == pytest.approx(0.5, abs=1e-12)
    assert sol.kkt_residual < 1e-9


def test_unconstrained_matches_dense_solve():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        H, g = random_spd(rng, n), rng.standard_normal(n)
        sol = solve_qp(QpProblem(H, g))
        assert np.max(np.abs(sol.x - np.linalg.solve(H, -g))) < 1e-8


def test_box_matches_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 7))
        H, g = random_spd(rng, n), 3 * rng.standard_normal(n)
        lb = -rng.uniform(0.1, 1.0, n)
        ub = rng.uniform(0.1, 1.0, n)
        sol = solve_qp(QpProblem(H, g, lb, ub))
        _, f_best = oracles.box_qp_enumerate(H, g, lb, ub)
        assert abs(sol.objective - f_best) < 1e-8
        assert np.all(sol.x >= lb - 1e-9) and np.all(sol.x <= ub + 1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 10), m=st.integers(1, 8))
def test_general_constraints_kkt(seed, n, m):
    rng = np.random.default_rng(seed)
    H, g = random_spd(rng, n), 5 * rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    # bounds around a known feasible point keep the instance feasible
    x0 = rng.uniform(-0.5, 0.5, n)
    lb, ub = x0 - 1.0, x0 + 1.0
    lA, uA = A @ x0 - rng.uniform(0.05, 1, m), A @ x0 + rng.uniform(0.05, 1, m)
    sol = solve_qp(QpProblem(H, g, lb, ub, A, lA, uA))
    assert sol.kkt_residual < 1e-6
    assert kkt_residual(QpProblem(H, g, lb, ub, A, lA, uA), sol.x, sol.multipliers) == sol.kkt_residual
    assert np.all(sol.multipliers >= 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
def test_dual_objective_monotone(seed, n):
    rng = np.random.default_rng(seed)
    H, g = random_spd(rng, n), 5 * rng.standard_normal(n)
    lb, ub = -0.3 * np.ones(n), 0.3 * np.ones(n)
    sol = solve_qp(QpProblem(H, g, lb, ub))
    trace = np.array(sol.dual_trace)
    # the dual method only ever adds cost as constraints become active
    assert np.all(np.diff(trace) >= -1e-9 * max(1.0, np.max(np.abs(trace))))


def test_deterministic():
    rng = np.random.default_rng(5)
    H, g = random_spd(rng, 8), rng.standard_normal(8)
    qp = QpProblem(H, g, -0.2 * np.ones(8), 0.2 * np.ones(8))
    a, b = solve_qp(qp), solve_qp(qp)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_infeasible_and_errors():
    H = np.eye(2)
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    qp = QpProblem(H, np.zeros(2), A=A, lA=np.array([1.0, -np.inf]), uA=np.array([np.inf, -1.0]))
    with pytest.raises(Infeasible):
        solve_qp(qp)
    with pytest.raises(QpError):
        solve_qp(QpProblem(-np.eye(2), np.zeros(2)))
    rng = np.random.default_rng(2)
    H = random_spd(rng, 6)
    with pytest.raises(MaxIterations) as info:
        solve_qp(QpProblem(H, 10 * rng.standard_normal(6), -0.01 * np.ones(6), 0.01 * np.ones(6)), max_iter=1)
    assert info.value.x.shape == (6,)
