"""Dense convex QP solver (Goldfarb-Idnani dual active-set method).

Solves::

    minimize    0.5 x'Hx + g'x
    subject to  lb <= x <= ub,   lA <= A x <= uA

with ``H`` symmetric positive definite.  The dual method starts from the
unconstrained minimizer and adds violated constraints one at a time, so no
feasible starting point is needed and the result is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class QpError(RuntimeError):
    pass


class Infeasible(QpError):
    pass


class MaxIterations(QpError):
    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = x


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    A: np.ndarray | None = None
    lA: np.ndarray | None = None
    uA: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def inequality_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack every finite bound as a row of ``N x >= b``."""
        n = self.n
        eye = np.eye(n)
        rows, rhs = [], []

        def add(mat, vec, sign):
            if vec is None:
                return
            vec = np.broadcast_to(np.asarray(vec, dtype=float), (mat.shape[0],))
            keep = np.isfinite(vec)
            rows.append(sign * mat[keep])
            rhs.append(sign * vec[keep])

        add(eye, self.lb, 1.0)
        add(eye, self.ub, -1.0)
        if self.A is not None:
            add(self.A, self.lA, 1.0)
            add(self.A, self.uA, -1.0)
        if not rows:
            return np.zeros((0, n)), np.zeros(0)
        return np.vstack(rows), np.concatenate(rhs)


@dataclass
class QpSolution:
    x: np.ndarray
    multipliers: np.ndarray  # one per row of the inequality form, >= 0
    iterations: int
    active: list[int]
    kkt_residual: float
    objective: float
    violation_trace: list[float] = field(default_factory=list)
    dual_trace: list[float] = field(default_factory=list)


def kkt_residual(qp: QpProblem, x: np.ndarray, lam: np.ndarray) -> float:
    """Max of stationarity, primal/dual feasibility and complementarity residuals."""
    N, b = qp.inequality_form()
    slack = N @ x - b
    stationarity = qp.H @ x + qp.g - N.T @ lam
    parts = [np.max(np.abs(stationarity), initial=0.0)]
    parts.append(np.max(-slack, initial=0.0))
    parts.append(np.max(-lam, initial=0.0))
    parts.append(np.max(np.abs(lam * slack), initial=0.0))
    return float(max(parts))


def solve_qp(qp: QpProblem, tol: float = 1e-6, max_iter: int = 500) -> QpSolution:
    N, b = qp.inequality_form()
    try:
        chol = cho_factor(qp.H)
    except np.linalg.LinAlgError as exc:
        raise QpError("Hessian is not positive definite") from exc
    G_inv = cho_solve(chol, np.eye(qp.n))
    # violation threshold is kept well below tol so the KKT residual meets tol
    feas_tol = 1e-3 * tol

    x = -G_inv @ qp.g
    active: list[int] = []
    u = np.zeros(0)
    violation_trace: list[float] = []
    dual_trace: list[float] = []
    iterations = 0

    while True:
        slack = N @ x - b
        worst = int(np.argmin(slack)) if slack.size else 0
        violation = float(max(-slack[worst], 0.0)) if slack.size else 0.0
        violation_trace.append(violation)
        dual_trace.append(qp.objective(x))
        if violation <= feas_tol:
            break
        if iterations >= max_iter:
            raise MaxIterations(f"QP not solved in {max_iter} iterations", x.copy())

        p = worst
        n_p = N[p]
        u_plus = np.append(u, 0.0)
        while True:
            iterations += 1
            if iterations > max_iter:
                raise MaxIterations(f"QP not solved in {max_iter} iterations", x.copy())
            if active:
                Na = N[active]
                W = G_inv @ Na.T
                M = Na @ W
                r = np.linalg.solve(M, W.T @ n_p)
                z = G_inv @ n_p - W @ r
            else:
                r = np.zeros(0)
                z = G_inv @ n_p

            t1, drop = np.inf, -1
            positive = np.flatnonzero(r > 1e-12)
            if positive.size:
                ratios = u_plus[positive] / r[positive]
                k = int(np.argmin(ratios))
                t1, drop = float(ratios[k]), int(positive[k])

            curvature = float(z @ n_p)
            if np.linalg.norm(z) > 1e-12 * max(1.0, np.linalg.norm(n_p)) and curvature > 1e-14:
                t2 = float(-(n_p @ x - b[p]) / curvature)
            else:
                t2 = np.inf

            t = min(t1, t2)
            if not np.isfinite(t):
                raise Infeasible(f"constraint {p} cannot be satisfied together with the active set")

            if np.isinf(t2):
                # dependent constraint: move only in the dual and release one
                u_plus[:-1] -= t * r
                u_plus[-1] += t
                u_plus = np.delete(u_plus, drop)
                del active[drop]
                continue

            x = x + t * z
            u_plus[:-1] -= t * r
            u_plus[-1] += t
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            u_plus = np.delete(u_plus, drop)
            del active[drop]

    lam = np.zeros(b.shape[0])
    if active:
        lam[active] = np.maximum(u, 0.0)
    res = kkt_residual(qp, x, lam)
    return QpSolution(
        x=x,
        multipliers=lam,
        iterations=iterations,
        active=list(active),
        kkt_residual=res,
        objective=qp.objective(x),
        violation_trace=violation_trace,
        dual_trace=dual_trace,
    )
