"""Bayesian optimization with a Gaussian-process surrogate and expected improvement.

The surrogate works on inputs rescaled to the unit hypercube and on
standardized targets.  The kernel is squared-exponential with one lengthscale
per input dimension.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class SingularGram(np.linalg.LinAlgError):
    pass


@dataclass
class KernelSettings:
    lengthscale: float | np.ndarray = 0.2
    signal_std: float = 1.0
    noise_std: float = 0.05
    refit_every: int = 0  # 0 keeps the hyperparameters fixed
    refit_starts: int = 8


def normalize(theta, bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    return (np.asarray(theta, dtype=float) - bounds[:, 0]) / (bounds[:, 1] - bounds[:, 0])


def denormalize(u, bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    return bounds[:, 0] + np.asarray(u, dtype=float) * (bounds[:, 1] - bounds[:, 0])


def _se_kernel(A, B, lengthscale, signal_var):
    diff = (A[:, None, :] - B[None, :, :]) / lengthscale
    return signal_var * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


@dataclass
class GpModel:
    X: np.ndarray  # unit-cube inputs, (n, d)
    y: np.ndarray  # standardized targets
    y_mean: float
    y_std: float
    lengthscale: np.ndarray
    signal_var: float
    noise_var: float
    chol: np.ndarray  # lower Cholesky factor of K + noise_var*I
    alpha: np.ndarray

    def predict(self, U, standardized: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at unit-cube points ``U``."""
        U = np.atleast_2d(U)
        Ks = _se_kernel(U, self.X, self.lengthscale, self.signal_var)
        mu = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True)
        var = np.maximum(self.signal_var - np.sum(v * v, axis=0), 0.0)
        sigma = np.sqrt(var)
        if standardized:
            return mu, sigma
        return mu * self.y_std + self.y_mean, sigma * self.y_std

    def predict_with_grad(self, u):
        """Mean, std and their gradients at a single unit-cube point."""
        u = np.asarray(u, dtype=float)
        k = _se_kernel(u[None, :], self.X, self.lengthscale, self.signal_var)[0]
        dk = -k[:, None] * (u[None, :] - self.X) / self.lengthscale**2  # (n, d)
        mu = k @ self.alpha
        dmu = dk.T @ self.alpha
        v = solve_triangular(self.chol, k, lower=True)
        dv = solve_triangular(self.chol, dk, lower=True)
        var = self.signal_var - v @ v
        if var <= 1e-300:
            return mu, 0.0, dmu, np.zeros_like(u)
        sigma = math.sqrt(var)
        dsigma = -(dv.T @ v) / sigma
        return mu, sigma, dmu, dsigma

    @property
    def y_best(self) -> float:
        return float(np.min(self.y))

    def log_marginal_likelihood(self) -> float:
        n = self.y.shape[0]
        return float(
            -0.5 * self.y @ self.alpha - np.sum(np.log(np.diag(self.chol))) - 0.5 * n * math.log(2 * math.pi)
        )


def _assemble(X, y, y_mean, y_std, lengthscale, signal_var, noise_var) -> GpModel:
    K = _se_kernel(X, X, lengthscale, signal_var) + noise_var * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        noise_var *= 100.0
        K[np.diag_indices_from(K)] += noise_var
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise SingularGram("kernel Gram matrix is singular even after raising the noise") from exc
    alpha = cho_solve((L, True), y)
    return GpModel(X, y, y_mean, y_std, lengthscale, signal_var, noise_var, L, alpha)


def gp_fit(
    U: np.ndarray,
    J: np.ndarray,
    hyper: KernelSettings | None = None,
    refit: bool = False,
    rng: np.random.Generator | None = None,
) -> GpModel:
    """Exact GP regression on unit-cube inputs ``U`` and raw targets ``J``.

    With ``refit`` the hyperparameters are re-estimated by maximizing the log
    marginal likelihood from several Nelder-Mead starts; otherwise the values
    in ``hyper`` are used as given.
    """
    hyper = hyper or KernelSettings()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    J = np.asarray(J, dtype=float)
    if U.shape[0] < 2:
        raise ValueError("a GP needs at least two points")
    if np.any(U < -1e-12) or np.any(U > 1 + 1e-12):
        raise ValueError("inputs must lie in the unit hypercube")
    d = U.shape[1]
    y_mean = float(np.mean(J))
    y_std = float(np.std(J))
    if y_std < 1e-12:
        y_std = 1.0
    y = (J - y_mean) / y_std
    ls = np.broadcast_to(np.asarray(hyper.lengthscale, dtype=float), (d,)).copy()
    sf2 = hyper.signal_std**2
    sn2 = hyper.noise_std**2
    if refit:
        ls, sf2, sn2 = _refit_hyper(U, y, ls, sf2, sn2, hyper.refit_starts, rng)
    return _assemble(U, y, y_mean, y_std, ls, sf2, sn2)


def _refit_hyper(U, y, ls, sf2, sn2, starts, rng):
    d = U.shape[1]
    rng = rng or np.random.default_rng(0)

    def nlml(p):
        ls_, sf2_, sn2_ = np.exp(p[:d]), math.exp(p[d]), math.exp(p[d + 1])
        K = _se_kernel(U, U, ls_, sf2_) + sn2_ * np.eye(U.shape[0])
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return 1e10
        a = cho_solve((L, True), y)
        return 0.5 * y @ a + np.sum(np.log(np.diag(L)))

    lo = np.r_[np.full(d, math.log(0.02)), math.log(0.05), math.log(1e-6)]
    hi = np.r_[np.full(d, math.log(5.0)), math.log(20.0), math.log(1.0)]
    best = np.r_[np.log(ls), math.log(sf2), math.log(sn2)]
    best_val = nlml(best)
    for _ in range(starts):
        p0 = lo + rng.random(d + 2) * (hi - lo)
        res = minimize(lambda p: nlml(np.clip(p, lo, hi)), p0, method="Nelder-Mead", options={"maxiter": 400})
        p = np.clip(res.x, lo, hi)
        val = nlml(p)
        if val < best_val:
            best, best_val = p, val
    return np.exp(best[:d]), math.exp(best[d]), math.exp(best[d + 1])


def active_subset(n_points: int, J: np.ndarray, limit: int, rng: np.random.Generator) -> np.ndarray:
    """Indices kept for exact regression: everything, or the incumbent plus a random sample."""
    if limit < 2:
        raise ValueError("active set limit must be at least 2")
    if n_points <= limit:
        return np.arange(n_points)
    best = int(np.argmin(J))
    rest = np.delete(np.arange(n_points), best)
    chosen = rng.choice(rest, size=limit - 1, replace=False)
    return np.sort(np.append(chosen, best))


def expected_improvement(mu, sigma, j_best):
    """EI for minimization; reduces to ``max(j_best - mu, 0)`` where ``sigma == 0``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improvement = j_best - mu
    safe = np.where(sigma > 0.0, sigma, 1.0)
    with np.errstate(over="ignore"):  # subnormal sigma gives z = +-inf, which ndtr handles
        z = improvement / safe
    zc = np.clip(z, -40.0, 40.0)  # density underflows to zero well before this
    ei = improvement * ndtr(z) + safe * _INV_SQRT_2PI * np.exp(-0.5 * zc * zc)
    ei = np.where(sigma > 0.0, ei, np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return ei if ei.ndim else float(ei)


def _neg_ei_and_grad(u, gp: GpModel, j_best):
    mu, sigma, dmu, dsigma = gp.predict_with_grad(u)
    if sigma <= 0.0:
        return -max(j_best - mu, 0.0), np.zeros_like(u)
    z = (j_best - mu) / sigma
    cdf = float(ndtr(z))
    pdf = _INV_SQRT_2PI * math.exp(-0.5 * z * z)
    ei = (j_best - mu) * cdf + sigma * pdf
    grad = -cdf * dmu + pdf * dsigma
    return -ei, -grad


def propose_next(
    gp: GpModel,
    bounds,
    rng: np.random.Generator,
    n_candidates: int = 1024,
    n_refine: int = 4,
) -> np.ndarray:
    """Maximize EI over the box: scrambled Sobol screening, then L-BFGS-B polishing."""
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    sobol = qmc.Sobol(d, scramble=True, seed=rng)
    cand = sobol.random(n_candidates)
    j_best = gp.y_best
    mu, sigma = gp.predict(cand)
    ei = expected_improvement(mu, sigma, j_best)
    order = np.argsort(-ei, kind="stable")[:n_refine]
    best_u, best_val = cand[order[0]], -float(ei[order[0]])
    for idx in order:
        res = minimize(
            _neg_ei_and_grad,
            cand[idx],
            args=(gp, j_best),
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * d,
        )
        if res.fun < best_val:
            best_u, best_val = np.clip(res.x, 0.0, 1.0), float(res.fun)
    return denormalize(best_u, bounds)


def latin_design(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified design in the unit cube: one point per stratum in every dimension."""
    strata = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    return (strata + rng.random((n, d))) / n


@dataclass
class BoState:
    thetas: list[np.ndarray] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)  # 0 for seed points
    incumbents: list[float] = field(default_factory=list)
    seed: int = 0
    active_limit: int = 400

    def record(self, theta, value: float, iteration: int) -> None:
        self.thetas.append(np.asarray(theta, dtype=float))
        self.values.append(float(value))
        self.iterations.append(iteration)
        best = value if not self.incumbents else min(self.incumbents[-1], value)
        self.incumbents.append(float(best))

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))

    @property
    def best_theta(self) -> np.ndarray:
        return self.thetas[self.best_index]

    @property
    def best_value(self) -> float:
        return self.values[self.best_index]

    @property
    def n_evaluations(self) -> int:
        return len(self.values)

    def trace_csv(self, names=("theta_1", "theta_2", "theta_3", "theta_4")) -> str:
        header = ["iteration", *names[: len(self.thetas[0])], "J", "incumbent_J"] if self.thetas else []
        lines = [",".join(header)]
        for it, th, val, inc in zip(self.iterations, self.thetas, self.values, self.incumbents):
            lines.append(",".join([str(it), *(repr(float(x)) for x in th), repr(val), repr(inc)]))
        return "\n".join(lines) + "\n"


def bo_minimize(
    objective: Callable[[np.ndarray], float],
    bounds,
    n_seeds: int = 20,
    n_iters: int = 50,
    seed: int = 0,
    hyper: KernelSettings | None = None,
    active_limit: int = 400,
    failure_penalty: float = 3.0,
    callback: Callable[[BoState], None] | None = None,
) -> BoState:
    """Minimize ``objective`` over the box ``bounds`` (shape ``(d, 2)``).

    Seeds come from a stratified design; every later point maximizes EI under a
    GP fitted to (a subset of) all evaluations so far.  An objective that
    raises is scored as the worst value seen so far plus ``failure_penalty``.
    """
    if n_seeds < 2:
        raise ValueError("need at least two seed points")
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    hyper = hyper or KernelSettings()
    rng = np.random.default_rng(seed)
    state = BoState(seed=seed, active_limit=active_limit)

    def evaluate(theta, iteration):
        try:
            value = float(objective(theta))
            if not math.isfinite(value):
                raise ValueError(f"objective returned {value}")
        except Exception as exc:  # noqa: BLE001 - failures are scored, not fatal
            worst = max(state.values) if state.values else 0.0
            value = worst + failure_penalty
            log.warning("objective failed at %s (%s); scored %.3f", theta, exc, value)
        state.record(theta, value, iteration)
        if callback is not None:
            callback(state)

    for u in latin_design(n_seeds, d, rng):
        evaluate(denormalize(u, bounds), 0)

    fitted = None
    for it in range(1, n_iters + 1):
        J = np.asarray(state.values)
        idx = active_subset(len(J), J, active_limit, rng)
        U = normalize(np.asarray(state.thetas)[idx], bounds)
        refit = hyper.refit_every > 0 and (fitted is None or it % hyper.refit_every == 1)
        if refit:
            gp = gp_fit(U, J[idx], hyper, refit=True, rng=rng)
            fitted = KernelSettings(np.sqrt(gp.lengthscale**2), math.sqrt(gp.signal_var), math.sqrt(gp.noise_var))
        else:
            gp = gp_fit(U, J[idx], fitted or hyper)
        theta = propose_next(gp, bounds, rng)
        evaluate(theta, it)
    return state
