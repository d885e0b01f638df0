"""Deterministic fitting of genome parameters and the covariance seed.

Constants are fit by multistart nonlinear least squares: a damped
Gauss-Newton (Levenberg-Marquardt) iteration that runs all starts in
lockstep on batched residual/jacobian evaluations.  When an equation has
more parameters than the dataset has rows, least squares is ill-posed and
BFGS on the mean squared error takes over.

The biased covariance estimator seeds particle-based inference:

    Sigma* = (sum_i [y_i - f(x_i, theta*)]^2 / N) * (J^T J)^{-1}

with J the parameter jacobian at the optimum and denominator N rather than
N - p so it stays defined when p approaches N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .datasets import Dataset
from .expressions import EquationGenome, _forward_values, _forward_values_and_jacobian

THETA_INIT_LOW = -10.0
THETA_INIT_HIGH = 10.0


@dataclass
class LocalFit:
    """One local optimum: parameters, its RMSE, and the covariance seed."""

    theta_star: np.ndarray
    rmse: float
    covariance: np.ndarray
    converged: bool
    covariance_regularized: bool = False


@dataclass
class MultistartResult:
    """All per-start fits plus the index of the best converged one."""

    fits: list[LocalFit]
    best: int | None

    @property
    def any_converged(self) -> bool:
        return self.best is not None

    @property
    def best_fit(self) -> LocalFit:
        if self.best is None:
            raise ValueError("no converged fit available")
        return self.fits[self.best]

    def converged_fits(self) -> list[LocalFit]:
        return [f for f in self.fits if f.converged]


def _rmse_from_values(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    resid = values - y
    with np.errstate(all="ignore"):
        out = np.sqrt(np.mean(resid**2, axis=-1))
    return np.where(np.isfinite(out), out, np.inf)


def _lm_minimize(genome, x, y, theta0, gtol, max_iter):
    """Lockstep Levenberg-Marquardt over a batch of starts.

    Returns (theta (S, p), sse (S,)).  Each start carries its own damping
    factor; steps are only accepted when they strictly reduce the (finite)
    sum of squares, which gives the per-start descent property.
    """
    s, p = theta0.shape
    n = x.shape[0]
    theta = theta0.copy()

    def eval_all(th):
        values, jac = _forward_values_and_jacobian(genome, x, th)
        resid = values - y[None, :]
        with np.errstate(all="ignore"):
            sse = np.sum(resid**2, axis=1)
        ok = np.isfinite(sse) & np.isfinite(jac.reshape(s, -1)).all(axis=1)
        sse = np.where(np.isfinite(sse), sse, np.inf)
        return resid, jac, sse, ok

    resid, jac, sse, ok = eval_all(theta)
    lam = np.full(s, 1e-3)
    active = ok & (sse > 0)
    eye = np.eye(p)
    for _ in range(max_iter):
        if not active.any():
            break
        jtj = np.einsum("snp,snq->spq", jac, jac)
        g = np.einsum("snp,sn->sp", jac, resid)
        grad_small = np.abs(g).max(axis=1) < gtol
        active &= ~grad_small
        if not active.any():
            break
        damp = lam[:, None, None] * (
            np.einsum("spp->sp", jtj)[:, :, None] * eye[None] + 1e-12 * eye[None]
        )
        a = jtj + damp
        try:
            delta = -np.linalg.solve(a, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            delta = -np.stack([np.linalg.lstsq(ai, gi, rcond=None)[0] for ai, gi in zip(a, g)])
        trial = np.where(active[:, None], theta + delta, theta)
        resid_t, jac_t, sse_t, ok_t = eval_all(trial)
        better = active & ok_t & (sse_t < sse)
        theta[better] = trial[better]
        resid = np.where(better[:, None], resid_t, resid)
        jac = np.where(better[:, None, None], jac_t, jac)
        sse = np.where(better, sse_t, sse)
        lam[better] = np.maximum(lam[better] / 3.0, 1e-12)
        worse = active & ~better
        lam[worse] = lam[worse] * 2.0
        # A start whose damping explodes is stuck; freeze it at its best point.
        active &= lam < 1e12
        step_small = np.abs(delta).max(axis=1) < 1e-12
        active &= ~(step_small & ~worse)
    return theta, sse


def _bfgs_minimize(genome, x, y, theta0, gtol, max_iter):
    """Per-start BFGS on the mean squared error (used when p > N)."""
    s, _ = theta0.shape
    n = x.shape[0]

    def objective(th):
        values, jac = _forward_values_and_jacobian(genome, x, th[None, :])
        resid = values[0] - y
        if not (np.isfinite(resid).all() and np.isfinite(jac).all()):
            return np.inf, np.zeros_like(th)
        mse = float(np.mean(resid**2))
        grad = 2.0 / n * (jac[0].T @ resid)
        return mse, grad

    thetas = np.empty_like(theta0)
    sse = np.empty(s)
    for i in range(s):
        mse0, _ = objective(theta0[i])
        if not np.isfinite(mse0):
            thetas[i], sse[i] = theta0[i], np.inf
            continue
        res = scipy.optimize.minimize(
            objective,
            theta0[i],
            jac=True,
            method="BFGS",
            options={"gtol": gtol, "maxiter": max_iter},
        )
        thetas[i] = res.x
        sse[i] = res.fun * n if np.isfinite(res.fun) else np.inf
    return thetas, sse


def _covariance_at(genome, dataset, theta_star) -> tuple[np.ndarray, bool]:
    p = genome.param_count
    if p == 0:
        return np.zeros((0, 0)), False
    theta_star = np.asarray(theta_star, dtype=np.float64)
    values, jac = _forward_values_and_jacobian(genome, dataset.x, theta_star[None, :])
    resid = dataset.y - values[0]
    if not (np.isfinite(resid).all() and np.isfinite(jac).all()):
        return np.full((p, p), np.nan), True
    mean_sq = float(np.mean(resid**2))
    jtj = jac[0].T @ jac[0]
    regularized = False
    try:
        inv = np.linalg.solve(jtj, np.eye(p))
        if not np.isfinite(inv).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        eps = 1e-8 * np.trace(jtj) / p
        if not np.isfinite(eps) or eps <= 0:
            eps = 1e-8
        inv = np.linalg.solve(jtj + eps * np.eye(p), np.eye(p))
        regularized = True
    cov = mean_sq * inv
    return 0.5 * (cov + cov.T), regularized


def estimate_covariance(genome: EquationGenome, dataset: Dataset, theta_star) -> np.ndarray:
    """Biased covariance estimate at a fitted optimum (denominator N).

    Falls back to a Tikhonov-regularized inverse when J^T J is singular;
    the accompanying flag is surfaced on LocalFit during fitting.
    """
    cov, _ = _covariance_at(genome, dataset, theta_star)
    return cov


def fit_constants(
    genome: EquationGenome,
    dataset: Dataset,
    starts: int = 4,
    method: str | None = None,
    rng=None,
    gtol: float = 1e-8,
    max_iter: int = 500,
) -> MultistartResult:
    """Multistart RMSE minimization of the genome's parameter vector.

    Initial points are i.i.d. Uniform(-10, 10) per component.  ``method``
    is ``"lm"`` or ``"bfgs"``; by default LM is used unless the equation
    has more parameters than the dataset has rows.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p = genome.param_count
    x, y = dataset.x, dataset.y

    if p == 0:
        values = _forward_values(genome, x, np.zeros((1, 0)))[0]
        rmse = float(_rmse_from_values(values, y))
        fit = LocalFit(
            theta_star=np.zeros(0),
            rmse=rmse,
            covariance=np.zeros((0, 0)),
            converged=bool(np.isfinite(rmse)),
        )
        return MultistartResult(fits=[fit], best=0 if fit.converged else None)

    theta0 = rng.uniform(THETA_INIT_LOW, THETA_INIT_HIGH, size=(starts, p))
    if method is None:
        method = "lm" if p <= dataset.n else "bfgs"
    if method == "lm":
        thetas, sse = _lm_minimize(genome, x, y, theta0, gtol, max_iter)
    elif method == "bfgs":
        thetas, sse = _bfgs_minimize(genome, x, y, theta0, gtol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    fits = []
    for i in range(starts):
        finite = bool(np.isfinite(sse[i]) and np.isfinite(thetas[i]).all())
        rmse = float(np.sqrt(sse[i] / dataset.n)) if finite else np.inf
        if finite:
            cov, reg = _covariance_at(genome, dataset, thetas[i])
            finite = bool(np.isfinite(cov).all())
        else:
            cov, reg = np.full((p, p), np.nan), False
        fits.append(
            LocalFit(
                theta_star=thetas[i],
                rmse=rmse,
                covariance=cov,
                converged=finite,
                covariance_regularized=reg,
            )
        )
    converged = [i for i, f in enumerate(fits) if f.converged]
    best = min(converged, key=lambda i: (fits[i].rmse, i)) if converged else None
    return MultistartResult(fits=fits, best=best)
