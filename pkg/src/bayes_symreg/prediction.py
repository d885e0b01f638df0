"""Posterior predictive machinery: MAP curves, credible and prediction bands.

Credible bands are weighted quantiles of the equation output over the
posterior particles (parameter uncertainty only); prediction bands add
fresh Gaussian noise draws at each particle's inferred sigma, so they
contain the credible bands up to Monte Carlo error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import EquationGenome, evaluate_batch
from .inference import InferenceError, ParticleEnsemble


@dataclass
class PredictionBand:
    """Pointwise bands on a grid of input points at one coverage level."""

    grid: np.ndarray
    map_curve: np.ndarray
    credible_lo: np.ndarray
    credible_hi: np.ndarray
    predictive_lo: np.ndarray
    predictive_hi: np.ndarray
    level: float


def weighted_quantiles(values: np.ndarray, weights: np.ndarray, qs) -> np.ndarray:
    """Quantiles of weighted samples, columnwise.

    ``values`` is (K,) or (K, M) with one weight per row; interpolation
    follows the type-7 convention generalized to the weighted CDF (plotting
    positions (C_k - w_k) / (1 - w_k) after normalization).  NaN rows are
    excluded per column; an all-NaN column yields NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    weights = np.asarray(weights, dtype=np.float64)
    qs = np.atleast_1d(np.asarray(qs, dtype=np.float64))
    k, m = values.shape
    order = np.argsort(values, axis=0)  # NaNs sort to the end
    sorted_vals = np.take_along_axis(values, order, axis=0)
    sorted_w = weights[order]
    sorted_w[~np.isfinite(sorted_vals)] = 0.0
    totals = sorted_w.sum(axis=0)
    out = np.full((len(qs), m), np.nan)
    for col in range(m):
        w = sorted_w[:, col]
        total = totals[col]
        if total <= 0:
            continue
        w = w / total
        mask = w > 0
        v = sorted_vals[mask, col]
        w = w[mask]
        if len(v) == 1:
            out[:, col] = v[0]
            continue
        cum = np.cumsum(w)
        positions = (cum - w) / (1.0 - w).clip(min=np.finfo(float).tiny)
        positions = np.clip(positions, 0.0, 1.0)
        out[:, col] = np.interp(qs, positions, v)
    return out[:, 0] if squeeze else out


def predict_bands(
    genome: EquationGenome,
    ensemble: ParticleEnsemble,
    grid,
    level: float = 0.95,
    draws: int = 50,
    rng=None,
) -> PredictionBand:
    """Pointwise credible and prediction bands over an input grid.

    The credible band is a weighted quantile band of f(x, theta) over the
    particles; the prediction band repeats each particle ``draws`` times
    with noise e ~ N(0, sigma^2) added.  The MAP curve uses the
    highest-posterior-density particle.
    """
    if ensemble.degenerate:
        raise InferenceError("cannot predict from a degenerate ensemble")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    grid = np.asarray(grid, dtype=np.float64)
    x = grid[:, None] if grid.ndim == 1 else grid
    curves = evaluate_batch(genome, x, ensemble.thetas)  # (P, M)
    w = ensemble.weights
    alpha = (1.0 - level) / 2.0
    cred = weighted_quantiles(curves, w, [alpha, 1.0 - alpha])

    sigmas = ensemble.sigmas
    noisy = np.repeat(curves, draws, axis=0)
    noisy += np.repeat(sigmas, draws)[:, None] * rng.standard_normal(noisy.shape)
    w_noisy = np.repeat(w / draws, draws)
    pred = weighted_quantiles(noisy, w_noisy, [alpha, 1.0 - alpha])

    map_theta = ensemble.thetas[ensemble.map_index()]
    map_curve = evaluate_batch(genome, x, map_theta[None, :])[0]
    return PredictionBand(
        grid=grid,
        map_curve=map_curve,
        credible_lo=cred[0],
        credible_hi=cred[1],
        predictive_lo=pred[0],
        predictive_hi=pred[1],
        level=level,
    )
