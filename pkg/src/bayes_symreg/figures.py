"""Figure rendering for the CLI report path.

Every figure is drawn from the same delimited data the CLI writes, so the
plots are a presentation layer only; analyses can always be redone from
the CSV/JSONL artifacts.  All functions write a PNG and return its path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BAND_KW = dict(alpha=0.25, linewidth=0)
_DPI = 150


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def band_figure(band, data_x, data_y, path, title: str = "", truth=None) -> Path:
    """Probabilistic fit: MAP curve, credible/prediction bands, data points."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    grid = band.grid if band.grid.ndim == 1 else band.grid[:, 0]
    pct = int(round(band.level * 100))
    ax.fill_between(grid, band.predictive_lo, band.predictive_hi, color="tab:orange",
                    label=f"{pct}% prediction", **_BAND_KW)
    ax.fill_between(grid, band.credible_lo, band.credible_hi, color="tab:blue",
                    label=f"{pct}% credible", **_BAND_KW)
    ax.plot(grid, band.map_curve, color="tab:blue", label="MAP")
    if truth is not None:
        ax.plot(grid, truth, color="k", linestyle="--", linewidth=1, label="truth")
    ax.scatter(np.asarray(data_x).ravel(), data_y, color="k", s=18, zorder=5, label="data")
    ax.set_xlabel("x_0")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def polynomial_fitness_figure(orders, rmse_norm, log_q, path) -> Path:
    """Evidence vs error for the polynomial order sweep (two aligned axes)."""
    fig, ax1 = plt.subplots(figsize=(6.4, 4.2))
    ax1.plot(orders, rmse_norm, "o-", color="tab:red", label="RMSE / sigma")
    ax1.set_xlabel("polynomial order")
    ax1.set_ylabel("normalized RMSE", color="tab:red")
    ax1.tick_params(axis="y", labelcolor="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(orders, log_q, "s-", color="tab:blue", label="log q(gamma)")
    ax2.set_ylabel("log q(gamma)", color="tab:blue")
    ax2.tick_params(axis="y", labelcolor="tab:blue")
    fig.legend(loc="upper center", ncol=2, fontsize=8)
    return _save(fig, path)


def evolution_figure(logs, path) -> Path:
    """Error and bloat trajectories across generations."""
    gens = [rec["generation"] for rec in logs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.0))
    train = [rec["best_train_rmse"] for rec in logs]
    ax1.plot(gens, train, label="train RMSE", color="tab:blue")
    if logs and logs[0].get("best_test_rmse") is not None:
        test = [rec["best_test_rmse"] for rec in logs]
        ax1.plot(gens, test, label="test RMSE", color="tab:orange")
    ax1.set_xlabel("generation")
    ax1.set_ylabel("RMSE")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    ax2.plot(gens, [rec["mean_complexity"] for rec in logs], label="mean complexity",
             color="tab:green")
    ax2.plot(gens, [rec["mean_param_count"] for rec in logs], label="mean #parameters",
             color="tab:purple")
    ax2.set_xlabel("generation")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def posterior_figure(marginals, path) -> Path:
    """Marginal density estimates for each parameter and the noise scale."""
    names = list(marginals)
    cols = min(3, len(names))
    rows = (len(names) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.4 * cols, 2.8 * rows), squeeze=False)
    for ax in axes.ravel()[len(names):]:
        ax.axis("off")
    for name, ax in zip(names, axes.ravel()):
        grid, density = marginals[name]
        ax.fill_between(grid, density, color="tab:blue", alpha=0.4)
        ax.plot(grid, density, color="tab:blue")
        ax.set_xlabel(name)
        ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)


def sweep_figure(rows, path) -> Path:
    """Median final test error vs noise level, one line per mode."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    modes = sorted({r["mode"] for r in rows})
    sigmas = sorted({r["sigma"] for r in rows})
    for mode, color in zip(modes, ("tab:blue", "tab:red", "tab:green")):
        medians = [
            float(np.median([r["final_test_rmse"] for r in rows
                             if r["mode"] == mode and r["sigma"] == s]))
            for s in sigmas
        ]
        ax.plot(sigmas, medians, "o-", color=color, label=mode)
    ax.plot(sigmas, sigmas, "k--", linewidth=1, label="noise floor")
    ax.set_xlabel("noise sigma")
    ax.set_ylabel("median final test RMSE")
    ax.legend(fontsize=8)
    return _save(fig, path)
