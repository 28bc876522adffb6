"""Figure builders: semilog convergence curve and rate scatter.

Both are pure functions of the CSV content; nothing is recomputed from the
underlying experiments.  The convergence overlay refits the plotted points
with the same convention the producer uses (ordinary least squares of the
log values over the entries above ``max(1e-20, 1e-12 * initial)``).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first
import numpy as np  # noqa: E402

from proxvr_plots.csvio import read_rates, read_trajectory  # noqa: E402

__all__ = ["plot_convergence", "plot_rate_scatter"]


def _log_linear_fit(k: np.ndarray, y: np.ndarray):
    floor = max(1e-20, 1e-12 * float(y[0]))
    mask = y > floor
    kk = k[mask]
    ln_y = np.log(y[mask])
    kc = kk - kk.mean()
    slope = float(kc @ (ln_y - ln_y.mean())) / float(kc @ kc)
    intercept = float(ln_y.mean() - slope * kk.mean())
    residuals = ln_y - (intercept + slope * kk)
    centred = ln_y - ln_y.mean()
    ss_tot = float(centred @ centred)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(residuals @ residuals) / ss_tot
    return slope, intercept, r_squared, mask


def plot_convergence(trajectory_csv: str | Path, out_image: str | Path):
    """Semilog-y mean squared distance against the iteration counter, with
    the fitted geometric decay overlaid and its parameters in the legend."""
    data = read_trajectory(trajectory_csv)
    k = data["k"]
    y = data["mean_sq_dist"]
    slope, intercept, r_squared, mask = _log_linear_fit(k, y)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(k, y, lw=1.4, label="mean squared distance")
    ax.semilogy(
        k[mask],
        np.exp(intercept + slope * k[mask]),
        ls="--",
        c="tab:red",
        label=(
            f"fit: slope {slope:.4g}, per-step factor {np.exp(slope):.4f}, "
            f"$R^2$ = {r_squared:.4f}"
        ),
    )
    ax.set_xlabel("iteration $k$")
    ax.set_ylabel(r"mean $\|x_k - x_\ast\|^2$")
    ax.legend(loc="best", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)
    return fig


def plot_rate_scatter(rates_csv: str | Path, out_image: str | Path):
    """Scatter of empirical against theoretical per-step factors with the
    dashed identity line; the legend states the axis orientation since
    points below the line are the theory-favorable ones."""
    rows = read_rates(rates_csv)
    theory = np.array([row["rho_theory"] for row in rows])
    empirical = np.array([row["rho_emp"] for row in rows])

    fig, ax = plt.subplots(figsize=(5.4, 5.0))
    lo = min(theory.min(), empirical.min())
    hi = max(theory.max(), empirical.max())
    pad = 0.05 * max(hi - lo, 1e-3)
    span = (lo - pad, hi + pad)
    ax.plot(span, span, ls="--", c="tab:red", label="identity $y = x$")
    ax.scatter(theory, empirical, s=36, zorder=3, label="cells (x: theory, y: empirical)")
    ax.set_xlim(*span)
    ax.set_ylim(*span)
    ax.set_xlabel("theoretical per-step factor")
    ax.set_ylabel("empirical per-step factor")
    ax.legend(loc="best", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)
    return fig
