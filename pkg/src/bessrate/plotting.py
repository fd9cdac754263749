"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(width=8.0, height=None, nrows=1):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    height = height or width * golden
    fig, axes = plt.subplots(nrows, 1, figsize=(width, height), sharex=True, squeeze=False)
    return fig, axes[:, 0]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return os.fspath(path)


@plt.rc_context(RC)
def plot_dispatch(result, path):
    """Load, net-of-solar load and optimized grid draw, with stored energy below."""
    hours = np.arange(result.p_grid_month.size) * result.dt
    fig, (ax, ax_soc) = _figure(10, 6, nrows=2)
    ax.plot(hours, result.p_load_month, lw=0.8, color="0.45", label="load")
    ax.plot(hours, np.maximum(result.p_load_month - result.p_solar_month, 0), lw=0.8,
            color="tab:orange", label="load - solar")
    ax.plot(hours, result.p_grid_month, lw=0.9, color="tab:blue", label="grid (optimized)")
    T = result.p_grid_month.size // result.days
    for d in result.cpp_days:
        ax.axvspan(d * T * result.dt, (d + 1) * T * result.dt, color="tab:red", alpha=0.08, lw=0)
    ax.set_ylabel("kW")
    ax.legend(loc="upper right", ncol=3, frameon=False)
    soc = np.concatenate([s.e_traj[1:] for s in result.daily_solutions])
    ax_soc.plot(hours, soc, lw=0.9, color="tab:green")
    ax_soc.set_ylabel("stored energy (kWh)")
    ax_soc.set_xlabel("hours from start of month")
    return _save(fig, path)


@plt.rc_context(RC)
def plot_projection(history, fits, path):
    """History and quadratic projection, one panel per charge."""
    names = sorted(history.series)
    fig, axes = _figure(7, 2.0 * len(names) + 0.5, nrows=len(names))
    for ax, name in zip(axes, names):
        fit = fits[name]
        years = np.asarray(history.years)
        ahead = years[-1] + 1 + np.arange(len(fit.projected))
        span = np.arange(len(years) + len(ahead))
        ax.plot(years, history.series[name], "o", ms=3, color="tab:blue", label="history")
        ax.plot(np.concatenate([years, ahead]), fit(span), lw=0.8, color="0.5", label="quadratic fit")
        if len(ahead):
            ax.plot(ahead, fit.projected, "s", ms=3, color="tab:orange", label="projected")
        ax.set_ylabel(name, fontsize=7)
    axes[0].legend(frameon=False, ncol=3)
    axes[-1].set_xlabel("year")
    return _save(fig, path)


@plt.rc_context(RC)
def plot_sensitivity(result, path):
    years = [run.year for run in result.runs]
    projected = [run.projected for run in result.runs]
    fig, axes = _figure(7, 5, nrows=2)
    for ax, which, label in zip(axes, ("savings_1", "savings_2"), ("Savings 1 (solar)", "Savings 2 (BESS)")):
        values = result.savings_series(which)
        ax.bar(years, values, color=["tab:orange" if p else "tab:blue" for p in projected])
        ax.set_ylabel(f"{label} ($)")
    axes[-1].set_xlabel("year (orange = projected)")
    return _save(fig, path)
