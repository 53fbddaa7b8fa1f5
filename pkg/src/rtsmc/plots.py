"""Report figures rendered next to the delimited outputs.

All functions write PNG files and return the path.  Matplotlib is imported
lazily so library use never drags in a GUI backend.
"""

from __future__ import annotations

import datetime

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def scenario_figure(scenario, path):
    """Three panels: the true R path, infections, and observed counts."""
    plt = _pyplot()
    days = np.arange(scenario.horizon)
    fig, axes = plt.subplots(3, 1, figsize=(9, 8), sharex=True)

    axes[0].plot(days, scenario.R_true, color="firebrick", lw=1.5, label="true R")
    axes[0].axhline(1.0, color="grey", lw=0.8, ls=":")
    for day in scenario.change_days:
        axes[0].axvline(day, color="grey", lw=0.8, ls="--")
    axes[0].set_ylabel("R")
    axes[0].legend(frameon=False)

    axes[1].plot(days, scenario.j_true, color="seagreen", lw=1.5, label="infections")
    axes[1].set_ylabel("daily infections")
    axes[1].legend(frameon=False)

    axes[2].plot(days, scenario.C_bar, color="steelblue", lw=1.5, label="expected observations")
    axes[2].plot(days, scenario.C_noisy, color="goldenrod", lw=0.8, alpha=0.8,
                 label="noisy observations")
    axes[2].set_ylabel("daily counts")
    axes[2].set_xlabel("day")
    axes[2].legend(frameon=False)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def estimates_figure(series, path, observed=None, truth=None, truth_start_date=None):
    """Three panels: observed counts with the reconstructed band, the R
    estimate with its credible band, and the change probability as bars.

    ``truth`` may be a Scenario whose day 0 falls on ``truth_start_date``;
    its R path and noise-free observation curve are then overlaid.
    """
    plt = _pyplot()
    dates = series.dates
    truth_dates = None
    if truth is not None and truth_start_date is not None:
        truth_dates = [truth_start_date + datetime.timedelta(days=i)
                       for i in range(truth.horizon)]
    fig, axes = plt.subplots(3, 1, figsize=(9, 8), sharex=True)

    ax = axes[0]
    if observed is not None:
        ax.plot(observed.dates, observed.counts, color="goldenrod", lw=0.8, label="observed")
    ax.plot(dates, series.c_pred_median, color="steelblue", lw=1.2, label="reconstructed")
    ax.fill_between(dates, series.c_pred_lo95, series.c_pred_hi95,
                    color="steelblue", alpha=0.25, lw=0)
    if truth_dates is not None:
        ax.plot(truth_dates, truth.C_bar, color="black", lw=0.8, ls="--",
                label="noise-free truth")
    ax.set_ylabel("daily counts")
    ax.legend(frameon=False, ncol=3)

    ax = axes[1]
    ax.plot(dates, series.r_median, color="black", lw=1.2, label="R estimate")
    ax.fill_between(dates, series.r_lo95, series.r_hi95, color="black", alpha=0.18, lw=0)
    if truth_dates is not None:
        ax.plot(truth_dates, truth.R_true, color="firebrick", lw=1.0, label="true R")
    ax.axhline(1.0, color="grey", lw=0.8, ls=":")
    ax.set_ylabel("R")
    ax.legend(frameon=False, ncol=2)

    ax = axes[2]
    ax.bar(dates, np.nan_to_num(series.p_change), width=1.0, color="seagreen")
    ax.set_ylabel("P(abrupt change)")
    ax.set_ylim(0, 1)
    ax.set_xlabel("date")

    fig.autofmt_xdate(rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
