"""PNG figures for the CLI reports.

Figures are built on the object API with the Agg canvas, so nothing here
touches global pyplot state or needs a display.
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["plot_link_curve", "plot_power_curve", "plot_bandwidth_scan", "plot_study_errors"]

# fixed metadata keeps repeated runs byte-identical
_PNG_META = {"Software": None}
_SIZE = (5.0, 3.6)


def _new_axes():
    fig = Figure(figsize=_SIZE, dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    return path


def plot_link_curve(path, index, y, g_hat, mean_hat, response_name="y"):
    """Responses against the fitted index with the estimated mean curve."""
    order = np.argsort(index)
    fig, ax = _new_axes()
    ax.scatter(index, y, s=8, alpha=0.4, color="0.4", label="data")
    ax.plot(index[order], mean_hat[order], color="C0", lw=2, label=r"$\mu\{\hat g(t)\}$")
    if not np.allclose(g_hat, mean_hat):
        ax.plot(index[order], g_hat[order], color="C1", lw=1, ls="--", label=r"$\hat g(t)$")
    ax.set_xlabel(r"fitted index $\hat\beta^\top x$")
    ax.set_ylabel(response_name)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_power_curve(path, deltas, rates, level):
    fig, ax = _new_axes()
    ax.plot(deltas, rates, marker="o", color="C0")
    ax.axhline(level, color="0.5", lw=1, ls=":")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel(r"$\delta$")
    ax.set_ylabel("rejection rate")
    return _save(fig, path)


def plot_bandwidth_scan(path, grid, scores, selected):
    grid = np.asarray(grid, dtype=float)
    scores = np.asarray(scores, dtype=float)
    ok = np.isfinite(scores)
    fig, ax = _new_axes()
    ax.plot(grid[ok], scores[ok], marker="o", color="C0")
    ax.axvline(selected, color="C3", lw=1, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("bandwidth h")
    ax.set_ylabel("held-out quasi-likelihood")
    return _save(fig, path)


def plot_study_errors(path, errors):
    errors = np.asarray(errors, dtype=float)
    errors = errors[np.isfinite(errors)]
    fig, ax = _new_axes()
    if errors.size:
        ax.hist(errors, bins=min(20, max(5, errors.size // 3)), color="C0", alpha=0.8)
        ax.axvline(errors.mean(), color="C3", lw=1, ls="--")
    ax.set_xlabel(r"$\sum_s |\hat\beta_s - \beta_s|$")
    ax.set_ylabel("replications")
    return _save(fig, path)
