"""SVG line and stacked charts with reproducible bytes."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .distributions import PARAMETER_NAMES  # noqa: E402
from .io import atomic_write  # noqa: E402

__all__ = ["plot_trajectory", "plot_densities", "plot_band", "plot_sensitivity"]

_RC = {"svg.hashsalt": "softfinger", "svg.fonttype": "none", "figure.figsize": (6.4, 4.0)}


def _save(fig, path) -> Path:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def plot_trajectory(path, traj, title: str = "") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for j in range(traj.n_joints):
            ax.plot(traj.times, traj.angles[:, j], label=f"joint {j + 1}")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("q [rad]")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_densities(path, curves, title: str = "") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for curve in curves:
            ax.plot(curve.support, curve.density, label=f"t = {curve.time:g} s")
        ax.set_xlabel("q [rad]")
        ax.set_ylabel("density [1/rad]")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_band(path, band, title: str = "") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.fill_between(band.times, band.lower, band.upper, alpha=0.3, label="EV +- SD")
        ax.plot(band.times, band.expected_value, label="EV")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("q [rad]")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_sensitivity(path, series, title: str = "") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        values = [np.nan_to_num(np.clip(series.indices[name], 0, None)) for name in PARAMETER_NAMES]
        ax.stackplot(series.times, values, labels=[f"S_{name}" for name in PARAMETER_NAMES])
        ax.set_xlabel("t [s]")
        ax.set_ylabel("first-order index")
        ax.set_ylim(0, 1.05)
        ax.set_title(title)
        ax.legend(loc="lower right")
        return _save(fig, path)
