"""Matplotlib PNG figures for run reports.

Rendered with the Agg backend; PNG metadata is stripped so repeated runs
produce identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import errors_over_time  # noqa: E402
from .overlay import STYLES, TARGET_COLOUR  # noqa: E402
from .trajectory import Trajectory  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "cineflight",
}
DPI = 120


def _save(fig, path) -> None:
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)


def _line_kw(key):
    _, label, colour, dash = next(s for s in STYLES if s[0] == key)
    return {"label": label, "color": colour, "linestyle": "--" if dash else "-", "linewidth": 1.5}


def plot_overlay(path, reference: Trajectory | None = None, estimated: Trajectory | None = None,
                 executed: Trajectory | None = None, target=None) -> None:
    """Top-down view of the trajectories and the shot target."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 4.8))
        for key, traj in (("reference", reference), ("estimated", estimated),
                          ("executed", executed)):
            if traj is not None and len(traj):
                ax.plot(traj.pos[:, 0], traj.pos[:, 1], **_line_kw(key))
        if target is not None:
            ax.plot([target[0]], [target[1]], "o", color=TARGET_COLOUR, markersize=9,
                    alpha=0.6, label="target")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(loc="upper right")
        fig.tight_layout()
        _save(fig, path)


def plot_tracking_error(path, reference: Trajectory, estimated: Trajectory | None = None,
                        executed: Trajectory | None = None) -> None:
    """Position error against the reference over time (metres)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        for key, traj in (("estimated", estimated), ("executed", executed)):
            if traj is not None and len(traj):
                t, err = errors_over_time(reference, traj)
                ax.plot(t, err, **_line_kw(key))
        ax.set_xlabel("t [s]")
        ax.set_ylabel("position error [m]")
        ax.set_ylim(bottom=0.0)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="upper left")
        fig.tight_layout()
        _save(fig, path)


def plot_control(path, log) -> None:
    """Commanded accelerations per axis from a control log."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(6.0, 4.4), sharex=True)
        for i, (axis, colour) in enumerate(zip("xyz", ("#1f77b4", "#ff7f0e", "#2ca02c"))):
            axes[0].plot(log.t, log.u[:, i], color=colour, linewidth=1.0, label=f"u_{axis}")
            axes[1].plot(log.t, log.error[:, i], color=colour, linewidth=1.0, label=f"e_{axis}")
        axes[0].set_ylabel("accel. cmd [m/s²]")
        axes[1].set_ylabel("error [m]")
        axes[1].set_xlabel("t [s]")
        axes[0].legend(loc="upper right", ncol=3)
        axes[1].legend(loc="upper right", ncol=3)
        fig.tight_layout()
        _save(fig, path)

