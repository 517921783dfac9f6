"""Report figures (PNG) written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Trajectory  # noqa: E402

golden = (np.sqrt(5) - 1.0) / 2.0
RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "svg.hashsalt": "pcloc",
}

STATUS_COLORS = {"tracked": "#2b8cbe", "relocalized": "#fdae61", "lost": "#d7191c"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamp in the metadata so identical data gives identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trajectory(path, estimated: Trajectory, ground_truth: Trajectory | None = None,
                    title: str = "trajectory (top view)") -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 5.0 * golden + 0.8))
        if ground_truth is not None and len(ground_truth):
            g = ground_truth.positions
            ax.plot(g[:, 0], g[:, 1], color="0.5", ls="--", label="ground truth")
        if estimated is not None and len(estimated):
            e = estimated.positions
            ax.plot(e[:, 0], e[:, 1], color="#08589e", label="estimate")
            ax.plot(e[0, 0], e[0, 1], "o", color="#08589e", ms=4)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def plot_errors(path, pos_errors: np.ndarray, ang_errors: np.ndarray | None = None,
                frame_index: np.ndarray | None = None) -> Path:
    pos_errors = np.asarray(pos_errors)
    x = np.arange(len(pos_errors)) if frame_index is None else np.asarray(frame_index)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(2 if ang_errors is not None else 1, 1, sharex=True,
                               figsize=(6.0, 4.0 if ang_errors is not None else 2.4), squeeze=False)
        ax = ax[:, 0]
        ax[0].plot(x, pos_errors * 100, color="#2b8cbe")
        ax[0].set_ylabel("position error [cm]")
        if ang_errors is not None:
            ax[1].plot(x, ang_errors, color="#7b3294")
            ax[1].set_ylabel("rotation error [deg]")
        ax[-1].set_xlabel("frame")
        fig.tight_layout()
        return _save(fig, path)


def plot_frame_report(path, stats: Sequence) -> Path:
    """Inliers per frame coloured by status, and stacked per-stage timings."""
    frames = np.array([s.frame for s in stats])
    inl = np.array([s.inliers for s in stats])
    status = [s.status for s in stats]
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 4.2))
        for st, col in STATUS_COLORS.items():
            sel = np.array([s == st for s in status], dtype=bool)
            if sel.any():
                a0.scatter(frames[sel], inl[sel], s=4, color=col, label=st)
        a0.set_ylabel("inliers")
        a0.legend(loc="best", markerscale=2)
        bottom = np.zeros(len(stats))
        for name, col in (("ms_render", "#a8ddb5"), ("ms_match", "#4eb3d3"), ("ms_solve", "#08589e")):
            v = np.array([getattr(s, name) for s in stats])
            a1.bar(frames, v, bottom=bottom, width=1.0, color=col, label=name[3:], linewidth=0)
            bottom += v
        a1.set_ylabel("time [ms]")
        a1.set_xlabel("frame")
        a1.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def plot_study(path, rows: Sequence) -> Path:
    """Frames localized and position RMSE against decimation level, per arm."""
    arms = sorted({r.arm for r in rows})
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for arm in arms:
            rs = sorted((r for r in rows if r.arm == arm), key=lambda r: r.level)
            lv = [r.level for r in rs]
            a0.plot(lv, [r.frames_localized for r in rs], "o-", label=arm)
            a1.plot(lv, [r.pos_rmse_m * 100 for r in rs], "o-", label=arm)
        for a in (a0, a1):
            a.set_xscale("log")
            a.set_xlabel("kept fraction of points")
        a0.set_ylabel("frames localized")
        a1.set_ylabel("position RMSE [cm]")
        a0.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)
