"""Trajectory and image metrics, overlays, and the decimation study."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .cloud import PointCloud
from .config import PipelineConfig
from .errors import AlignmentError, PclocError
from .features import to_gray
from .geometry import Intrinsics, RigidPose, SimTransform, Trajectory, rotation_angle, umeyama_align


# ---------------------------------------------------------------------------
# absolute pose error


def associate(estimated: Trajectory, ground_truth: Trajectory, max_dt: float | None = None):
    """Nearest-timestamp pairs ``(est_idx, gt_idx)`` within ``max_dt`` seconds.

    ``max_dt`` defaults to half the median ground-truth frame period. Each
    ground-truth pose is used at most once (the closest estimate wins).
    """
    te = np.asarray(estimated.timestamps, dtype=np.float64)
    tg = np.asarray(ground_truth.timestamps, dtype=np.float64)
    if len(te) == 0 or len(tg) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if max_dt is None:
        max_dt = 0.5 * float(np.median(np.diff(tg))) if len(tg) > 1 else np.inf
    j = np.clip(np.searchsorted(tg, te), 1, max(len(tg) - 1, 1))
    left = np.abs(te - tg[j - 1])
    right = np.abs(tg[np.minimum(j, len(tg) - 1)] - te)
    gi = np.where(left <= right, j - 1, np.minimum(j, len(tg) - 1))
    dt = np.abs(tg[gi] - te)
    ok = dt <= max_dt + 1e-12
    ei = np.flatnonzero(ok)
    gi, dt = gi[ok], dt[ok]
    order = np.lexsort((dt, gi))
    first = np.ones(len(order), dtype=bool)
    first[1:] = gi[order][1:] != gi[order][:-1]
    keep = np.sort(order[first])
    return ei[keep], gi[keep]


@dataclass
class ApeResult:
    pos_rmse: float
    ang_rmse: float  # degrees
    n_matched: int
    n_unmatched: int
    alignment: SimTransform
    pos_errors: np.ndarray = field(repr=False)
    ang_errors: np.ndarray = field(repr=False)  # degrees
    gt_index: np.ndarray = field(repr=False)


def ape(estimated: Trajectory, ground_truth: Trajectory, mode: str = "SE3",
        max_dt: float | None = None) -> ApeResult:
    """Align ``estimated`` onto ``ground_truth`` (Umeyama, ``SE3`` or ``Sim3``)
    and measure positional and rotational residuals."""
    mode = mode.upper()
    if mode not in ("SE3", "SIM3"):
        raise ValueError(f"unknown alignment mode {mode!r}")
    ei, gi = associate(estimated, ground_truth, max_dt)
    if len(ei) < 3:
        raise AlignmentError(f"{len(ei)} associated poses, need at least 3")
    pe = estimated.positions[ei]
    pg = ground_truth.positions[gi]
    S = umeyama_align(pe, pg, with_scale=(mode == "SIM3"))
    pos_err = np.linalg.norm(S.apply(pe) - pg, axis=1)
    ang_err = np.array([
        np.degrees(rotation_angle(ground_truth.poses[g].rotation.T @ S.rotation @ estimated.poses[e].rotation))
        for e, g in zip(ei, gi)
    ])
    return ApeResult(
        float(np.sqrt(np.mean(pos_err ** 2))),
        float(np.sqrt(np.mean(ang_err ** 2))),
        len(ei),
        len(estimated) - len(ei),
        S,
        pos_err,
        ang_err,
        gi,
    )


def ape_rmse(estimated: Trajectory, ground_truth: Trajectory, mode: str = "SE3") -> tuple[float, float, int]:
    """``(pos_rmse [m], ang_rmse [deg], n_matched)``."""
    r = ape(estimated, ground_truth, mode)
    return r.pos_rmse, r.ang_rmse, r.n_matched


# ---------------------------------------------------------------------------
# images

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


def _luma(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 3:
        return to_gray(img).astype(np.float64)
    return img.astype(np.float64)


def ssim_map(a, b) -> np.ndarray:
    x, y = _luma(a), _luma(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    if min(x.shape) < 2 * SSIM_RADIUS + 1:
        raise ValueError("images must be at least 11 x 11")

    def blur(v):
        return ndimage.gaussian_filter(v, SSIM_SIGMA, mode="reflect", truncate=SSIM_RADIUS / SSIM_SIGMA)

    mx, my = blur(x), blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return num / den


def ssim(a, b) -> float:
    """Mean local SSIM on the grayscale images, ignoring a window-radius border."""
    s = ssim_map(a, b)
    r = SSIM_RADIUS
    return float(s[r:-r, r:-r].mean())


def overlay(camera: np.ndarray, render: np.ndarray, alpha: float = 0.5,
            valid: np.ndarray | None = None) -> np.ndarray:
    """Blend ``render`` over ``camera``; pixels outside ``valid`` show the camera only."""
    cam = np.asarray(camera)
    ren = np.asarray(render)
    if cam.shape != ren.shape:
        raise ValueError(f"image shapes differ: {cam.shape} vs {ren.shape}")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    out = (1 - alpha) * cam.astype(np.float64) + alpha * ren.astype(np.float64)
    if valid is not None:
        v = np.asarray(valid, dtype=bool)
        if cam.ndim == 3:
            v = v[..., None]
        out = np.where(v, out, cam)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# decimation study

STUDY_HEADER = ("method", "arm", "level", "n_points", "pos_rmse_m", "ang_rmse_deg", "frames_localized",
                "frames_total", "fps", "preprocess_s", "error")


@dataclass
class StudyRow:
    method: str
    arm: str
    level: float
    n_points: int
    pos_rmse_m: float = float("nan")
    ang_rmse_deg: float = float("nan")
    frames_localized: int = 0
    frames_total: int = 0
    fps: float = float("nan")
    preprocess_s: float = 0.0
    error: str = ""

    def values(self, timing: bool = True) -> list[str]:
        fps = f"{self.fps:.3f}" if timing else ""
        pre = f"{self.preprocess_s:.3f}" if timing else ""
        return [self.method, self.arm, f"{self.level:g}", str(self.n_points), f"{self.pos_rmse_m:.6f}",
                f"{self.ang_rmse_deg:.6f}", str(self.frames_localized), str(self.frames_total), fps, pre,
                self.error]


def write_study_csv(rows: Sequence[StudyRow], path: str | Path, timing: bool = True) -> None:
    """Write the study table. ``timing=False`` blanks the wall-clock columns,
    which is what makes two runs byte-comparable."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(STUDY_HEADER)
        for r in rows:
            w.writerow(r.values(timing))


def _run_method(method, cloud, frames, K, config, roi, initial_pose, threads):
    from .mapping import build_map, localize_sequence
    from .relocalizer import build_database, relocalize
    from .tracker import run_sequence

    t0 = time.perf_counter()
    if method == "pl":
        m = build_map(cloud, roi, K, config, threads)
        pre = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = localize_sequence(frames, K, m, config)
    else:
        if initial_pose is None:
            db = build_database(cloud, roi, config, threads)

            def reloc(img):
                return relocalize(img, K, db, cloud, config)
        else:
            def reloc(img):
                from .errors import RelocalizationFailed
                raise RelocalizationFailed("no database in this run")
        pre = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = run_sequence(frames, K, cloud, reloc, config, initial_pose=initial_pose)
    return res, pre, time.perf_counter() - t1


def decimation_study(cloud: PointCloud, frames: Sequence[tuple[float, np.ndarray]], ground_truth: Trajectory,
                     K: Intrinsics, levels: Sequence[float], method: str = "rm",
                     config: PipelineConfig = PipelineConfig(), arms: Sequence[str] = ("full",),
                     roi=None, initial_pose: RigidPose | None = None, seed: int = 0,
                     threads: int = 1) -> list[StudyRow]:
    """Run ``method`` (``rm`` or ``pl``) end to end on decimated copies of the cloud.

    ``arms`` may hold ``full`` and ``point_based`` (depth filter and hole
    filling off). R&M is bootstrapped from ``initial_pose`` when given,
    otherwise by relocalization against a database built over ``roi``; P&L
    always builds its map over ``roi``. A failing level is recorded with its
    error and the study moves on.
    """
    method = method.lower()
    if method not in ("rm", "pl"):
        raise ValueError("method must be 'rm' or 'pl'")
    if any(not 0 < lv <= 1 for lv in levels):
        raise ValueError("levels must lie in (0, 1]")
    if (method == "pl" or initial_pose is None) and roi is None:
        raise ValueError("a region of interest is needed to build the database or map")
    frames = list(frames)
    rows = []
    for lv in levels:
        sub = cloud.decimate(lv, seed=seed)
        for arm in arms:
            if arm == "full":
                cfg = config
            elif arm == "point_based":
                cfg = config.replace(render=config.render.point_based())
            else:
                raise ValueError(f"unknown arm {arm!r}")
            row = StudyRow(method, arm, float(lv), len(sub), frames_total=len(frames))
            try:
                res, pre, run_s = _run_method(method, sub, frames, K, cfg, roi, initial_pose, threads)
                row.preprocess_s = pre
                row.fps = len(frames) / run_s if run_s > 0 else float("inf")
                row.frames_localized = sum(s.status != "lost" for s in res.stats)
                if res.trajectory is not None and len(res.trajectory) >= 3:
                    r = ape(res.trajectory, ground_truth, "SE3")
                    row.pos_rmse_m, row.ang_rmse_deg = r.pos_rmse, r.ang_rmse
            except PclocError as e:
                row.error = f"{type(e).__name__}: {e}"
            rows.append(row)
    return rows
