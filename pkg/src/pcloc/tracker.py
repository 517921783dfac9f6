"""Render & Match tracking: render at the previous pose, match, lift, solve."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .cloud import PointCloud
from .config import PipelineConfig
from .errors import (InsufficientCorrespondences, PclocError, PoseNotFound, TrackingLost,
                     UnrenderableView)
from .features import FeatureSet, detect_and_describe, match_features
from .geometry import Intrinsics, RigidPose, Trajectory
from .lifting import lift_keypoints
from .pose import PoseEstimate, solve_pnp_ransac
from .renderer import render

STATUS_TRACKED = "tracked"
STATUS_RELOCALIZED = "relocalized"
STATUS_LOST = "lost"


@dataclass
class FrameStats:
    frame: int
    status: str
    inliers: int = 0
    mean_reproj_px: float = float("nan")
    ms_render: float = 0.0
    ms_match: float = 0.0
    ms_solve: float = 0.0

    CSV_HEADER = "frame,status,inliers,mean_reproj_px,ms_render,ms_match,ms_solve"

    def csv_row(self) -> str:
        return (f"{self.frame},{self.status},{self.inliers},{self.mean_reproj_px:.4f},"
                f"{self.ms_render:.2f},{self.ms_match:.2f},{self.ms_solve:.2f}")


@dataclass
class TrackerState:
    last_pose: RigidPose | None = None
    consecutive_failures: int = 0
    stats: list[FrameStats] = field(default_factory=list)

    @property
    def tracking(self) -> bool:
        return self.last_pose is not None

    def record_failure(self, max_failures: int) -> None:
        self.consecutive_failures += 1
        if self.consecutive_failures >= max_failures:
            self.last_pose = None

    def record_success(self, pose: RigidPose) -> None:
        self.last_pose = pose
        self.consecutive_failures = 0


@dataclass
class StepTiming:
    render: float = 0.0
    match: float = 0.0
    solve: float = 0.0


def render_match_correspondences(query: FeatureSet, render_pose: RigidPose, K: Intrinsics, cloud: PointCloud,
                                 config: PipelineConfig, timing: StepTiming | None = None,
                                 radius: float | None = None):
    """Render at ``render_pose``, match against ``query`` and lift the synthetic side.

    Returns ``(pixels, points)``: query pixel positions and the world points
    of their matches. ``radius`` (pixels) limits matches to keypoints that
    moved at most that far. Raises :class:`TrackingLost` when the view cannot
    be rendered.
    """
    t0 = time.perf_counter()
    try:
        view = render(cloud, render_pose, K, config.render)
    except UnrenderableView as e:
        raise TrackingLost(str(e)) from e
    t1 = time.perf_counter()
    synth = detect_and_describe(view.rgb, config.tracker.max_features, mask=view.support,
                                config=config.features)
    m = match_features(query, synth, radius=radius)
    X, ok = lift_keypoints(synth.xy[m.index_b], view, render_pose, K, cloud, config.lift, config.render)
    if timing is not None:
        timing.render += (t1 - t0) * 1e3
        timing.match += (time.perf_counter() - t1) * 1e3
    return query.xy[m.index_a[ok]], X[ok]


def render_match_solve(query: FeatureSet, render_pose: RigidPose, K: Intrinsics, cloud: PointCloud,
                       config: PipelineConfig, timing: StepTiming | None = None,
                       return_correspondences: bool = False, radius: float | None = None):
    """One tracking step against a view rendered at ``render_pose``.

    Raises :class:`TrackingLost` when the view cannot be rendered or too few
    matches survive, and propagates :class:`PoseNotFound` from RANSAC.
    """
    pixels, points = render_match_correspondences(query, render_pose, K, cloud, config, timing, radius)
    if len(points) < max(config.ransac.min_inliers, 6):
        raise TrackingLost(f"{len(points)} usable matches")
    t2 = time.perf_counter()
    try:
        est = solve_pnp_ransac(pixels, points, K, config.ransac)
    finally:
        if timing is not None:
            timing.solve += (time.perf_counter() - t2) * 1e3
    if return_correspondences:
        return est, pixels, points
    return est


def search_radius(config: PipelineConfig, frames_since_pose: int = 0) -> float | None:
    """Match gate in pixels: grows with the frames elapsed since the render pose."""
    r = config.tracker.search_radius
    return None if r <= 0 else r * (1 + frames_since_pose)


def track_frame(image: np.ndarray, K: Intrinsics, state: TrackerState, cloud: PointCloud,
                config: PipelineConfig = PipelineConfig(), frame: int | None = None,
                timing: StepTiming | None = None) -> PoseEstimate:
    """Track one live frame from ``state.last_pose`` and update the state.

    On failure the failure counter is increased (clearing ``last_pose`` after
    ``max_failures`` in a row) and :class:`TrackingLost` is raised.
    """
    if state.last_pose is None:
        raise TrackingLost("no previous pose")
    timing = timing if timing is not None else StepTiming()
    t0 = time.perf_counter()
    query = detect_and_describe(image, config.tracker.max_features, config=config.features)
    timing.match += (time.perf_counter() - t0) * 1e3
    try:
        est = render_match_solve(query, state.last_pose, K, cloud, config, timing,
                                 radius=search_radius(config, state.consecutive_failures))
    except (TrackingLost, PoseNotFound, InsufficientCorrespondences) as e:
        state.record_failure(config.tracker.max_failures)
        if frame is not None:
            state.stats.append(FrameStats(frame, STATUS_LOST, 0, float("nan"),
                                          timing.render, timing.match, timing.solve))
        raise TrackingLost(str(e)) from e
    state.record_success(est.pose)
    if frame is not None:
        state.stats.append(FrameStats(frame, STATUS_TRACKED, est.n_inliers, est.mean_reproj_error,
                                      timing.render, timing.match, timing.solve))
    return est


Relocalizer = Callable[[np.ndarray], PoseEstimate]


@dataclass
class SequenceResult:
    trajectory: Trajectory | None
    stats: list[FrameStats]
    estimates: dict[int, PoseEstimate]

    @property
    def localized_fraction(self) -> float:
        if not self.stats:
            return 0.0
        return sum(s.status != STATUS_LOST for s in self.stats) / len(self.stats)

    def write_report(self, path) -> None:
        with open(path, "w") as f:
            f.write(FrameStats.CSV_HEADER + "\n")
            for s in self.stats:
                f.write(s.csv_row() + "\n")


def run_sequence(frames: Iterable[tuple[float, np.ndarray]], K: Intrinsics, cloud: PointCloud,
                 relocalize: Relocalizer, config: PipelineConfig = PipelineConfig(),
                 initial_pose: RigidPose | None = None,
                 on_frame: Callable[[int, FrameStats], None] | None = None) -> SequenceResult:
    """Track a timestamped image stream, relocalizing whenever there is no prior pose.

    ``relocalize`` maps an image to a :class:`PoseEstimate` or raises a
    :class:`PclocError`. Only poses with at least ``min_inliers`` inliers are
    emitted.
    """
    state = TrackerState(last_pose=initial_pose)
    stamps: list[float] = []
    poses: list[RigidPose] = []
    estimates: dict[int, PoseEstimate] = {}
    for i, (ts, image) in enumerate(frames):
        timing = StepTiming()
        est = None
        if state.tracking:
            try:
                est = track_frame(image, K, state, cloud, config, frame=i, timing=timing)
            except TrackingLost:
                est = None
        else:
            t0 = time.perf_counter()
            try:
                est = relocalize(image)
            except PclocError:
                est = None
            dt = (time.perf_counter() - t0) * 1e3
            if est is not None and est.n_inliers >= config.ransac.min_inliers:
                state.record_success(est.pose)
                state.stats.append(FrameStats(i, STATUS_RELOCALIZED, est.n_inliers,
                                              est.mean_reproj_error, 0.0, dt, 0.0))
            else:
                est = None
                state.stats.append(FrameStats(i, STATUS_LOST, 0, float("nan"), 0.0, dt, 0.0))
        if est is not None:
            stamps.append(float(ts))
            poses.append(est.pose)
            estimates[i] = est
        if on_frame is not None:
            on_frame(i, state.stats[-1])
    traj = Trajectory(np.asarray(stamps), poses) if poses else None
    return SequenceResult(traj, state.stats, estimates)
