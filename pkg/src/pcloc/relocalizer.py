"""Cubemap keyframe database and global relocalization.

The database holds, for every face of a cubemap rendered at each grid
position, the descriptors of its keypoints and the world points they lift
to. A query is matched against each record, candidates are tried with
PnP-RANSAC in order of match count, and the first accepted pose is refined
by one render-and-match round.
"""

from __future__ import annotations

import io
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud, cloud_fingerprint
from .config import PipelineConfig, config_hash
from .errors import (EmptyRegion, FormatError, InsufficientCorrespondences, PoseNotFound,
                     RelocalizationFailed, TrackingLost, UnrenderableView)
from .features import DESCRIPTOR_BYTES, FeatureSet, detect_and_describe, match_descriptors
from .geometry import Intrinsics, RigidPose
from .lifting import lift_keypoints
from .pose import PoseEstimate, refine_pose, reprojection_errors, solve_pnp_ransac
from .renderer import render
from .tracker import render_match_solve, search_radius

DB_MAGIC = b"PCLOCDB1"
DB_VERSION = 1


@dataclass(frozen=True)
class RegionOfInterest:
    min: tuple[float, float, float]
    max: tuple[float, float, float]
    grid_step: float = 1.0
    # camera heights above the roi floor, meters
    height_levels: tuple[float, ...] = (1.6,)

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise ValueError("roi needs min < max on every axis")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if len(self.height_levels) == 0:
            raise ValueError("at least one height level is required")
        object.__setattr__(self, "min", tuple(float(v) for v in lo))
        object.__setattr__(self, "max", tuple(float(v) for v in hi))
        object.__setattr__(self, "height_levels", tuple(float(h) for h in self.height_levels))

    def _axis(self, a: int) -> np.ndarray:
        extent = self.max[a] - self.min[a]
        n = int(np.floor(extent / self.grid_step + 1e-9)) + 1
        start = self.min[a] + 0.5 * (extent - (n - 1) * self.grid_step)
        return start + self.grid_step * np.arange(n)

    def grid_positions(self) -> np.ndarray:
        """(N, 3) grid positions, centered in x/y, ordered by height, then y, then x."""
        xs, ys = self._axis(0), self._axis(1)
        out = []
        for h in self.height_levels:
            z = self.min[2] + h
            for y in ys:
                for x in xs:
                    out.append((x, y, z))
        return np.asarray(out, dtype=np.float64)

    def overlaps(self, cloud: PointCloud) -> bool:
        if len(cloud) == 0:
            return False
        lo, hi = cloud.bounds()
        return bool(np.all(np.asarray(self.min) <= hi) and np.all(np.asarray(self.max) >= lo))

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max), "grid_step": self.grid_step,
                "height_levels": list(self.height_levels)}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionOfInterest":
        return cls(tuple(d["min"]), tuple(d["max"]), float(d.get("grid_step", 1.0)),
                   tuple(d.get("height_levels", (1.6,))))


# camera axes (x right, y down, z forward) in world coordinates, per face
_FACE_AXES = (
    ((1, 0, 0), (0, 0, -1)),   # 0: +X
    ((-1, 0, 0), (0, 0, -1)),  # 1: -X
    ((0, 1, 0), (0, 0, -1)),   # 2: +Y
    ((0, -1, 0), (0, 0, -1)),  # 3: -Y
    ((0, 0, 1), (0, 1, 0)),    # 4: up
    ((0, 0, -1), (0, 1, 0)),   # 5: down
)


def cubemap_rotations() -> list[np.ndarray]:
    out = []
    for fwd, down in _FACE_AXES:
        z = np.asarray(fwd, dtype=np.float64)
        y = np.asarray(down, dtype=np.float64)
        x = np.cross(y, z)
        out.append(np.column_stack([x, y, z]))
    return out


def cubemap_poses(position) -> list[RigidPose]:
    p = np.asarray(position, dtype=np.float64)
    return [RigidPose(R, p) for R in cubemap_rotations()]


@dataclass(frozen=True)
class KeyframeRecord:
    pose: RigidPose
    face_id: int
    descriptors: np.ndarray  # (n, 32) uint8
    landmarks: np.ndarray  # (n, 3) float32, world

    def __post_init__(self):
        if len(self.descriptors) != len(self.landmarks):
            raise ValueError("descriptors and landmarks must have equal length")
        if not 0 <= self.face_id <= 5:
            raise ValueError("face_id must be in 0..5")
        d = np.ascontiguousarray(self.descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
        lm = np.ascontiguousarray(self.landmarks, dtype=np.float32).reshape(-1, 3)
        if not np.all(np.isfinite(lm)):
            raise ValueError("landmarks must be finite")
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "landmarks", lm)

    def __len__(self):
        return len(self.descriptors)


@dataclass
class KeyframeDatabase:
    records: list[KeyframeRecord]
    fingerprint: int
    config_hash: bytes = b"\0" * 32
    face_resolution: int = 512

    def __len__(self):
        return len(self.records)

    def check_cloud(self, cloud: PointCloud) -> bool:
        return cloud_fingerprint(cloud) == self.fingerprint

    def intrinsics(self) -> Intrinsics:
        return Intrinsics.cubemap(self.face_resolution)

    # -- serialization --------------------------------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(DB_MAGIC)
        buf.write(struct.pack("<IQ", DB_VERSION, self.fingerprint))
        buf.write(self.config_hash)
        buf.write(struct.pack("<II", self.face_resolution, len(self.records)))
        for r in self.records:
            buf.write(_pack_pose(r.pose))
            buf.write(struct.pack("<BI", r.face_id, len(r)))
            buf.write(r.descriptors.tobytes())
            buf.write(r.landmarks.astype("<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyframeDatabase":
        rd = _Reader(data)
        if rd.take(8) != DB_MAGIC:
            raise FormatError("not a keyframe database")
        version, fp = rd.unpack("<IQ")
        if version != DB_VERSION:
            raise FormatError(f"unsupported database version {version}")
        chash = rd.take(32)
        res, n = rd.unpack("<II")
        records = []
        for _ in range(n):
            pose = _unpack_pose(rd.take(56))
            face, cnt = rd.unpack("<BI")
            desc = np.frombuffer(rd.take(cnt * DESCRIPTOR_BYTES), dtype=np.uint8).reshape(cnt, DESCRIPTOR_BYTES)
            lm = np.frombuffer(rd.take(cnt * 12), dtype="<f4").reshape(cnt, 3)
            records.append(KeyframeRecord(pose, face, desc.copy(), lm.astype(np.float32)))
        rd.finish()
        return cls(records, fp, chash, res)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "KeyframeDatabase":
        return cls.from_bytes(Path(path).read_bytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError("trailing bytes after last record")


def _pack_pose(pose: RigidPose) -> bytes:
    """t (3) then quaternion x, y, z, w, as float64."""
    return struct.pack("<7d", *pose.translation, *pose.quaternion())


def _unpack_pose(b: bytes) -> RigidPose:
    v = struct.unpack("<7d", b)
    return RigidPose.from_quaternion(v[:3], v[3:])


def canonical_pose(pose: RigidPose) -> RigidPose:
    """The pose as it reads back from a file (rotation through its quaternion)."""
    return _unpack_pose(_pack_pose(pose))


# ---------------------------------------------------------------------------
# build


def _build_position(cloud, position, K, config: PipelineConfig):
    out = []
    for face, pose in enumerate(cubemap_poses(position)):
        pose = canonical_pose(pose)
        try:
            view = render(cloud, pose, K, config.render)
        except UnrenderableView:
            continue
        fs = detect_and_describe(view.rgb, config.reloc.max_features, mask=view.support,
                                 config=config.features)
        X, ok = lift_keypoints(fs.xy, view, pose, K, cloud, config.lift, config.render)
        if not ok.any():
            continue
        out.append(KeyframeRecord(pose, face, fs.descriptors[ok], X[ok]))
    return out


def database_config_hash(roi: RegionOfInterest, config: PipelineConfig) -> bytes:
    return config_hash("db", roi.to_dict(), config.render, config.features, config.lift,
                       config.reloc.face_resolution, config.reloc.max_features)


def build_database(cloud: PointCloud, roi: RegionOfInterest, config: PipelineConfig = PipelineConfig(),
                   threads: int = 1) -> KeyframeDatabase:
    """Render the six cubemap faces at every grid position and store their
    descriptors with lifted world points. Faces that cannot be rendered or
    yield no landmark are skipped; raises :class:`EmptyRegion` when nothing
    is left."""
    if not roi.overlaps(cloud):
        raise EmptyRegion("region of interest does not overlap the cloud")
    K = Intrinsics.cubemap(config.reloc.face_resolution)
    positions = roi.grid_positions()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda p: _build_position(cloud, p, K, config), positions))
    else:
        parts = [_build_position(cloud, p, K, config) for p in positions]
    records = [r for part in parts for r in part]
    if not records:
        raise EmptyRegion("no renderable keyframe in the region of interest")
    return KeyframeDatabase(records, cloud_fingerprint(cloud), database_config_hash(roi, config),
                            config.reloc.face_resolution)


# ---------------------------------------------------------------------------
# query


@dataclass
class RelocalizationResult:
    estimate: PoseEstimate
    coarse: PoseEstimate
    record_index: int
    refined: bool
    tried: list[int] = field(default_factory=list)


def rank_records(query: FeatureSet, db: KeyframeDatabase, config: PipelineConfig):
    """Records sorted by descending match count (ties by index), with their matches."""
    scored = []
    for i, rec in enumerate(db.records):
        m = match_descriptors(query.descriptors, rec.descriptors)
        scored.append((len(m), i, m))
    scored.sort(key=lambda s: (-s[0], s[1]))
    return scored


def relocalize_detailed(image: np.ndarray, K: Intrinsics, db: KeyframeDatabase, cloud: PointCloud,
                        config: PipelineConfig = PipelineConfig(), refine: bool = True) -> RelocalizationResult:
    if len(db) == 0:
        raise RelocalizationFailed("empty database")
    query = detect_and_describe(image, config.tracker.max_features, config=config.features)
    if len(query) < config.ransac.min_inliers:
        raise RelocalizationFailed(f"only {len(query)} query features")
    tried = []
    for count, i, m in rank_records(query, db, config)[: config.reloc.max_candidates]:
        if count < max(config.reloc.min_matches, config.ransac.min_inliers):
            break
        tried.append(i)
        rec = db.records[i]
        try:
            coarse = solve_pnp_ransac(query.xy[m.index_a], rec.landmarks[m.index_b].astype(np.float64),
                                      K, config.ransac)
        except (PoseNotFound, InsufficientCorrespondences):
            continue
        if not refine:
            return RelocalizationResult(coarse, coarse, i, False, tried)
        try:
            fine, pix, pts = render_match_solve(query, coarse.pose, K, cloud, config,
                                                return_correspondences=True, radius=search_radius(config))
        except (TrackingLost, PoseNotFound, InsufficientCorrespondences):
            return RelocalizationResult(coarse, coarse, i, False, tried)
        # polish on both inlier sets: the record's landmarks come from a sharper
        # cubemap render and pin the pose when the query sits near its grid point
        uv = np.vstack([pix[fine.inliers], query.xy[m.index_a[coarse.inliers]]])
        X = np.vstack([pts[fine.inliers], rec.landmarks[m.index_b[coarse.inliers]].astype(np.float64)])
        pose = refine_pose(fine.pose, uv, X, K)
        err = reprojection_errors(pose, pix, pts, K)
        inl = np.flatnonzero(err < config.ransac.reproj_threshold)
        if len(inl) >= config.ransac.min_inliers:
            fine = PoseEstimate(pose, inl, float(err[inl].mean()), fine.iterations, fine.refine_flagged)
        return RelocalizationResult(fine, coarse, i, True, tried)
    raise RelocalizationFailed(f"no record passed the inlier gate ({len(tried)} tried)")


def relocalize(image: np.ndarray, K: Intrinsics, db: KeyframeDatabase, cloud: PointCloud,
               config: PipelineConfig = PipelineConfig()) -> PoseEstimate:
    """Global pose of ``image``: coarse PnP against the database, then one
    render-and-match refinement at the coarse pose, polished on the inliers
    of both stages."""
    return relocalize_detailed(image, K, db, cloud, config).estimate
