"""Prebuild & Localize: a landmark map from rendered keyframes at grid poses.

Keyframes are rendered with the live camera intrinsics at every grid
position, looking in 4 (or 8) horizontal directions, each pitched up and
down. Their lifted keypoints are provisional landmarks; landmarks of
different keyframes that reproject onto each other's keypoints with similar
descriptors and depth are merged, and landmarks seen by only one keyframe
are dropped.
"""

from __future__ import annotations

import dataclasses
import io
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, cloud_fingerprint
from .config import PipelineConfig, config_hash
from .errors import (EmptyRegion, FormatError, InsufficientCorrespondences, LocalizationFailed,
                     PoseNotFound, UnrenderableView)
from .features import DESCRIPTOR_BYTES, FeatureSet, detect_and_describe, hamming_matrix, hamming_rows, match_descriptors
from .geometry import Intrinsics, RigidPose, Trajectory
from .lifting import lift_keypoints
from .pose import PoseEstimate, solve_pnp_ransac
from .tracker import STATUS_LOST, STATUS_RELOCALIZED, STATUS_TRACKED, FrameStats, SequenceResult
from .relocalizer import RegionOfInterest, _Reader
from .renderer import render

MAP_MAGIC = b"PCLOCMAP1"
MAP_VERSION = 1


@dataclass
class MapKeyframe:
    """A rendered keyframe. The pose is stored as translation + quaternion so
    that it survives serialization bit for bit."""

    translation: np.ndarray  # (3,)
    quaternion: np.ndarray  # (4,) x, y, z, w
    intrinsics: Intrinsics
    keypoints: np.ndarray  # (n, 2) float32
    descriptors: np.ndarray  # (n, 32) uint8
    # keypoint index -> landmark id
    observations: dict[int, int] = field(default_factory=dict)
    _pose: RigidPose | None = field(default=None, repr=False, compare=False)

    @property
    def pose(self) -> RigidPose:
        if self._pose is None:
            self._pose = RigidPose.from_quaternion(self.translation, self.quaternion)
        return self._pose

    def __len__(self):
        return len(self.keypoints)


@dataclass
class Landmark:
    id: int
    position: np.ndarray  # (3,) float32
    descriptor: np.ndarray  # (32,) uint8
    # (keyframe id, keypoint index), sorted
    observations: list[tuple[int, int]]

    @property
    def keyframe_ids(self) -> list[int]:
        return sorted({k for k, _ in self.observations})


@dataclass
class SlamMap:
    keyframes: list[MapKeyframe]
    landmarks: list[Landmark]
    fingerprint: int
    config_hash: bytes = b"\0" * 32

    def landmark_by_id(self) -> dict[int, int]:
        return {lm.id: i for i, lm in enumerate(self.landmarks)}

    def check_integrity(self) -> None:
        """Raise ``ValueError`` unless keyframe and landmark observations agree exactly."""
        pos = self.landmark_by_id()
        if len(pos) != len(self.landmarks):
            raise ValueError("duplicate landmark ids")
        forward = set()
        for k, kf in enumerate(self.keyframes):
            for kp, lid in kf.observations.items():
                if not 0 <= kp < len(kf):
                    raise ValueError(f"keyframe {k}: keypoint index {kp} out of range")
                if lid not in pos:
                    raise ValueError(f"keyframe {k}: unknown landmark {lid}")
                forward.add((lid, k, kp))
        backward = {(lm.id, k, kp) for lm in self.landmarks for k, kp in lm.observations}
        if forward != backward:
            raise ValueError("keyframe and landmark observations disagree")
        for lm in self.landmarks:
            if len(lm.keyframe_ids) < 2:
                raise ValueError(f"landmark {lm.id} has fewer than 2 observing keyframes")

    def positions(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, 3), dtype=np.float32)
        return np.array([lm.position for lm in self.landmarks], dtype=np.float32)

    def descriptors(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
        return np.array([lm.descriptor for lm in self.landmarks], dtype=np.uint8)

    # -- serialization --------------------------------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAP_MAGIC)
        buf.write(struct.pack("<IQ", MAP_VERSION, self.fingerprint))
        buf.write(self.config_hash)
        buf.write(struct.pack("<I", len(self.keyframes)))
        for kf in self.keyframes:
            buf.write(struct.pack("<7d", *kf.translation, *kf.quaternion))
            buf.write(struct.pack("<6d", *kf.intrinsics.as_tuple()))
            buf.write(struct.pack("<I", len(kf)))
            buf.write(kf.descriptors.tobytes())
            buf.write(kf.keypoints.astype("<f4").tobytes())
        buf.write(struct.pack("<I", len(self.landmarks)))
        for lm in self.landmarks:
            buf.write(struct.pack("<I3f", lm.id, *lm.position))
            buf.write(lm.descriptor.tobytes())
            obs = np.asarray(lm.observations, dtype="<u4").reshape(-1, 2)
            buf.write(struct.pack("<I", len(obs)))
            buf.write(obs.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SlamMap":
        rd = _Reader(data)
        if rd.take(len(MAP_MAGIC)) != MAP_MAGIC:
            raise FormatError("not a landmark map")
        version, fp = rd.unpack("<IQ")
        if version != MAP_VERSION:
            raise FormatError(f"unsupported map version {version}")
        chash = rd.take(32)
        (nk,) = rd.unpack("<I")
        kfs = []
        for _ in range(nk):
            v = rd.unpack("<7d")
            fx, fy, cx, cy, w, h = rd.unpack("<6d")
            K = Intrinsics(fx, fy, cx, cy, int(w), int(h))
            (n,) = rd.unpack("<I")
            desc = np.frombuffer(rd.take(n * DESCRIPTOR_BYTES), dtype=np.uint8).reshape(n, DESCRIPTOR_BYTES)
            kp = np.frombuffer(rd.take(n * 8), dtype="<f4").reshape(n, 2)
            kfs.append(MapKeyframe(np.array(v[:3]), np.array(v[3:]), K, kp.astype(np.float32),
                                   desc.copy()))
        (nl,) = rd.unpack("<I")
        lms = []
        for _ in range(nl):
            lid, x, y, z = rd.unpack("<I3f")
            d = np.frombuffer(rd.take(DESCRIPTOR_BYTES), dtype=np.uint8).copy()
            (no,) = rd.unpack("<I")
            obs = np.frombuffer(rd.take(no * 8), dtype="<u4").reshape(no, 2)
            pairs = [(int(a), int(b)) for a, b in obs]
            for k, kp in pairs:
                if k >= nk:
                    raise FormatError(f"landmark {lid} references keyframe {k}")
                kfs[k].observations[kp] = lid
            lms.append(Landmark(lid, np.array([x, y, z], dtype=np.float32), d, pairs))
        rd.finish()
        return cls(kfs, lms, fp, chash)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "SlamMap":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# keyframe poses


def _quat_mul(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


# camera looking along +X with z up: x_cam = -Y, y_cam = -Z, z_cam = +X
_Q_BASE = np.array([0.5, -0.5, 0.5, -0.5])


def keyframe_orientations(n_directions: int = 4, pitch_deg: float = 15.0) -> list[np.ndarray]:
    """Quaternions (x, y, z, w) for each direction, pitched up then down."""
    out = []
    p = np.radians(pitch_deg)
    for k in range(n_directions):
        yaw = 2 * np.pi * k / n_directions
        q_yaw = np.array([0.0, 0.0, np.sin(yaw / 2), np.cos(yaw / 2)])
        for s in (1.0, -1.0):
            # a positive turn about the camera x axis tilts the view up (y points down)
            q_pitch = np.array([np.sin(s * p / 2), 0.0, 0.0, np.cos(s * p / 2)])
            q = _quat_mul(_quat_mul(q_yaw, _Q_BASE), q_pitch)
            out.append(q / np.linalg.norm(q))
    return out


def keyframe_poses(roi: RegionOfInterest, config: PipelineConfig = PipelineConfig()) -> list[tuple[np.ndarray, np.ndarray]]:
    """(translation, quaternion) of every keyframe, in keyframe id order."""
    quats = keyframe_orientations(config.map.n_directions, config.map.pitch_deg)
    return [(pos.copy(), q) for pos in roi.grid_positions() for q in quats]


# ---------------------------------------------------------------------------
# build


@dataclass
class _Provisional:
    keyframes: list[MapKeyframe]
    points: list[np.ndarray]  # per keyframe, (n, 3) float64 world


def _render_keyframe(cloud, t, q, K, config: PipelineConfig):
    kf = MapKeyframe(t, q, K, np.zeros((0, 2), np.float32), np.zeros((0, DESCRIPTOR_BYTES), np.uint8))
    try:
        view = render(cloud, kf.pose, K, config.render)
    except UnrenderableView:
        return None
    fs = detect_and_describe(view.rgb, config.map.max_features, mask=view.support, config=config.features)
    X, ok = lift_keypoints(fs.xy, view, kf.pose, K, cloud, config.lift, config.render)
    if not ok.any():
        return None
    kf.keypoints = fs.xy[ok].astype(np.float32)
    kf.descriptors = fs.descriptors[ok]
    return kf, X[ok]


def _extract(cloud, roi, K, config, threads) -> _Provisional:
    poses = keyframe_poses(roi, config)
    job = lambda tq: _render_keyframe(cloud, tq[0], tq[1], K, config)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(job, poses))
    else:
        res = [job(tq) for tq in poses]
    res = [r for r in res if r is not None]
    return _Provisional([r[0] for r in res], [r[1] for r in res])


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # the smaller (keyframe, keypoint) id becomes the root
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def _keypoint_grid(kf: MapKeyframe) -> np.ndarray:
    K = kf.intrinsics
    grid = np.full((K.height, K.width), -1, dtype=np.int64)
    c = np.clip(np.floor(kf.keypoints[:, 0] + 0.5).astype(np.int64), 0, K.width - 1)
    r = np.clip(np.floor(kf.keypoints[:, 1] + 0.5).astype(np.int64), 0, K.height - 1)
    # keypoints are NMS-separated, so one per pixel; later duplicates keep the first
    order = np.arange(len(c))[::-1]
    grid[r[order], c[order]] = order
    return grid


def find_correspondences(prov: _Provisional, config: PipelineConfig = PipelineConfig()) -> list[tuple[int, int, int, int]]:
    """All (keyframe b, keypoint j, keyframe a, keypoint i) where landmark (b, j)
    reprojects into keyframe a within the window around keypoint i, with
    descriptor and depth agreement. Ordered by (a, b, j)."""
    win = config.map.merge_window
    reach = int(np.ceil(win)) + 1
    offs = [(dy, dx) for dy in range(-reach, reach + 1) for dx in range(-reach, reach + 1)]
    out = []
    for a, kfa in enumerate(prov.keyframes):
        if len(kfa) == 0:
            continue
        K = kfa.intrinsics
        w2c = kfa.pose.inverse()
        grid = _keypoint_grid(kfa)
        za = (prov.points[a] @ w2c.rotation.T + w2c.translation)[:, 2]
        for b, kfb in enumerate(prov.keyframes):
            if b == a or len(kfb) == 0:
                continue
            P = prov.points[b] @ w2c.rotation.T + w2c.translation
            front = P[:, 2] > 1e-6
            if not front.any():
                continue
            z = np.where(front, P[:, 2], 1.0)
            u = K.fx * P[:, 0] / z + K.cx
            v = K.fy * P[:, 1] / z + K.cy
            inside = front & (u > -win) & (u < K.width - 1 + win) & (v > -win) & (v < K.height - 1 + win)
            js = np.flatnonzero(inside)
            if len(js) == 0:
                continue
            uc = np.floor(u[js] + 0.5).astype(np.int64)
            vc = np.floor(v[js] + 0.5).astype(np.int64)
            cand = np.full(len(js), -1, dtype=np.int64)
            for dy, dx in offs:
                rr, cc = vc + dy, uc + dx
                okp = (rr >= 0) & (rr < K.height) & (cc >= 0) & (cc < K.width)
                g = np.where(okp, grid[np.clip(rr, 0, K.height - 1), np.clip(cc, 0, K.width - 1)], -1)
                hit = g >= 0
                kp = kfa.keypoints[np.maximum(g, 0)]
                hit &= (np.abs(kp[:, 0] - u[js]) <= win) & (np.abs(kp[:, 1] - v[js]) <= win)
                # keypoints are further apart than the window, a hit is unique
                cand = np.where(hit & (cand < 0), g, cand)
            sel = cand >= 0
            if not sel.any():
                continue
            js, ii = js[sel], cand[sel]
            band = config.render.band(za[ii])
            ok = np.abs(z[js] - za[ii]) <= band
            if not ok.any():
                continue
            js, ii = js[ok], ii[ok]
            dist = hamming_rows(kfa.descriptors[ii], kfb.descriptors[js])
            ok = dist <= config.map.merge_max_distance
            out.extend((b, int(j), a, int(i)) for j, i in zip(js[ok], ii[ok]))
    return out


def merge_landmarks(prov: _Provisional, config: PipelineConfig = PipelineConfig()) -> list[Landmark]:
    """Union the provisional landmarks along all correspondences; each group
    becomes one landmark at the mean position with the medoid descriptor."""
    offsets = np.concatenate([[0], np.cumsum([len(k) for k in prov.keyframes])]).astype(np.int64)
    n = int(offsets[-1])
    uf = _UnionFind(n)
    for b, j, a, i in sorted(find_correspondences(prov, config)):
        uf.union(offsets[b] + j, offsets[a] + i)
    roots = np.array([uf.find(g) for g in range(n)], dtype=np.int64)
    kf_of = np.repeat(np.arange(len(prov.keyframes)), np.diff(offsets))
    allpts = np.concatenate(prov.points) if n else np.zeros((0, 3))
    alldesc = np.concatenate([k.descriptors for k in prov.keyframes]) if n else np.zeros((0, 32), np.uint8)
    order = np.argsort(roots, kind="stable")
    bounds = np.flatnonzero(np.diff(roots[order])) + 1
    landmarks = []
    for lid, members in enumerate(np.split(order, bounds) if n else []):
        members = np.sort(members)
        pos = allpts[members].mean(axis=0)
        if len(members) > 1:
            D = hamming_matrix(alldesc[members], alldesc[members]).sum(axis=1)
            rep = alldesc[members[int(np.argmin(D))]]
        else:
            rep = alldesc[members[0]]
        obs = [(int(kf_of[g]), int(g - offsets[kf_of[g]])) for g in members]
        landmarks.append(Landmark(lid, pos.astype(np.float32), rep.copy(), obs))
    return landmarks


def prune_landmarks(landmarks: list[Landmark], min_keyframes: int = 2) -> list[Landmark]:
    """Keep landmarks observed by at least ``min_keyframes`` distinct keyframes."""
    return [lm for lm in landmarks if len(lm.keyframe_ids) >= min_keyframes]


def _attach(keyframes: list[MapKeyframe], landmarks: list[Landmark]) -> None:
    for kf in keyframes:
        kf.observations = {}
    for lm in landmarks:
        for k, kp in lm.observations:
            keyframes[k].observations[kp] = lm.id


def map_config_hash(roi: RegionOfInterest, K: Intrinsics, config: PipelineConfig) -> bytes:
    mc = config.map
    build = [mc.n_directions, mc.pitch_deg, mc.max_features, mc.merge_window, mc.merge_max_distance]
    return config_hash("map", roi.to_dict(), list(K.as_tuple()), config.render, config.features,
                       config.lift, build)


def build_map(cloud: PointCloud, roi: RegionOfInterest, K: Intrinsics,
              config: PipelineConfig = PipelineConfig(), threads: int = 1) -> SlamMap:
    """Render keyframes on the roi grid, lift, merge and prune."""
    if not roi.overlaps(cloud):
        raise EmptyRegion("region of interest does not overlap the cloud")
    prov = _extract(cloud, roi, K, config, threads)
    if not prov.keyframes:
        raise EmptyRegion("no renderable keyframe in the region of interest")
    landmarks = prune_landmarks(merge_landmarks(prov, config))
    # renumber densely in order of the first observation
    for new_id, lm in enumerate(landmarks):
        lm.id = new_id
    _attach(prov.keyframes, landmarks)
    return SlamMap(prov.keyframes, landmarks, cloud_fingerprint(cloud), map_config_hash(roi, K, config))


# ---------------------------------------------------------------------------
# localization


class MapIndex:
    """Flat arrays derived from a map for fast lookup. Build once per map;
    it does not follow later edits of the map."""

    def __init__(self, m: SlamMap):
        row = m.landmark_by_id()
        self.positions = m.positions().astype(np.float64)
        self.translations = np.array([kf.translation for kf in m.keyframes]).reshape(-1, 3)
        self.rotations = np.array([kf.pose.rotation for kf in m.keyframes]).reshape(-1, 3, 3)
        # per keyframe: observed keypoint indices and the landmark rows they map to
        self.kf_keypoints = []
        self.kf_rows = []
        for kf in m.keyframes:
            kps = np.array(sorted(kf.observations), dtype=np.int64)
            self.kf_keypoints.append(kps)
            self.kf_rows.append(np.array([row[kf.observations[k]] for k in kps], dtype=np.int64))
        # every observation descriptor with its landmark row
        self.obs_rows = np.concatenate(self.kf_rows) if self.kf_rows else np.zeros(0, np.int64)
        self.obs_desc = (np.concatenate([kf.descriptors[k] for kf, k in zip(m.keyframes, self.kf_keypoints)])
                         if m.keyframes else np.zeros((0, DESCRIPTOR_BYTES), np.uint8))
        order = np.argsort(self.obs_rows, kind="stable")
        self.obs_rows, self.obs_desc = self.obs_rows[order], self.obs_desc[order]


def _index(m: SlamMap) -> MapIndex:
    idx = getattr(m, "_map_index", None)
    if idx is None:
        idx = MapIndex(m)
        m._map_index = idx
    return idx


def nearest_keyframes(m: SlamMap, prior: RigidPose, k: int, angle_weight: float = 1.0) -> list[int]:
    """The ``k`` keyframes closest to ``prior`` by translation + weighted rotation angle."""
    ix = _index(m)
    dt = np.linalg.norm(ix.translations - prior.translation, axis=1)
    rel = np.einsum("nji,jk->nik", ix.rotations, prior.rotation)
    cos = np.clip((np.trace(rel, axis1=1, axis2=2) - 1) / 2, -1.0, 1.0)
    d = dt + angle_weight * np.arccos(cos)
    return [int(i) for i in np.lexsort((np.arange(len(d)), d))[:k]]


def _one_to_one(q_idx, rows, dist):
    """Keep the closest pair per query keypoint and per landmark (ties by order)."""
    order = np.lexsort((rows, q_idx, dist))
    seen_q, seen_l, keep = set(), set(), []
    for o in order:
        a, r = int(q_idx[o]), int(rows[o])
        if a in seen_q or r in seen_l:
            continue
        seen_q.add(a)
        seen_l.add(r)
        keep.append(o)
    keep = np.sort(np.asarray(keep, dtype=np.int64))
    return q_idx[keep], rows[keep]


def match_keyframes(query: FeatureSet, m: SlamMap, keyframes) -> tuple[np.ndarray, np.ndarray]:
    """Match the query against the observed keypoints of each keyframe and
    return one-to-one (query index, landmark row) pairs."""
    ix = _index(m)
    qa, rr, dd = [], [], []
    for k in keyframes:
        kps = ix.kf_keypoints[k]
        if len(kps) == 0:
            continue
        mt = match_descriptors(query.descriptors, m.keyframes[k].descriptors[kps])
        qa.append(mt.index_a)
        rr.append(ix.kf_rows[k][mt.index_b])
        dd.append(mt.distance)
    if not qa:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return _one_to_one(np.concatenate(qa), np.concatenate(rr), np.concatenate(dd))


def guided_matches(query: FeatureSet, m: SlamMap, pose: RigidPose, K: Intrinsics, radius: float,
                   config: PipelineConfig = PipelineConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Search by projection: landmarks of the keyframes near ``pose`` are
    projected into the frame and paired with a query keypoint within
    ``radius`` px whose descriptor is close to one of the landmark's
    observations."""
    ix = _index(m)
    near = nearest_keyframes(m, pose, config.map.guided_keyframes, config.map.angle_weight)
    rows = np.unique(np.concatenate([ix.kf_rows[k] for k in near]))
    empty = (np.zeros(0, np.int64), np.zeros(0, np.int64))
    if len(rows) == 0 or len(query) == 0:
        return empty
    w2c = pose.inverse()
    P = ix.positions[rows] @ w2c.rotation.T + w2c.translation
    front = P[:, 2] > 1e-6
    rows, P = rows[front], P[front]
    uv = np.column_stack([K.fx * P[:, 0] / P[:, 2] + K.cx, K.fy * P[:, 1] / P[:, 2] + K.cy])
    inside = (uv[:, 0] > -radius) & (uv[:, 0] < K.width + radius)
    inside &= (uv[:, 1] > -radius) & (uv[:, 1] < K.height + radius)
    rows, uv = rows[inside], uv[inside]
    if len(rows) == 0:
        return empty
    n_cand = 4
    _, cand = cKDTree(query.xy).query(uv, k=n_cand, distance_upper_bound=radius)
    # observations of the selected landmarks, each paired with its landmark's candidates
    lo = np.searchsorted(ix.obs_rows, rows, side="left")
    hi = np.searchsorted(ix.obs_rows, rows, side="right")
    owner = np.repeat(np.arange(len(rows)), hi - lo)
    obs = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if len(owner) else np.zeros(0, np.int64)
    best = np.full((len(rows), n_cand), np.iinfo(np.int64).max, dtype=np.int64)
    valid = cand < len(query)
    for c in range(n_cand):
        ok = valid[owner, c]
        d = hamming_rows(ix.obs_desc[obs[ok]], query.descriptors[cand[owner[ok], c]])
        np.minimum.at(best[:, c], owner[ok], d)
    j = np.argmin(best, axis=1)
    dist = best[np.arange(len(rows)), j]
    keep = dist <= config.map.merge_max_distance
    q_idx = cand[np.arange(len(rows)), j][keep].astype(np.int64)
    return _one_to_one(q_idx, rows[keep], dist[keep])


def _solve(query, q_idx, rows, K, ix, config) -> PoseEstimate:
    if len(q_idx) < max(config.ransac.min_inliers, 6):
        raise LocalizationFailed(f"{len(q_idx)} matches")
    ransac = dataclasses.replace(config.ransac, reproj_threshold=config.map.reproj_threshold)
    try:
        return solve_pnp_ransac(query.xy[q_idx], ix.positions[rows], K, ransac)
    except (PoseNotFound, InsufficientCorrespondences) as e:
        raise LocalizationFailed(str(e)) from e


def _guided_refine(query, m, est: PoseEstimate, K, config) -> PoseEstimate:
    ix = _index(m)
    for radius in config.map.guided_radii:
        q_idx, rows = guided_matches(query, m, est.pose, K, radius, config)
        try:
            cand = _solve(query, q_idx, rows, K, ix, config)
        except LocalizationFailed:
            break
        if cand.n_inliers < est.n_inliers:
            break
        est = cand
    return est


def localize_frame(image: np.ndarray, K: Intrinsics, m: SlamMap, prior: RigidPose | None = None,
                   config: PipelineConfig = PipelineConfig()) -> PoseEstimate:
    """Pose of ``image`` against the map.

    With a prior, the query is matched against the keypoints of the
    ``k_nearest`` keyframes closest to it. Without one, keyframes are ranked
    by match count and tried in turn, as in relocalization. The first PnP
    pose is then improved by search-by-projection rounds over nearby
    landmarks.
    """
    if not m.landmarks:
        raise LocalizationFailed("empty map")
    query = detect_and_describe(image, config.tracker.max_features, config=config.features)
    if len(query) < config.ransac.min_inliers:
        raise LocalizationFailed(f"only {len(query)} query features")
    ix = _index(m)
    if prior is not None:
        near = nearest_keyframes(m, prior, config.map.k_nearest, config.map.angle_weight)
        q_idx, rows = match_keyframes(query, m, near)
        est = _solve(query, q_idx, rows, K, ix, config)
        return _guided_refine(query, m, est, K, config)
    scored = []
    for k in range(len(m.keyframes)):
        kps = ix.kf_keypoints[k]
        if len(kps):
            scored.append((len(match_descriptors(query.descriptors, m.keyframes[k].descriptors[kps])), k))
    scored.sort(key=lambda s: (-s[0], s[1]))
    for count, k in scored[: config.reloc.max_candidates]:
        if count < max(config.reloc.min_matches, config.ransac.min_inliers):
            break
        q_idx, rows = match_keyframes(query, m, [k])
        try:
            est = _solve(query, q_idx, rows, K, ix, config)
        except LocalizationFailed:
            continue
        return _guided_refine(query, m, est, K, config)
    raise LocalizationFailed("no keyframe passed the inlier gate")


def localize_sequence(frames: Iterable[tuple[float, np.ndarray]], K: Intrinsics, m: SlamMap,
                      config: PipelineConfig = PipelineConfig(),
                      on_frame: Callable[[int, FrameStats], None] | None = None) -> SequenceResult:
    """Per-frame map localization over a stream, using the last pose as prior.

    A frame that fails with a prior is retried without one (status
    ``relocalized``); frames that fail both ways are ``lost`` and clear the
    prior.
    """
    prior = None
    stats: list[FrameStats] = []
    stamps, poses, estimates = [], [], {}
    for i, (ts, image) in enumerate(frames):
        t0 = time.perf_counter()
        est, status = None, STATUS_LOST
        if prior is not None:
            try:
                est, status = localize_frame(image, K, m, prior, config), STATUS_TRACKED
            except LocalizationFailed:
                est = None
        if est is None:
            try:
                est, status = localize_frame(image, K, m, None, config), STATUS_RELOCALIZED
            except LocalizationFailed:
                est, status = None, STATUS_LOST
        ms = (time.perf_counter() - t0) * 1e3
        if est is not None:
            prior = est.pose
            stats.append(FrameStats(i, status, est.n_inliers, est.mean_reproj_error, 0.0, ms, 0.0))
            stamps.append(float(ts))
            poses.append(est.pose)
            estimates[i] = est
        else:
            prior = None
            stats.append(FrameStats(i, STATUS_LOST, 0, float("nan"), 0.0, ms, 0.0))
        if on_frame is not None:
            on_frame(i, stats[-1])
    traj = Trajectory(np.asarray(stamps), poses) if poses else None
    return SequenceResult(traj, stats, estimates)
