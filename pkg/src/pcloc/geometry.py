"""Rigid and similarity transforms, pinhole projection and trajectory alignment.

Conventions
-----------
* ``RigidPose`` is always camera-to-world. Projection takes the inverse
  (world-to-camera) pose, obtained with :meth:`RigidPose.inverse`.
* Camera frame: x right, y down, z forward. Pixel centers sit on integer
  coordinates, ``u`` along image columns and ``v`` along rows.
* Quaternions are stored ``(qx, qy, qz, qw)``, matching the TUM trajectory
  layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AlignmentError, DegenerateInputError, FormatError

NEAR_PLANE = 0.05  # meters


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, stable near zero."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) + W + 0.5 * W @ W
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    theta = rotation_angle(R)
    if theta < 1e-8:
        return 0.5 * v
    if np.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        M = (R + np.eye(3)) / 2.0
        axis = M[np.argmax(np.diag(M))]
        axis = axis / np.linalg.norm(axis)
        if np.dot(axis, v) < 0:
            axis = -axis
        return axis * theta
    return v * (theta / (2.0 * np.sin(theta)))


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, radians."""
    R = np.asarray(R, dtype=np.float64)
    # atan2 keeps full precision near 0 where arccos of the trace does not
    sin_t = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    cos_t = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(sin_t, cos_t))


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=np.float64)
    n = np.sqrt(x * x + y * y + z * z + w * w)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion must be non-zero and finite")
    x, y, z, w = x / n, y / n, z / n, w / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w) with w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[3] < 0:
        q = -q
    return q


@dataclass(frozen=True)
class RigidPose:
    """SE(3) element. Stored as camera-to-world wherever it denotes a camera."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "RigidPose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw) -> "RigidPose":
        return cls(quat_to_matrix(quat_xyzw), translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation) -> "RigidPose":
        return cls(so3_exp(np.asarray(rotvec, dtype=np.float64)), translation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def quaternion(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)

    def inverse(self) -> "RigidPose":
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """``self * other`` (apply ``other`` first)."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    @property
    def position(self) -> np.ndarray:
        return self.translation

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.abs(R.T @ R - np.eye(3)).max() < tol and abs(np.linalg.det(R) - 1.0) < tol
        )

    def distance_to(self, other: "RigidPose") -> tuple[float, float]:
        """(translation distance in meters, rotation angle in radians)."""
        dt = float(np.linalg.norm(self.translation - other.translation))
        dr = rotation_angle(self.rotation.T @ other.rotation)
        return dt, dr

    def __eq__(self, other):
        if not isinstance(other, RigidPose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    return a.compose(b)


def invert(a: RigidPose) -> RigidPose:
    return a.inverse()


@dataclass(frozen=True)
class SimTransform:
    """x -> scale * R x + t."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T) + self.translation

    def apply_pose(self, pose: RigidPose) -> RigidPose:
        """Transform a camera pose; the rotation part ignores scale."""
        return RigidPose(
            self.rotation @ pose.rotation,
            self.scale * self.rotation @ pose.translation + self.translation,
        )

    def inverse(self) -> "SimTransform":
        Rt = self.rotation.T
        return SimTransform(1.0 / self.scale, Rt, -(Rt @ self.translation) / self.scale)

    def compose(self, other: "SimTransform") -> "SimTransform":
        return SimTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "Intrinsics":
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    @classmethod
    def cubemap(cls, resolution: int) -> "Intrinsics":
        r = float(resolution)
        return cls(r / 2, r / 2, r / 2, r / 2, resolution, resolution)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def as_tuple(self) -> tuple:
        return (self.fx, self.fy, self.cx, self.cy, float(self.width), float(self.height))


def project_points(points: np.ndarray, world_to_cam: RigidPose, K: Intrinsics):
    """Vectorised pinhole projection.

    Returns ``(uv, depth, visible)`` where ``uv`` is (N, 2), ``depth`` the
    camera-frame z and ``visible`` flags points in front of the near plane and
    inside ``[0, width) x [0, height)``.
    """
    pc = world_to_cam.apply(np.atleast_2d(points))
    z = pc[:, 2]
    front = z > NEAR_PLANE
    safe = np.where(front, z, 1.0)
    u = K.fx * pc[:, 0] / safe + K.cx
    v = K.fy * pc[:, 1] / safe + K.cy
    visible = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    return np.stack([u, v], axis=1), z, visible


def project(point, world_to_cam: RigidPose, K: Intrinsics):
    """Project one world point; ``None`` when culled or outside the image."""
    uv, z, vis = project_points(np.asarray(point, dtype=np.float64)[None], world_to_cam, K)
    if not vis[0]:
        return None
    return uv[0], float(z[0])


def back_project(pixels, depth, cam_to_world: RigidPose, K: Intrinsics) -> np.ndarray:
    """Lift pixel(s) with camera-frame z-depth to world coordinates."""
    pixels = np.asarray(pixels, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    single = pixels.ndim == 1
    pixels = np.atleast_2d(pixels)
    depth = np.atleast_1d(depth)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth must be positive and finite")
    x = (pixels[:, 0] - K.cx) / K.fx * depth
    y = (pixels[:, 1] - K.cy) / K.fy * depth
    out = cam_to_world.apply(np.stack([x, y, depth], axis=1))
    return out[0] if single else out


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """Camera-to-world pose with the optical axis toward ``target`` and no roll."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    n = np.linalg.norm(z)
    if n == 0:
        raise DegenerateInputError("target coincides with position")
    z = z / n
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise DegenerateInputError("viewing direction parallel to up vector")
    x /= nx
    y = np.cross(z, x)
    return RigidPose(np.stack([x, y, z], axis=1), position)


@dataclass(frozen=True)
class Trajectory:
    timestamps: np.ndarray
    poses: tuple[RigidPose, ...]

    def __post_init__(self):
        ts = _frozen(self.timestamps)
        if ts.ndim != 1 or len(ts) != len(self.poses):
            raise ValueError("timestamps and poses must have equal length")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self):
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, 3))
        return np.array([p.translation for p in self.poses])

    def transformed(self, T: RigidPose | SimTransform) -> "Trajectory":
        if isinstance(T, SimTransform):
            poses = [T.apply_pose(p) for p in self.poses]
        else:
            poses = [T.compose(p) for p in self.poses]
        return Trajectory(self.timestamps, poses)

    def subset(self, idx: Iterable[int]) -> "Trajectory":
        idx = list(idx)
        return Trajectory(self.timestamps[idx], [self.poses[i] for i in idx])


def _positions(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.positions
    return np.asarray(x, dtype=np.float64)


def umeyama_align(source, target, with_scale: bool = True) -> SimTransform:
    """Least-squares similarity (or rigid) transform mapping ``source`` onto ``target``.

    Accepts trajectories or (N, 3) arrays of corresponding positions.
    """
    src = _positions(source)
    tgt = _positions(target)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 3:
        raise AlignmentError("source and target must be matching (N, 3) sets")
    n = len(src)
    if n < 3:
        raise AlignmentError("need at least 3 correspondences")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    xs = src - mu_s
    xt = tgt - mu_t
    var_s = (xs * xs).sum() / n
    cov = xt.T @ xs / n
    U, D, Vt = np.linalg.svd(cov)
    # rank < 2 means the rotation about the common line is undetermined
    if var_s <= 0 or D[1] <= 1e-12 * max(D[0], 1e-300):
        raise AlignmentError("degenerate (collinear or coincident) positions")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    scale = float(np.trace(np.diag(D) @ S) / var_s) if with_scale else 1.0
    t = mu_t - scale * R @ mu_s
    return SimTransform(scale, R, t)


def read_trajectory(path: str | Path) -> Trajectory:
    """Read ``timestamp tx ty tz qx qy qz qw`` lines; ``#`` lines are comments."""
    stamps, poses = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        vals = [float(p) for p in parts]
        stamps.append(vals[0])
        poses.append(RigidPose.from_quaternion(vals[1:4], vals[4:8]))
    return Trajectory(np.array(stamps), poses)


def write_trajectory(path: str | Path, traj: Trajectory) -> None:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for ts, pose in zip(traj.timestamps, traj.poses):
        t = pose.translation
        q = pose.quaternion()
        vals = [ts, *t, *q]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")
