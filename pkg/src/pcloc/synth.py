"""Procedural textured scenes, a simulated static LiDAR scanner and ground truth imagery.

Scenes are made of axis-aligned boxes (solid, or an ``interior`` box that
acts as the room) and axis-aligned rectangles. Surfaces carry procedural
textures evaluated in world meters on the face plane, so the colour of a
LiDAR point and of a camera pixel hitting the same spot agree exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateInputError, SceneError
from .geometry import Intrinsics, RigidPose, Trajectory, look_at

_EPS = 1e-9
_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# textures


@dataclass(frozen=True)
class Texture:
    kind: str = "solid"  # solid | checkerboard | value_noise
    color_a: tuple = (128, 128, 128)
    color_b: tuple = (255, 255, 255)
    texel: float = 0.25  # meters, size of one checker or the coarsest noise cell
    octaves: int = 1
    seed: int = 0
    interpolation: str = "smooth"  # value_noise only: smooth | nearest
    lacunarity: float = 2.0  # frequency ratio between octaves
    gain: float = 0.5  # amplitude ratio between octaves

    def __post_init__(self):
        if self.kind not in ("solid", "checkerboard", "value_noise"):
            raise SceneError(f"unknown texture kind {self.kind!r}")
        if not self.texel > 0:
            raise SceneError("texel must be positive")
        if self.interpolation not in ("smooth", "nearest"):
            raise SceneError("interpolation must be smooth or nearest")
        if not (self.lacunarity > 1 and 0 < self.gain <= 1):
            raise SceneError("need lacunarity > 1 and gain in (0, 1]")
        object.__setattr__(self, "color_a", tuple(int(c) for c in self.color_a))
        object.__setattr__(self, "color_b", tuple(int(c) for c in self.color_b))


def _hash(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash to [0, 1)."""
    with np.errstate(over="ignore"):
        h = ix.astype(np.int64).view(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        h ^= iy.astype(np.int64).view(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        h ^= np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x165667B19E3779F9)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(u, v, seed, smooth: bool):
    iu = np.floor(u)
    iv = np.floor(v)
    if not smooth:
        return _hash(iu, iv, seed)
    fu = u - iu
    fv = v - iv
    fu = fu * fu * (3 - 2 * fu)
    fv = fv * fv * (3 - 2 * fv)
    a = _hash(iu, iv, seed)
    b = _hash(iu + 1, iv, seed)
    c = _hash(iu, iv + 1, seed)
    d = _hash(iu + 1, iv + 1, seed)
    return (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv


def _mix_seed(*parts: int) -> int:
    h = 0xCBF29CE484222325
    for p in parts:
        for b in int(p & 0xFFFFFFFF).to_bytes(4, "little"):
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def evaluate_texture(tex: Texture, u: np.ndarray, v: np.ndarray, seed: int) -> np.ndarray:
    """RGB (N, 3) uint8 of ``tex`` at face coordinates ``u, v`` (meters)."""
    a = np.asarray(tex.color_a, np.float64)
    b = np.asarray(tex.color_b, np.float64)
    if tex.kind == "solid":
        return np.broadcast_to(a.astype(np.uint8), (len(u), 3)).copy()
    if tex.kind == "checkerboard":
        k = (np.floor(u / tex.texel) + np.floor(v / tex.texel)).astype(np.int64) & 1
        return np.where(k[:, None] == 1, b, a).astype(np.uint8)
    total = np.zeros(len(u))
    norm = 0.0
    seed = _mix_seed(seed, tex.seed)
    for o in range(tex.octaves):
        f = tex.lacunarity ** o / tex.texel
        amp = tex.gain ** o
        # shift each octave's lattice so cell edges of different octaves do not line up
        shift = 0.37 * o
        total += amp * _value_noise(u * f + shift, v * f + shift, _mix_seed(seed, o),
                                    tex.interpolation == "smooth")
        norm += amp
    t = (total / norm)[:, None]
    return np.floor(a + (b - a) * t + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple
    textures: tuple  # one Texture or six, indexed by face = 2*axis + (0 for min side, 1 for max)
    interior: bool = False

    def __post_init__(self):
        lo = tuple(float(x) for x in self.min)
        hi = tuple(float(x) for x in self.max)
        if any(h <= l for l, h in zip(lo, hi)):
            raise SceneError("box extents must be positive")
        tex = self.textures
        if isinstance(tex, Texture):
            tex = (tex,)
        if len(tex) not in (1, 6):
            raise SceneError("a box takes one texture or six")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        object.__setattr__(self, "textures", tuple(tex))

    def texture(self, face: int) -> Texture:
        return self.textures[face % len(self.textures)]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle on the plane ``x[axis] == offset``.

    ``min``/``max`` bound the two remaining axes in increasing axis order.
    """

    axis: int
    offset: float
    min: tuple
    max: tuple
    texture: Texture

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise SceneError("axis must be 0, 1 or 2")
        lo = tuple(float(x) for x in self.min)
        hi = tuple(float(x) for x in self.max)
        if len(lo) != 2 or any(h <= l for l, h in zip(lo, hi)):
            raise SceneError("rectangle extents must be positive")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class Scene:
    boxes: tuple = ()
    rects: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "rects", tuple(self.rects))
        if not self.boxes and not self.rects:
            raise SceneError("scene is empty")

    @property
    def surfaces(self):
        return list(self.boxes) + list(self.rects)

    def is_free(self, p: np.ndarray) -> bool:
        p = np.asarray(p, dtype=np.float64)
        for b in self.boxes:
            inside = np.all(p > np.array(b.min)) and np.all(p < np.array(b.max))
            if b.interior and not inside:
                return False
            if not b.interior and np.all(p >= np.array(b.min)) and np.all(p <= np.array(b.max)):
                return False
        return True

    # json round trip ------------------------------------------------------
    def to_dict(self) -> dict:
        surfaces = []
        for b in self.boxes:
            surfaces.append({
                "type": "box", "min": list(b.min), "max": list(b.max), "interior": b.interior,
                "textures": [asdict(t) for t in b.textures],
            })
        for r in self.rects:
            surfaces.append({
                "type": "rect", "axis": r.axis, "offset": r.offset,
                "min": list(r.min), "max": list(r.max), "texture": asdict(r.texture),
            })
        return {"seed": self.seed, "surfaces": surfaces}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        def tex(x):
            x = dict(x)
            for k in ("color_a", "color_b"):
                if k in x:
                    x[k] = tuple(x[k])
            return Texture(**x)

        boxes, rects = [], []
        for s in d.get("surfaces", []):
            if s["type"] == "box":
                t = s.get("textures", [s.get("texture", {})])
                boxes.append(Box(tuple(s["min"]), tuple(s["max"]), tuple(tex(x) for x in t),
                                 bool(s.get("interior", False))))
            elif s["type"] == "rect":
                rects.append(Rect(int(s["axis"]), float(s["offset"]), tuple(s["min"]),
                                  tuple(s["max"]), tex(s.get("texture", {}))))
            else:
                raise SceneError(f"unknown surface type {s['type']!r}")
        return cls(tuple(boxes), tuple(rects), int(d.get("seed", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Scene":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Hits:
    t: np.ndarray
    surface: np.ndarray  # index into scene.surfaces, -1 = miss
    face: np.ndarray  # 2*axis + side
    position: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.surface >= 0


def _other_axes(axis: int) -> tuple[int, int]:
    return [(1, 2), (0, 2), (0, 1)][axis]


def cast_rays(scene: Scene, origins: np.ndarray, dirs: np.ndarray) -> Hits:
    """First hit of each ray. ``origins`` may be (3,) or (N, 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    n = len(dirs)
    O = np.broadcast_to(np.asarray(origins, dtype=np.float64), (n, 3))
    best_t = np.full(n, np.inf)
    surf = np.full(n, -1, np.int64)
    face = np.full(n, -1, np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        for si, b in enumerate(scene.boxes):
            lo = np.array(b.min)
            hi = np.array(b.max)
            t1 = (lo - O) * inv
            t2 = (hi - O) * inv
            tmin = np.nan_to_num(np.fmin(t1, t2), nan=-np.inf)
            tmax = np.nan_to_num(np.fmax(t1, t2), nan=np.inf)
            if b.interior:
                t = tmax.min(axis=1)
                ax = tmax.argmin(axis=1)
                side = (dirs[np.arange(n), ax] > 0).astype(np.int64)
            else:
                tn = tmin.max(axis=1)
                tf = tmax.min(axis=1)
                ax = tmin.argmax(axis=1)
                side = (dirs[np.arange(n), ax] < 0).astype(np.int64)
                t = np.where((tn <= tf) & (tn > _EPS), tn, np.inf)
            better = (t > _EPS) & (t < best_t)
            best_t[better] = t[better]
            surf[better] = si
            face[better] = 2 * ax[better] + side[better]
        nb = len(scene.boxes)
        for ri, r in enumerate(scene.rects):
            a = r.axis
            t = (r.offset - O[:, a]) * inv[:, a]
            p = O + t[:, None] * dirs
            a1, a2 = _other_axes(a)
            ok = ((t > _EPS) & (p[:, a1] >= r.min[0]) & (p[:, a1] <= r.max[0])
                  & (p[:, a2] >= r.min[1]) & (p[:, a2] <= r.max[1]))
            better = ok & (t < best_t)
            best_t[better] = t[better]
            surf[better] = nb + ri
            face[better] = 2 * a
    pos = O + np.where(np.isfinite(best_t), best_t, 0.0)[:, None] * dirs
    # snap the hit coordinate onto the face plane
    surfaces = scene.surfaces
    for si in np.unique(surf[surf >= 0]):
        s = surfaces[si]
        sel = surf == si
        fa = face[sel]
        ax = fa // 2
        if isinstance(s, Box):
            plane = np.where(fa % 2 == 1, np.array(s.max)[ax], np.array(s.min)[ax])
        else:
            plane = np.full(len(fa), s.offset)
        idx = np.nonzero(sel)[0]
        pos[idx, ax] = plane
    return Hits(best_t, surf, face, pos)


def surface_colors(scene: Scene, hits: Hits) -> np.ndarray:
    out = np.zeros((len(hits.t), 3), np.uint8)
    surfaces = scene.surfaces
    keys = hits.surface * 8 + hits.face
    for key in np.unique(keys[hits.surface >= 0]):
        si, fc = divmod(int(key), 8)
        sel = keys == key
        s = surfaces[si]
        tex = s.texture(fc) if isinstance(s, Box) else s.texture
        a1, a2 = _other_axes(fc // 2)
        p = hits.position[sel]
        out[sel] = evaluate_texture(tex, p[:, a1], p[:, a2], _mix_seed(scene.seed, si, fc))
    return out


def distance_to_surfaces(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the nearest scene face (finite faces)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = np.full(len(points), np.inf)

    def face_dist(axis, plane, lo, hi):
        a1, a2 = _other_axes(axis)
        d_ax = points[:, axis] - plane
        d1 = np.maximum(np.maximum(lo[0] - points[:, a1], points[:, a1] - hi[0]), 0)
        d2 = np.maximum(np.maximum(lo[1] - points[:, a2], points[:, a2] - hi[1]), 0)
        return np.sqrt(d_ax**2 + d1**2 + d2**2)

    for b in scene.boxes:
        for axis in range(3):
            a1, a2 = _other_axes(axis)
            lo = (b.min[a1], b.min[a2])
            hi = (b.max[a1], b.max[a2])
            for plane in (b.min[axis], b.max[axis]):
                best = np.minimum(best, face_dist(axis, plane, lo, hi))
    for r in scene.rects:
        best = np.minimum(best, face_dist(r.axis, r.offset, r.min, r.max))
    return best


# ---------------------------------------------------------------------------
# LiDAR


@dataclass(frozen=True)
class ScanConfig:
    positions: tuple
    angular_resolution: float = np.radians(0.2)  # radians
    max_range: float = 30.0
    range_noise: float = 0.0  # meters (std), off by default

    def __post_init__(self):
        if not self.angular_resolution > 0:
            raise ValueError("angular_resolution must be positive")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        object.__setattr__(self, "positions", tuple(tuple(float(c) for c in p) for p in self.positions))


def scan_directions(resolution: float) -> np.ndarray:
    """Equal-angle spherical grid; rows of elevation, azimuth fastest."""
    n_el = int(round(np.pi / resolution))
    n_az = int(round(2 * np.pi / resolution))
    el = -np.pi / 2 + (np.arange(n_el) + 0.5) * (np.pi / n_el)
    az = np.arange(n_az) * (2 * np.pi / n_az)
    ce, se = np.cos(el)[:, None], np.sin(el)[:, None]
    d = np.stack(
        [ce * np.cos(az)[None, :], ce * np.sin(az)[None, :], np.broadcast_to(se, (n_el, n_az))],
        axis=-1,
    )
    return d.reshape(-1, 3)


def simulate_lidar(scene: Scene, config: ScanConfig, seed: int = 0, chunk: int = 400_000) -> PointCloud:
    """Static scans from each scanner position, concatenated in scanner order.

    Each first hit within ``max_range`` becomes a point at the exact hit with
    the texture color there.
    """
    dirs = scan_directions(config.angular_resolution)
    rng = np.random.default_rng(seed)
    pts, cols = [], []
    for pos in config.positions:
        origin = np.array(pos)
        if not scene.is_free(origin):
            raise SceneError(f"scanner at {pos} is inside solid geometry")
        for s in range(0, len(dirs), chunk):
            d = dirs[s:s + chunk]
            h = cast_rays(scene, origin, d)
            keep = h.hit & (h.t <= config.max_range)
            if not keep.any():
                continue
            sub = Hits(h.t[keep], h.surface[keep], h.face[keep], h.position[keep])
            c = surface_colors(scene, sub)
            p = sub.position
            if config.range_noise > 0:
                p = p + rng.normal(0.0, config.range_noise, len(p))[:, None] * d[keep]
            pts.append(p)
            cols.append(c)
    if not pts:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), np.uint8))
    return PointCloud(np.concatenate(pts), np.concatenate(cols))


# ---------------------------------------------------------------------------
# camera


def pixel_rays(K: Intrinsics, supersample: int = 1) -> np.ndarray:
    """Camera-frame ray directions (H*W*s*s, 3), pixel centers on integer coordinates."""
    s = supersample
    off = (np.arange(s) + 0.5) / s - 0.5
    us = (np.arange(K.width)[:, None] + off[None, :]).reshape(-1)
    vs = (np.arange(K.height)[:, None] + off[None, :]).reshape(-1)
    uu, vv = np.meshgrid(us, vs)
    x = (uu - K.cx) / K.fx
    y = (vv - K.cy) / K.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)


def render_camera_frame(scene: Scene, pose: RigidPose, K: Intrinsics,
                        supersample: int = 1, return_depth: bool = False):
    """Flat-albedo ray-cast image (and camera-z depth) of the scene from ``pose``."""
    rays_c = pixel_rays(K, supersample)
    dirs = rays_c @ pose.rotation.T
    h = cast_rays(scene, pose.translation, dirs)
    col = surface_colors(scene, h).astype(np.float64)
    s = supersample
    H, W = K.height, K.width
    img = col.reshape(H, s, W, s, 3).mean(axis=(1, 3))
    img = np.floor(img + 0.5).astype(np.uint8)
    if not return_depth:
        return img
    z = np.where(h.hit, h.t, np.inf).reshape(H, s, W, s)[:, s // 2, :, s // 2]
    return img, z


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectorySpec:
    waypoints: tuple
    targets: tuple
    rate: float = 30.0  # Hz
    speed: float = 1.0  # m/s

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("need at least 2 waypoints")
        if len(self.targets) != len(self.waypoints):
            raise ValueError("one look-at target per waypoint")
        if not (self.speed > 0 and self.rate > 0):
            raise ValueError("speed and rate must be positive")
        object.__setattr__(self, "waypoints", tuple(tuple(map(float, w)) for w in self.waypoints))
        object.__setattr__(self, "targets", tuple(tuple(map(float, w)) for w in self.targets))

    @property
    def closed(self) -> bool:
        return self.waypoints[0] == self.waypoints[-1]


def generate_trajectory(spec: TrajectorySpec) -> Trajectory:
    """Constant-speed piecewise-linear path with look-at orientation.

    For closed loops the step is adjusted to the nearest whole number of frames
    around the loop, so first and last poses coincide.
    """
    wp = np.array(spec.waypoints)
    tg = np.array(spec.targets)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    if np.any(seg <= 0):
        raise DegenerateInputError("consecutive waypoints coincide")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = cum[-1]
    step = spec.speed / spec.rate
    if spec.closed:
        n = max(1, int(round(length / step)))
        s = np.arange(n + 1) * (length / n)
        s[-1] = length
        dt = (length / n) / spec.speed
    else:
        n = int(np.floor(length / step + 1e-9))
        s = np.arange(n + 1) * step
        dt = 1.0 / spec.rate
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    f = ((s - cum[k]) / seg[k])[:, None]
    pos = wp[k] * (1 - f) + wp[k + 1] * f
    tgt = tg[k] * (1 - f) + tg[k + 1] * f
    if spec.closed:
        pos[-1] = wp[-1]
        tgt[-1] = tg[-1]
    poses = [look_at(p, t) for p, t in zip(pos, tgt)]
    return Trajectory(np.arange(n + 1) * dt, poses)


# ---------------------------------------------------------------------------
# default desk-scale world


def _tex(kind, a, b, texel, octaves=1, seed=0, interpolation="smooth"):
    return Texture(kind, tuple(a), tuple(b), texel, octaves, seed, interpolation)


def _mosaic(a, b, texel, seed):
    # blocky multi-octave noise: dense, non-repeating corners for the detector
    return Texture("value_noise", tuple(a), tuple(b), texel, 3, seed, "nearest", 2.3, 0.7)


def default_scene(size=(8.0, 6.0, 3.0), seed: int = 7) -> Scene:
    """Textured room with furniture and posters, free space in the middle."""
    X, Y, Z = size
    walls = (
        _mosaic((40, 60, 90), (230, 220, 190), 0.3, 1),    # x = 0
        _mosaic((90, 40, 40), (240, 230, 210), 0.3, 2),    # x = X
        _mosaic((30, 80, 50), (220, 235, 220), 0.3, 3),    # y = 0
        _mosaic((70, 50, 100), (235, 225, 240), 0.3, 4),   # y = Y
        _mosaic((60, 45, 30), (220, 190, 150), 0.25, 5),   # floor
        _tex("value_noise", (150, 150, 150), (250, 250, 245), 0.6, 4, 6),  # ceiling
    )
    room = Box((0.0, 0.0, 0.0), (X, Y, Z), walls, interior=True)
    furniture = (
        Box((0.3, 3.6, 0.0), (1.3, 5.6, 0.75), (_mosaic((80, 50, 20), (210, 160, 90), 0.2, 11),)),
        Box((X - 1.3, 0.3, 0.0), (X - 0.3, 1.3, 1.0), (_tex("checkerboard", (30, 30, 30), (220, 200, 60), 0.125),)),
        Box((3.0, Y - 0.4, 0.0), (5.0, Y - 0.05, 2.2), (_mosaic((20, 30, 60), (200, 210, 230), 0.15, 12),)),
        Box((X - 1.2, Y - 1.6, 0.0), (X - 0.5, Y - 0.9, 1.5), (_mosaic((100, 20, 20), (250, 200, 180), 0.2, 13),)),
    )
    posters = (
        Rect(0, 0.01, (1.0, 1.2), (2.4, 2.2), _tex("checkerboard", (20, 20, 20), (240, 240, 240), 0.1)),
        Rect(0, X - 0.01, (2.0, 1.0), (4.0, 2.2), _tex("value_noise", (10, 10, 10), (255, 255, 255), 0.12, 3, 21, "nearest")),
        Rect(1, 0.01, (2.5, 1.0), (4.5, 2.3), _tex("value_noise", (0, 60, 120), (255, 240, 200), 0.1, 3, 22, "nearest")),
        Rect(1, Y - 0.01, (5.5, 1.0), (6.5, 2.0), _tex("checkerboard", (150, 20, 20), (250, 250, 250), 0.1)),
    )
    return Scene((room,) + furniture, posters, seed)


def default_camera() -> Intrinsics:
    """320 x 240 pinhole, about 72 degrees horizontal field of view."""
    return Intrinsics(220.0, 220.0, 160.0, 120.0, 320, 240)


def default_scan_config(size=(8.0, 6.0, 3.0), resolution_deg: float = 0.2) -> ScanConfig:
    X, Y, _ = size
    return ScanConfig(
        positions=((X * 0.3, Y * 0.35, 1.5), (X * 0.7, Y * 0.65, 1.5), (X * 0.5, Y * 0.5, 2.4)),
        angular_resolution=np.radians(resolution_deg),
        max_range=30.0,
    )


def loop_trajectory_spec(size=(8.0, 6.0, 3.0), rate: float = 30.0, speed: float = 1.0,
                         n_waypoints: int = 120) -> TrajectorySpec:
    """Closed 1:3 Lissajous loop (about 21.6 m in the default room) with a slowly
    turning camera aimed slightly downward."""
    X, Y, _ = size
    th = np.linspace(0.0, 2 * np.pi, n_waypoints + 1)
    cx, cy = X / 2, Y / 2
    x = cx + 2.5 * np.sin(th)
    y = cy + 1.5 * np.sin(3 * th)
    z = 1.55 + 0.12 * np.sin(3 * th)
    yaw = th + np.pi / 5
    tx = x + 3.0 * np.cos(yaw)
    ty = y + 3.0 * np.sin(yaw)
    tz = z - 0.5
    wps = list(zip(x, y, z))
    tgs = list(zip(tx, ty, tz))
    wps[-1] = wps[0]
    tgs[-1] = tgs[0]
    return TrajectorySpec(tuple(wps), tuple(tgs), rate, speed)
