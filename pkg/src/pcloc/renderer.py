"""Point cloud renderer: z-buffer, banded color averaging, depth filter, hole filling.

The point passes run as compiled loops over the cloud. Depth uses an exact
``min`` and colors use integer sums, so the framebuffer does not depend on
point order. Pixel passes (filter, fill) are plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numba
import numpy as np
from PIL import Image

from .cloud import PointCloud
from .errors import UnrenderableView
from .geometry import NEAR_PLANE, Intrinsics, RigidPose


@dataclass(frozen=True)
class RenderConfig:
    delta_rel: float = 0.02
    delta_min: float = 0.01  # meters
    filter_levels: int = 4
    filter_ratio: float = 1.1
    fill_holes: bool = True
    depth_filter: bool = True
    # side of the square cells used for the coarse support mask, pixels
    support_cell: int = 8

    def __post_init__(self):
        if not 0 < self.delta_rel <= 0.2:
            raise ValueError("delta_rel must be in (0, 0.2]")
        if not self.delta_min > 0:
            raise ValueError("delta_min must be positive")
        if self.filter_levels < 1:
            raise ValueError("filter_levels must be >= 1")
        if not self.filter_ratio > 1:
            raise ValueError("filter_ratio must be > 1")
        if self.support_cell < 1:
            raise ValueError("support_cell must be >= 1")

    def point_based(self) -> "RenderConfig":
        """Ablated variant: no depth filter, no hole filling."""
        return replace(self, depth_filter=False, fill_holes=False)

    def band(self, z: np.ndarray | float):
        return np.maximum(self.delta_rel * np.asarray(z), self.delta_min)


@dataclass
class Framebuffer:
    color: np.ndarray  # (H, W, 3) uint8, black where invalid
    depth: np.ndarray  # (H, W) float64, +inf where invalid
    valid: np.ndarray  # (H, W) bool
    point_index: np.ndarray | None = None  # (H, W) int64, nearest point id or -1

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def copy(self) -> "Framebuffer":
        return Framebuffer(
            self.color.copy(),
            self.depth.copy(),
            self.valid.copy(),
            None if self.point_index is None else self.point_index.copy(),
        )


@dataclass
class RenderResult:
    """Output of :func:`render`.

    ``depth``/``valid`` are the measured, background-filtered depth before hole
    filling; ``rgb`` is hole filled. ``support`` marks pixels whose coarse
    cell holds measured depth (used to keep features away from large holes).
    """

    rgb: np.ndarray
    depth: np.ndarray
    valid: np.ndarray
    support: np.ndarray
    point_index: np.ndarray

    def __iter__(self):
        # allows ``rgb, depth = render(...)``
        return iter((self.rgb, self.depth))


# ---------------------------------------------------------------------------
# compiled point passes


@numba.njit(cache=True, nogil=True)
def _project_one(p, R, t, fx, fy, cx, cy):
    x = R[0, 0] * p[0] + R[0, 1] * p[1] + R[0, 2] * p[2] + t[0]
    y = R[1, 0] * p[0] + R[1, 1] * p[1] + R[1, 2] * p[2] + t[1]
    z = R[2, 0] * p[0] + R[2, 1] * p[1] + R[2, 2] * p[2] + t[2]
    return x, y, z


@numba.njit(cache=True, nogil=True)
def _pixel_of(x, y, z, fx, fy, cx, cy, W, H):
    u = fx * x / z + cx
    v = fy * y / z + cy
    if not (u >= -0.5 and u < W - 0.5 and v >= -0.5 and v < H - 0.5):
        return -1
    ui = int(np.floor(u + 0.5))
    vi = int(np.floor(v + 0.5))
    if ui < 0 or ui >= W or vi < 0 or vi >= H:
        return -1
    return vi * W + ui


@numba.njit(cache=True, nogil=True)
def _zbuffer_kernel(points, R, t, fx, fy, cx, cy, W, H, near, zbuf):
    for i in range(points.shape[0]):
        x, y, z = _project_one(points[i], R, t, fx, fy, cx, cy)
        if z <= near:
            continue
        k = _pixel_of(x, y, z, fx, fy, cx, cy, W, H)
        if k < 0:
            continue
        if z < zbuf[k]:
            zbuf[k] = z


@numba.njit(cache=True, nogil=True)
def _accumulate_kernel(points, colors, R, t, fx, fy, cx, cy, W, H, near,
                       zbuf, delta_rel, delta_min, sums, counts, index):
    for i in range(points.shape[0]):
        x, y, z = _project_one(points[i], R, t, fx, fy, cx, cy)
        if z <= near:
            continue
        k = _pixel_of(x, y, z, fx, fy, cx, cy, W, H)
        if k < 0:
            continue
        zm = zbuf[k]
        band = delta_rel * zm
        if band < delta_min:
            band = delta_min
        if z <= zm + band:
            sums[k, 0] += colors[i, 0]
            sums[k, 1] += colors[i, 1]
            sums[k, 2] += colors[i, 2]
            counts[k] += 1
        if z == zm:
            # ties on depth broken by world coordinates, never by point order
            j = index[k]
            if j < 0:
                index[k] = i
            else:
                q = points[j]
                p = points[i]
                if p[0] < q[0] or (p[0] == q[0] and (p[1] < q[1] or (p[1] == q[1] and p[2] < q[2]))):
                    index[k] = i


def _world_to_cam(pose: RigidPose):
    inv = pose.inverse()
    return np.ascontiguousarray(inv.rotation), np.ascontiguousarray(inv.translation)


def depth_pass(cloud: PointCloud, pose: RigidPose, K: Intrinsics) -> Framebuffer:
    """Per-pixel minimum camera-z over all points splatting to that pixel."""
    R, t = _world_to_cam(pose)
    W, H = K.width, K.height
    zbuf = np.full(W * H, np.inf)
    _zbuffer_kernel(cloud.points, R, t, K.fx, K.fy, K.cx, K.cy, W, H, NEAR_PLANE, zbuf)
    depth = zbuf.reshape(H, W)
    valid = np.isfinite(depth)
    return Framebuffer(np.zeros((H, W, 3), np.uint8), depth, valid)


def accumulate_colors(cloud: PointCloud, pose: RigidPose, K: Intrinsics,
                      z_min: Framebuffer, config: RenderConfig = RenderConfig()) -> Framebuffer:
    """Average the colors of points within the depth band of each pixel's minimum.

    The band is ``max(delta_rel * z_min, delta_min)``; channel means are rounded
    half up.
    """
    R, t = _world_to_cam(pose)
    W, H = K.width, K.height
    zbuf = np.ascontiguousarray(z_min.depth.reshape(-1))
    sums = np.zeros((W * H, 3), np.int64)
    counts = np.zeros(W * H, np.int64)
    index = np.full(W * H, -1, np.int64)
    _accumulate_kernel(cloud.points, cloud.colors, R, t, K.fx, K.fy, K.cx, K.cy, W, H,
                       NEAR_PLANE, zbuf, config.delta_rel, config.delta_min, sums, counts, index)
    valid = counts > 0
    color = np.zeros((W * H, 3), np.uint8)
    c = counts[valid][:, None]
    color[valid] = ((2 * sums[valid] + c) // (2 * c)).astype(np.uint8)
    return Framebuffer(
        color.reshape(H, W, 3),
        z_min.depth.copy(),
        valid.reshape(H, W),
        index.reshape(H, W),
    )


# ---------------------------------------------------------------------------
# pixel passes


def _min_pool2(a: np.ndarray) -> np.ndarray:
    h, w = a.shape
    ph, pw = h + (h & 1), w + (w & 1)
    if (ph, pw) != (h, w):
        p = np.full((ph, pw), np.inf)
        p[:h, :w] = a
        a = p
    return a.reshape(ph // 2, 2, pw // 2, 2).min(axis=(1, 3))


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[y, x] = a[y + dy, x + dx]``, +inf outside the image."""
    h, w = a.shape
    out = np.full((h, w), np.inf)
    ys, ye = max(0, -dy), min(h, h - dy)
    xs, xe = max(0, -dx), min(w, w - dx)
    if ys < ye and xs < xe:
        out[ys:ye, xs:xe] = a[ys + dy:ye + dy, xs + dx:xe + dx]
    return out


def _ray_min(depth: np.ndarray, dy: int, dx: int, levels: int) -> np.ndarray:
    # min over steps 1 .. 2**levels - 1 along (dy, dx), by doubling
    seg = _shift(depth, dy, dx)
    n = 1
    for _ in range(levels - 1):
        seg = np.minimum(seg, _shift(seg, n * dy, n * dx))
        n *= 2
    return seg


def occlusion_bound(depth: np.ndarray, levels: int) -> np.ndarray:
    """Foreground depth enclosing each pixel on opposite sides.

    Along each of the 8 compass directions the nearest depth within
    ``2**levels - 1`` pixels is found with ``levels`` doubling steps. A pair of
    opposite directions only encloses the pixel when both sides are in front,
    so the pair bound is the larger of the two; the pixel bound is the
    smallest pair bound. Requiring foreground on opposite sides along a line
    keeps slanted floors and the background next to a silhouette, which a
    square-neighbourhood minimum would cut away.
    """
    bound = np.full(depth.shape, np.inf)
    for dy, dx in ((1, 0), (0, 1), (1, 1), (1, -1)):
        fwd = _ray_min(depth, dy, dx, levels)
        bwd = _ray_min(depth, -dy, -dx, levels)
        np.minimum(bound, np.maximum(fwd, bwd), out=bound)
    return bound


def hierarchical_depth_filter(fb: Framebuffer, config: RenderConfig = RenderConfig()) -> Framebuffer:
    """Invalidate pixels lying behind the local foreground (background leakage)."""
    bound = occlusion_bound(fb.depth, config.filter_levels)
    leak = fb.valid & (fb.depth > config.filter_ratio * bound)
    out = fb.copy()
    out.valid[leak] = False
    out.depth[leak] = np.inf
    out.color[leak] = 0
    if out.point_index is not None:
        out.point_index[leak] = -1
    return out


def _upsample_bilinear(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Upsample a parent level to child size (h, w); parents cover 2x2 children."""
    ph, pw = a.shape[:2]
    y = np.arange(h) / 2.0 - 0.25
    x = np.arange(w) / 2.0 - 0.25
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    fy = (y - y0)[:, None, None]
    fx = (x - x0)[None, :, None]
    y1 = np.clip(y0 + 1, 0, ph - 1)
    x1 = np.clip(x0 + 1, 0, pw - 1)
    y0 = np.clip(y0, 0, ph - 1)
    x0 = np.clip(x0, 0, pw - 1)
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def pull_push(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill invalid pixels of ``values`` (H, W, C) from the valid ones.

    Pull: each coarser pixel is the mean of its valid 2x2 children, down to
    1x1. Push: from coarse to fine, invalid pixels take the bilinear upsample
    of the (already filled) coarser level; valid pixels are never touched.
    """
    if not valid.any():
        raise UnrenderableView("no valid pixel to fill from")
    levels = [(values.astype(np.float64), valid.copy())]
    while levels[-1][1].shape != (1, 1):
        v, m = levels[-1]
        h, w = m.shape
        ph, pw = h + (h & 1), w + (w & 1)
        vs = np.zeros((ph, pw, v.shape[2]))
        ms = np.zeros((ph, pw))
        vs[:h, :w] = np.where(m[..., None], v, 0.0)
        ms[:h, :w] = m
        s = vs.reshape(ph // 2, 2, pw // 2, 2, -1).sum(axis=(1, 3))
        c = ms.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
        mean = s / np.maximum(c, 1.0)[..., None]
        levels.append((mean, c > 0))
    filled = levels[-1][0]
    for v, m in reversed(levels[:-1]):
        up = _upsample_bilinear(filled, *m.shape)
        filled = np.where(m[..., None], v, up)
    return filled


def coverage_mask(valid: np.ndarray, cell: int) -> np.ndarray:
    """True where the pixel's ``cell x cell`` block contains any valid pixel."""
    H, W = valid.shape
    if cell == 1:
        return valid.copy()
    ph = -(-H // cell) * cell
    pw = -(-W // cell) * cell
    pad = np.zeros((ph, pw), bool)
    pad[:H, :W] = valid
    blocks = pad.reshape(ph // cell, cell, pw // cell, cell).any(axis=(1, 3))
    return np.repeat(np.repeat(blocks, cell, axis=0), cell, axis=1)[:H, :W]


def fill_holes(fb: Framebuffer) -> Framebuffer:
    """Pull-push inpainting of color and depth; valid pixels are kept bit-exact."""
    if not fb.valid.any():
        raise UnrenderableView("framebuffer has no valid pixel")
    H, W = fb.valid.shape
    stacked = np.concatenate(
        [fb.color.astype(np.float64), np.where(fb.valid, fb.depth, 0.0)[..., None]], axis=2
    )
    filled = pull_push(stacked, fb.valid)
    color = np.clip(np.floor(filled[..., :3] + 0.5), 0, 255).astype(np.uint8)
    color[fb.valid] = fb.color[fb.valid]
    depth = np.where(fb.valid, fb.depth, filled[..., 3])
    return Framebuffer(color, depth, np.ones((H, W), bool), fb.point_index)


def render(cloud: PointCloud, pose: RigidPose, K: Intrinsics,
           config: RenderConfig = RenderConfig()) -> RenderResult:
    """Render RGB and background-filtered depth of ``cloud`` seen from ``pose``.

    Raises :class:`UnrenderableView` when no pixel receives a point.
    """
    fb = accumulate_colors(cloud, pose, K, depth_pass(cloud, pose, K), config)
    if config.depth_filter:
        fb = hierarchical_depth_filter(fb, config)
    if not fb.valid.any():
        raise UnrenderableView("no point projects into the view")
    rgb = fill_holes(fb).color if config.fill_holes else fb.color
    return RenderResult(
        rgb=rgb,
        depth=fb.depth,
        valid=fb.valid,
        support=coverage_mask(fb.valid, config.support_cell),
        point_index=fb.point_index,
    )


def save_color_png(path: str | Path, rgb: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB").save(path)


def save_depth_png(path: str | Path, depth: np.ndarray) -> None:
    """16-bit PNG in millimeters, 0 where invalid; clipped at 65.535 m."""
    mm = np.where(np.isfinite(depth), np.round(depth * 1000.0), 0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)


def load_depth_png(path: str | Path) -> np.ndarray:
    mm = np.asarray(Image.open(path)).astype(np.float64)
    return np.where(mm > 0, mm / 1000.0, np.inf)
