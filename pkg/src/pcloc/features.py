"""Corner detection, oriented binary descriptors and Hamming matching.

Detection is a FAST-style circle test used as a cheap candidate gate, Harris
response for ranking, greedy non-max suppression and an intensity-centroid
orientation. Descriptors are 256 steered intensity comparisons on a smoothed
image, sampled with the frozen pattern in ``_pattern``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
from scipy import ndimage

from ._pattern import PATTERN
from .errors import ImageTooSmall

DESCRIPTOR_BYTES = 32
PATCH_RADIUS = 15
BORDER = PATCH_RADIUS + 1
MASK_MARGIN = 16
N_ANGLE_BINS = 36

# Bresenham circle of radius 3, clockwise from 12 o'clock.
_CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
])


@dataclass(frozen=True)
class FeatureConfig:
    max_features: int = 1000
    fast_threshold: int = 12
    fast_min_count: int = 6
    harris_k: float = 0.04
    harris_sigma: float = 1.2
    harris_threshold: float = 2e2
    nms_radius: int = 5
    subpixel: bool = True
    smoothing_sigma: float = 1.6
    n_levels: int = 1
    scale_factor: float = 1.5

    def __post_init__(self):
        if self.max_features < 0:
            raise ValueError("max_features must be >= 0")
        if self.nms_radius < 0 or self.fast_threshold < 0:
            raise ValueError("nms_radius and fast_threshold must be >= 0")
        if not 1 <= self.n_levels <= 3:
            raise ValueError("n_levels must be in [1, 3]")
        if self.scale_factor <= 1:
            raise ValueError("scale_factor must be > 1")


class Keypoint(NamedTuple):
    position: tuple[float, float]
    response: float
    orientation: float


@dataclass(frozen=True)
class FeatureSet:
    """Keypoints as parallel arrays, sorted by descending response.

    ``xy`` is (N, 2) float64 pixel positions in the full-resolution image,
    ``descriptors`` is (N, 32) uint8 (256 bits, little bit order within a byte
    as produced by ``np.packbits(..., bitorder="little")``).
    """

    xy: np.ndarray
    response: np.ndarray
    orientation: np.ndarray
    descriptors: np.ndarray
    level: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.xy)
        if not (len(self.response) == len(self.orientation) == len(self.descriptors) == n):
            raise ValueError("parallel arrays must have equal length")
        if self.level is None:
            object.__setattr__(self, "level", np.zeros(n, dtype=np.int8))

    def __len__(self):
        return len(self.xy)

    def keypoint(self, i: int) -> Keypoint:
        return Keypoint((float(self.xy[i, 0]), float(self.xy[i, 1])), float(self.response[i]),
                        float(self.orientation[i]))

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx)
        return FeatureSet(self.xy[idx], self.response[idx], self.orientation[idx],
                          self.descriptors[idx], self.level[idx])

    @staticmethod
    def empty() -> "FeatureSet":
        return FeatureSet(np.zeros((0, 2)), np.zeros(0), np.zeros(0),
                          np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8))


def to_gray(image: np.ndarray) -> np.ndarray:
    """Integer BT.601 luma, rounded half up. Accepts (H, W) or (H, W, 3)."""
    img = np.asarray(image)
    if img.ndim == 2:
        return img.astype(np.uint8) if img.dtype != np.uint8 else img
    rgb = img[..., :3].astype(np.int32)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def fast_candidates(gray: np.ndarray, threshold: int, min_count: int) -> np.ndarray:
    """Boolean map of pixels with at least ``min_count`` circle pixels all brighter
    (or all darker) than the center by more than ``threshold``.

    Contiguity is not required: X-junctions, whose differing pixels form two
    opposite arcs, must pass.
    """
    g = gray.astype(np.int16)
    h, w = g.shape
    inner = g[3:h - 3, 3:w - 3]
    brighter = np.zeros(inner.shape, dtype=np.int8)
    darker = np.zeros(inner.shape, dtype=np.int8)
    for dx, dy in _CIRCLE:
        ring = g[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]
        brighter += ring > inner + threshold
        darker += ring < inner - threshold
    out = np.zeros((h, w), dtype=bool)
    out[3:h - 3, 3:w - 3] = np.maximum(brighter, darker) >= min_count
    return out


def harris_response(gray: np.ndarray, sigma: float = 1.2, k: float = 0.04) -> np.ndarray:
    """Harris corner measure with per-pixel intensity gradients (Sobel / 8)."""
    g = gray.astype(np.float64)
    ix = ndimage.sobel(g, axis=1, mode="nearest") / 8.0
    iy = ndimage.sobel(g, axis=0, mode="nearest") / 8.0
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def non_max_suppression(xy: np.ndarray, score: np.ndarray, radius: float) -> np.ndarray:
    """Greedy suppression in descending score; ties broken by (y, x) so the
    result does not depend on input order. Returns kept indices in score order."""
    if len(xy) == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((xy[:, 0], xy[:, 1], -score))
    if radius <= 0:
        return order
    cell = float(radius)
    r2 = radius * radius
    grid: dict[tuple[int, int], list[int]] = {}
    kept = []
    for i in order:
        x, y = xy[i]
        cx, cy = int(x // cell), int(y // cell)
        ok = True
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for j in grid.get((gx, gy), ()):
                    d = xy[j] - xy[i]
                    if d[0] * d[0] + d[1] * d[1] <= r2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            kept.append(i)
            grid.setdefault((cx, cy), []).append(i)
    return np.asarray(kept, dtype=np.int64)


def _subpixel(resp: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 1D parabola through the response in each axis
    c = resp[y, x]
    l, r = resp[y, x - 1], resp[y, x + 1]
    u, d = resp[y - 1, x], resp[y + 1, x]
    den_x = l - 2 * c + r
    den_y = u - 2 * c + d
    with np.errstate(divide="ignore", invalid="ignore"):
        ox = np.where(den_x < 0, 0.5 * (l - r) / den_x, 0.0)
        oy = np.where(den_y < 0, 0.5 * (u - d) / den_y, 0.0)
    return np.clip(ox, -0.5, 0.5), np.clip(oy, -0.5, 0.5)


def _disk_offsets(radius: int):
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    inside = xx * xx + yy * yy <= radius * radius
    return xx[inside], yy[inside]


_DISK_X, _DISK_Y = _disk_offsets(PATCH_RADIUS)


def orientation(gray: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle over a radius-15 disk, radians in (-pi, pi]."""
    g = gray.astype(np.float64)
    vals = g[y[:, None] + _DISK_Y[None, :], x[:, None] + _DISK_X[None, :]]
    m10 = vals @ _DISK_X.astype(np.float64)
    m01 = vals @ _DISK_Y.astype(np.float64)
    return np.arctan2(m01, m10)


def _build_steered_patterns() -> np.ndarray:
    pat = np.asarray(PATTERN, dtype=np.float64)
    out = np.empty((N_ANGLE_BINS, len(pat), 4), dtype=np.int64)
    for b in range(N_ANGLE_BINS):
        a = 2 * np.pi * b / N_ANGLE_BINS
        c, s = np.cos(a), np.sin(a)
        for k in (0, 2):
            px, py = pat[:, k], pat[:, k + 1]
            rx = np.clip(np.round(c * px - s * py), -PATCH_RADIUS, PATCH_RADIUS)
            ry = np.clip(np.round(s * px + c * py), -PATCH_RADIUS, PATCH_RADIUS)
            out[b, :, k] = rx
            out[b, :, k + 1] = ry
    return out


_STEERED = _build_steered_patterns()


def describe(smooth: np.ndarray, x: np.ndarray, y: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """256-bit steered descriptors at integer positions ``(x, y)``.

    Bit ``i`` is set when the smoothed intensity at pattern point 1 is lower
    than at point 2.
    """
    if len(x) == 0:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    bins = np.round(angle / (2 * np.pi) * N_ANGLE_BINS).astype(np.int64) % N_ANGLE_BINS
    pat = _STEERED[bins]  # (N, 256, 4)
    xs, ys = x[:, None], y[:, None]
    a = smooth[ys + pat[..., 1], xs + pat[..., 0]]
    b = smooth[ys + pat[..., 3], xs + pat[..., 2]]
    return np.packbits(a < b, axis=1, bitorder="little")


def _detect_level(gray, valid_dist, scale, cfg: FeatureConfig):
    h, w = gray.shape
    cand = fast_candidates(gray, cfg.fast_threshold, cfg.fast_min_count)
    resp = harris_response(gray, cfg.harris_sigma, cfg.harris_k)
    cand &= resp > cfg.harris_threshold
    cand[:BORDER, :] = False
    cand[h - BORDER:, :] = False
    cand[:, :BORDER] = False
    cand[:, w - BORDER:] = False
    # local maximum of the response in the 3x3 neighborhood
    cand &= resp >= ndimage.maximum_filter(resp, size=3, mode="nearest")
    ys, xs = np.nonzero(cand)
    if valid_dist is not None and len(xs):
        fx = np.minimum(np.round(xs * scale).astype(np.int64), valid_dist.shape[1] - 1)
        fy = np.minimum(np.round(ys * scale).astype(np.int64), valid_dist.shape[0] - 1)
        # slack for the sub-pixel shift (at most half a pixel per axis at this level)
        keep = valid_dist[fy, fx] >= MASK_MARGIN + scale
        xs, ys = xs[keep], ys[keep]
    score = resp[ys, xs]
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    kept = non_max_suppression(pts, score, cfg.nms_radius / scale)
    xs, ys, score = xs[kept], ys[kept], score[kept]
    fxy = np.stack([xs, ys], axis=1).astype(np.float64)
    if cfg.subpixel and len(xs):
        ox, oy = _subpixel(resp, xs, ys)
        fxy += np.stack([ox, oy], axis=1)
    ang = orientation(gray, xs, ys)
    smooth = ndimage.gaussian_filter(gray.astype(np.float32), cfg.smoothing_sigma, mode="nearest")
    desc = describe(smooth, xs, ys, ang)
    return fxy * scale, score, ang, desc


def detect_and_describe(image: np.ndarray, max_features: int | None = None,
                        mask: np.ndarray | None = None,
                        config: FeatureConfig | None = None) -> FeatureSet:
    """Detect up to ``max_features`` corners and compute their descriptors.

    ``mask`` marks trustworthy pixels; a keypoint closer than 16 px to any
    untrusted pixel is dropped. The result is deterministic.
    """
    cfg = config or FeatureConfig()
    limit = cfg.max_features if max_features is None else int(max_features)
    gray = to_gray(image)
    h, w = gray.shape
    if h < 64 or w < 64:
        raise ImageTooSmall(f"image {w}x{h} is smaller than 64x64")
    if limit == 0:
        return FeatureSet.empty()
    valid_dist = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gray.shape:
            raise ValueError("mask shape must match image")
        if not mask.all():
            valid_dist = ndimage.distance_transform_edt(mask)
    parts = []
    level_img = gray
    for lvl in range(cfg.n_levels):
        scale = cfg.scale_factor ** lvl
        if lvl > 0:
            nh, nw = int(round(h / scale)), int(round(w / scale))
            if nh < 2 * BORDER + 8 or nw < 2 * BORDER + 8:
                break
            level_img = np.clip(np.round(ndimage.zoom(gray.astype(np.float64), (nh / h, nw / w), order=1,
                                                      mode="nearest", grid_mode=True)), 0, 255).astype(np.uint8)
        xy, score, ang, desc = _detect_level(level_img, valid_dist, scale, cfg)
        parts.append((xy, score, ang, desc, np.full(len(xy), lvl, dtype=np.int8)))
    xy = np.concatenate([p[0] for p in parts])
    if len(xy) == 0:
        return FeatureSet.empty()
    score = np.concatenate([p[1] for p in parts])
    ang = np.concatenate([p[2] for p in parts])
    desc = np.concatenate([p[3] for p in parts])
    lvl = np.concatenate([p[4] for p in parts])
    order = np.lexsort((lvl, xy[:, 0], xy[:, 1], -score))[:limit]
    return FeatureSet(xy[order], score[order], ang[order], desc[order], lvl[order])


class Matches(NamedTuple):
    index_a: np.ndarray
    index_b: np.ndarray
    distance: np.ndarray

    def __len__(self):  # type: ignore[override]
        return len(self.index_a)


@numba.njit(cache=True, nogil=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@numba.njit(cache=True, nogil=True)
def _hamming_kernel(a, b, out):
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            d = 0
            for k in range(a.shape[1]):
                d += _popcount64(a[i, k] ^ b[j, k])
            out[i, j] = d


def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances between packed 256-bit descriptors."""
    a = np.ascontiguousarray(da, dtype=np.uint8).view(np.uint64)
    b = np.ascontiguousarray(db, dtype=np.uint8).view(np.uint64)
    out = np.empty((len(a), len(b)), dtype=np.int32)
    _hamming_kernel(a, b, out)
    return out


def _second_best(d: np.ndarray, axis: int) -> np.ndarray:
    if d.shape[axis] < 2:
        return np.full(d.shape[1 - axis], np.inf)
    return np.partition(d, 1, axis=axis).take(1, axis=axis).astype(np.float64)


def match_features(a: FeatureSet, b: FeatureSet, max_distance: int = 64,
                   ratio: float = 0.9, radius: float | None = None) -> Matches:
    """Mutual nearest neighbours under Hamming distance.

    A pair survives when its distance is at most ``max_distance`` and the ratio
    test (best / second best <= ``ratio``) holds in both directions, which
    keeps the result symmetric in its arguments. Ties in the nearest
    neighbour go to the lower index. With ``radius`` only keypoints at most
    that many pixels apart are candidates, for both the match and the ratio
    test.
    """
    allowed = None
    if radius is not None:
        d2 = ((a.xy[:, None, :] - b.xy[None, :, :]) ** 2).sum(axis=2)
        allowed = d2 <= radius * radius
    return match_descriptors(a.descriptors, b.descriptors, max_distance, ratio, allowed)


def hamming_rows(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distances between equally shaped descriptor arrays."""
    x = np.bitwise_xor(np.asarray(da, dtype=np.uint8), np.asarray(db, dtype=np.uint8))
    return np.bitwise_count(x).sum(axis=-1, dtype=np.int64)


def match_descriptors(da: np.ndarray, db: np.ndarray, max_distance: int = 64,
                      ratio: float = 0.9, allowed: np.ndarray | None = None) -> Matches:
    """:func:`match_features` on raw (N, 32) descriptor arrays; ``allowed``
    optionally restricts the candidate pairs."""
    empty = Matches(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int32))
    if len(da) == 0 or len(db) == 0:
        return empty
    d = hamming_matrix(da, db)
    if allowed is not None:
        # beyond any real distance, so excluded pairs never win or act as second best
        d = np.where(allowed, d, 10_000).astype(np.int32)
    ab = np.argmin(d, axis=1)
    ba = np.argmin(d, axis=0)
    ia = np.arange(len(da))
    mutual = ba[ab] == ia
    best = d[ia, ab]
    sec_a = _second_best(d, 1)
    sec_b = _second_best(d, 0)[ab]
    ok = mutual & (best <= max_distance)
    ok &= (best <= ratio * sec_a) & (best <= ratio * sec_b)
    ia = ia[ok]
    return Matches(ia, ab[ok], best[ok].astype(np.int32))
