"""Lifting keypoints of a rendered view to world points.

Depth comes from the nearest pixel of the (unfilled) depth map. When enough
LiDAR points from the surrounding pixels agree with that depth, the keypoint
ray is intersected with a plane fitted through them instead, which removes
the error of using one point's depth for a sub-pixel location on a slanted
surface. In sparse renders the nearest pixel is often a hole; the closest
measured pixel of a wider window then seeds the depth band, and only a
plane fit through measured points may lift the keypoint.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .config import LiftConfig
from .geometry import Intrinsics, RigidPose
from .renderer import RenderConfig, RenderResult


def nearest_pixel(xy: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer (col, row) of the pixel containing each position, and an in-bounds mask."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    c = np.floor(xy[:, 0] + 0.5).astype(np.int64)
    r = np.floor(xy[:, 1] + 0.5).astype(np.int64)
    ok = (c >= 0) & (c < shape[1]) & (r >= 0) & (r < shape[0])
    return np.clip(c, 0, shape[1] - 1), np.clip(r, 0, shape[0] - 1), ok


def lift_keypoints(xy: np.ndarray, view: RenderResult, pose: RigidPose, K: Intrinsics,
                   cloud: PointCloud | None = None, config: LiftConfig = LiftConfig(),
                   render_config: RenderConfig = RenderConfig()) -> tuple[np.ndarray, np.ndarray]:
    """World points for keypoints ``xy`` of a view rendered at camera-to-world ``pose``.

    Returns ``(points (N, 3), ok (N,))``. Keypoints whose nearest pixel has no
    measured depth, or whose neighbourhood is clearly not planar, are not
    lifted (``ok`` false, point NaN).
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    n = len(xy)
    out = np.full((n, 3), np.nan)
    if n == 0:
        return out, np.zeros(0, dtype=bool)
    c, r, inb = nearest_pixel(xy, view.depth.shape)
    ok = inb & view.valid[r, c]
    z0 = np.where(ok, view.depth[r, c], np.nan)
    rays = np.column_stack([(xy[:, 0] - K.cx) / K.fx, (xy[:, 1] - K.cy) / K.fy, np.ones(n)])
    cam = rays * z0[:, None]  # camera frame, z = z0
    use_plane = np.zeros(n, dtype=bool)
    fitting = config.plane_fit and cloud is not None and view.point_index is not None
    if fitting and ok.any():
        plane_t = _plane_depths(xy, c, r, ok, z0, rays, view, pose, K, cloud, config, render_config,
                                config.window_radius)
        use_plane = np.isfinite(plane_t)
        cam[use_plane] = rays[use_plane] * plane_t[use_plane, None]
        if config.reject_nonplanar:
            ok &= ~np.isneginf(plane_t)
        if not config.fallback_pixel_depth:
            ok &= use_plane
    hole = inb & ~view.valid[r, c]
    if fitting and config.sparse_window_radius > 0 and hole.any():
        zs = _window_seed(xy, c, r, hole, view.depth, view.valid, config.sparse_window_radius)
        seeded = np.isfinite(zs)
        plane_t = _plane_depths(xy, c, r, seeded, zs, rays, view, pose, K, cloud, config, render_config,
                                config.sparse_window_radius)
        got = seeded & np.isfinite(plane_t)
        cam[got] = rays[got] * plane_t[got, None]
        ok |= got
    out[ok] = pose.apply(cam[ok])
    return out, ok


def _window_seed(xy, c, r, sel, depth, valid, rad):
    """Depth of the measured pixel closest to each selected keypoint within ``rad``; NaN if none."""
    H, W = depth.shape
    offs = np.arange(-rad, rad + 1)
    dr, dc = np.meshgrid(offs, offs, indexing="ij")
    idx = np.flatnonzero(sel)
    rr = r[idx, None] + dr.ravel()[None, :]
    cc = c[idx, None] + dc.ravel()[None, :]
    inside = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
    rr, cc = np.clip(rr, 0, H - 1), np.clip(cc, 0, W - 1)
    d2 = (cc - xy[idx, 0, None]) ** 2 + (rr - xy[idx, 1, None]) ** 2
    d2 = np.where(inside & valid[rr, cc], d2, np.inf)
    # ties go to the nearer surface
    z = depth[rr, cc]
    best = np.lexsort((z, d2), axis=1)[:, 0] if len(idx) else np.zeros(0, np.int64)
    rows = np.arange(len(idx))
    out = np.full(len(xy), np.nan)
    hit = np.isfinite(d2[rows, best])
    out[idx[hit]] = z[rows, best][hit]
    return out


def _plane_depths(xy, c, r, ok, z0, rays, view, pose, K, cloud, config, render_config, rad):
    H, W = view.depth.shape
    offs = np.arange(-rad, rad + 1)
    dr, dc = np.meshgrid(offs, offs, indexing="ij")
    idx = np.flatnonzero(ok)
    rr = np.clip(r[idx, None] + dr.ravel()[None, :], 0, H - 1)
    cc = np.clip(c[idx, None] + dc.ravel()[None, :], 0, W - 1)
    inside = (r[idx, None] + dr.ravel() >= 0) & (r[idx, None] + dr.ravel() < H)
    inside &= (c[idx, None] + dc.ravel() >= 0) & (c[idx, None] + dc.ravel() < W)
    pid = view.point_index[rr, cc]
    zz = view.depth[rr, cc]
    band = render_config.band(z0[idx])
    measured = inside & view.valid[rr, cc] & (pid >= 0)
    member = measured & (np.abs(zz - z0[idx, None]) <= band[:, None])
    # a measured pixel outside the band means a silhouette runs through the window
    edge = np.any(measured & ~member, axis=1)
    # only windows at one pixel spacing can repeat a point id; duplicates are harmless
    w2c = pose.inverse()
    P = cloud.points[np.where(member, pid, 0)] @ w2c.rotation.T + w2c.translation  # camera frame
    cnt = member.sum(axis=1)
    wts = member.astype(np.float64)
    safe = np.maximum(cnt, 1)[:, None]
    mean = np.einsum("nk,nkd->nd", wts, P) / safe
    D = (P - mean[:, None, :]) * wts[..., None]
    cov = np.einsum("nki,nkj->nij", D, D) / safe[..., None]
    evals, evecs = np.linalg.eigh(cov)
    normal = evecs[:, :, 0]
    rms = np.sqrt(np.maximum(evals[:, 0], 0.0))
    # a proper plane needs spread in two directions (about a pixel footprint)
    spread_ok = np.sqrt(np.maximum(evals[:, 1], 0.0)) > 0.3 * z0[idx] / K.fx
    denom = np.einsum("nd,nd->n", normal, rays[idx])
    num = np.einsum("nd,nd->n", normal, mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    fit = (cnt >= config.min_points) & spread_ok
    planar = (rms <= config.max_rms_band * band) & ~edge
    good = fit & planar
    good &= np.abs(denom) > 1e-3 * np.linalg.norm(rays[idx], axis=1)
    good &= np.abs(t - z0[idx]) <= band
    # nan: no usable fit, fall back to the pixel depth; -inf: window not planar
    out = np.full(len(xy), np.nan)
    out[idx[good]] = t[good]
    out[idx[fit & ~planar]] = -np.inf
    return out
