"""Camera pose from 2D-3D correspondences: EPnP, RANSAC and Gauss-Newton refinement.

All public functions take and return camera-to-world poses; internally the
solvers work with world-to-camera transforms ``P_cam = R X + t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InsufficientCorrespondences, PoseNotFound
from .geometry import Intrinsics, RigidPose, so3_exp, umeyama_align

_COLLINEAR_DEG = 1.0


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 1000
    reproj_threshold: float = 3.0
    confidence: float = 0.999
    min_inliers: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.reproj_threshold > 0:
            raise ValueError("reproj_threshold must be > 0")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if self.min_inliers < 6:
            raise ValueError("min_inliers must be >= 6")


@dataclass(frozen=True)
class PoseEstimate:
    pose: RigidPose  # camera-to-world
    inliers: np.ndarray
    mean_reproj_error: float
    iterations: int = 0
    refine_flagged: bool = False

    @property
    def n_inliers(self) -> int:
        return len(self.inliers)


@dataclass(frozen=True)
class RefineInfo:
    iterations: int
    initial_cost: float
    final_cost: float
    flagged: bool  # first step failed to lower the cost; input returned


def _as_arrays(pixels, points):
    uv = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    X = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(uv) != len(X):
        raise ValueError("pixels and points must have equal length")
    return uv, X


def project_world(R: np.ndarray, t: np.ndarray, X: np.ndarray, K: Intrinsics):
    P = X @ R.T + t
    z = P[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([K.fx * P[:, 0] / z + K.cx, K.fy * P[:, 1] / z + K.cy], axis=1)
    return uv, z


def reprojection_errors(pose: RigidPose, pixels, points, K: Intrinsics) -> np.ndarray:
    """Per-correspondence pixel error for a camera-to-world ``pose``; inf behind the camera."""
    uv, X = _as_arrays(pixels, points)
    w2c = pose.inverse()
    proj, z = project_world(w2c.rotation, w2c.translation, X, K)
    err = np.linalg.norm(proj - uv, axis=1)
    err[~(z > 0)] = np.inf
    return err


# ---------------------------------------------------------------------------
# EPnP


def _control_points(X: np.ndarray):
    c0 = X.mean(axis=0)
    A = X - c0
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    scale = max(s[0], 1e-300)
    if s[1] <= 1e-9 * scale:
        raise DegenerateInputError("points are collinear")
    n = len(X)
    planar = s[2] <= 1e-9 * scale
    m = 2 if planar else 3
    axes = (s[:m, None] / np.sqrt(n)) * vt[:m]
    ctrl = np.vstack([c0, c0 + axes])
    # barycentric coordinates: X - c0 = alpha[1:] @ axes
    coef = A @ np.linalg.pinv(axes)
    alphas = np.hstack([1.0 - coef.sum(axis=1, keepdims=True), coef])
    return ctrl, alphas, planar


def _rho(ctrl: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    pairs = [(i, j) for i in range(len(ctrl)) for j in range(i + 1, len(ctrl))]
    return np.array([np.sum((ctrl[i] - ctrl[j]) ** 2) for i, j in pairs]), pairs


def _pose_from_camera_ctrl(cc: np.ndarray, alphas: np.ndarray, X: np.ndarray):
    Pc = alphas @ cc
    if np.mean(Pc[:, 2]) < 0:
        Pc = -Pc
    try:
        T = umeyama_align(X, Pc, with_scale=False)
    except DegenerateInputError:
        return None
    return T.rotation, T.translation


def _betas(V: np.ndarray, rho: np.ndarray, pairs, m: int) -> list[np.ndarray]:
    """Combination weights for null-space dimensions N = 1, 2, 3 (as available)."""
    # V: (k, m*3) null-space basis, best first
    k = V.shape[0]
    vecs = V.reshape(k, m, 3)
    out = []
    # N = 1
    v = vecs[0]
    dv = np.array([np.linalg.norm(v[i] - v[j]) for i, j in pairs])
    b = np.sum(dv * np.sqrt(rho)) / max(np.sum(dv * dv), 1e-300)
    out.append(np.array([b]))
    # N = 2 and 3: linearized distance constraints on beta products
    for N in (2, 3):
        if N > k:
            break
        terms = [(a, c) for a in range(N) for c in range(a, N)]
        if len(terms) > len(pairs):
            break
        L = np.empty((len(pairs), len(terms)))
        for r, (i, j) in enumerate(pairs):
            d = [vecs[a][i] - vecs[a][j] for a in range(N)]
            for col, (a, c) in enumerate(terms):
                L[r, col] = (1.0 if a == c else 2.0) * (d[a] @ d[c])
        bb = np.linalg.lstsq(L, rho, rcond=None)[0]
        diag = [bb[terms.index((a, a))] for a in range(N)]
        if diag[0] <= 0:
            bb = -bb
            diag = [-d for d in diag]
        beta = np.zeros(N)
        beta[0] = np.sqrt(max(diag[0], 0.0))
        for a in range(1, N):
            cross = bb[terms.index((0, a))]
            beta[a] = np.sign(cross) * np.sqrt(max(diag[a], 0.0)) if beta[0] > 0 else 0.0
        out.append(beta)
    # refine every initialisation over the full null-space basis (a 4-point
    # sample in general position leaves all four null vectors undetermined)
    nfull = min(k, len(pairs))
    refined = []
    for beta in out:
        full = np.zeros(nfull)
        full[: len(beta)] = beta
        refined.append(_gauss_newton_betas(full, vecs[:nfull], rho, pairs))
    return refined


def _gauss_newton_betas(beta, vecs, rho, pairs, iters: int = 10):
    I = [i for i, _ in pairs]
    J_ = [j for _, j in pairs]
    D = vecs[:, I] - vecs[:, J_]  # (N, pairs, 3)
    for _ in range(iters):
        d = np.tensordot(beta, D, axes=1)
        res = np.einsum("pk,pk->p", d, d) - rho
        jac = 2.0 * np.einsum("pk,npk->pn", d, D)
        try:
            step = np.linalg.solve(jac.T @ jac, -(jac.T @ res))
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        beta = beta + step
        if np.abs(step).max() < 1e-11 * max(np.abs(beta).max(), 1e-300):
            break
    return beta


def _p3p(f: np.ndarray, P: np.ndarray) -> list[np.ndarray]:
    """Grunert's quartic: camera-frame positions of three world points ``P``
    seen along unit bearings ``f``. Up to four real solutions."""
    a2 = np.sum((P[1] - P[2]) ** 2)
    b2 = np.sum((P[0] - P[2]) ** 2)
    c2 = np.sum((P[0] - P[1]) ** 2)
    if min(a2, b2, c2) < 1e-24:
        return []
    ca, cb, cg = f[1] @ f[2], f[0] @ f[2], f[0] @ f[1]
    q = (a2 - c2) / b2
    p = (a2 + c2) / b2
    coeffs = [
        (q - 1) ** 2 - 4 * c2 / b2 * ca ** 2,
        4 * (q * (1 - q) * cb - (1 - p) * ca * cg + 2 * c2 / b2 * ca ** 2 * cb),
        2 * (q ** 2 - 1 + 2 * q ** 2 * cb ** 2 + 2 * (b2 - c2) / b2 * ca ** 2
             - 4 * p * ca * cb * cg + 2 * (b2 - a2) / b2 * cg ** 2),
        4 * (-q * (1 + q) * cb + 2 * a2 / b2 * cg ** 2 * cb - (1 - p) * ca * cg),
        (1 + q) ** 2 - 4 * a2 / b2 * cg ** 2,
    ]
    if not np.all(np.isfinite(coeffs)):
        return []
    out = []
    for v in np.roots(coeffs):
        if abs(v.imag) > 1e-8 * max(1.0, abs(v)) or v.real <= 0:
            continue
        v = v.real
        den = 2 * (cg - v * ca)
        if abs(den) < 1e-15:
            continue
        u = ((q - 1) * v * v - 2 * q * cb * v + 1 + q) / den
        s1sq = c2 / (1 + u * u - 2 * u * cg)
        if u <= 0 or not s1sq > 0:
            continue
        s1 = np.sqrt(s1sq)
        out.append(np.stack([s1 * f[0], u * s1 * f[1], v * s1 * f[2]]))
    return out


def solve_pnp_minimal(pixels, points, K: Intrinsics) -> list[RigidPose]:
    """EPnP on n >= 4 correspondences; candidate camera-to-world poses, best first.

    Coplanar points use three control points. Exactly four non-coplanar
    points leave a four-dimensional null space whose distance constraints
    have spurious local minima, so that case is solved in closed form from
    three points (P3P) with the fourth ranking the roots. Raises
    :class:`DegenerateInputError` for collinear or coincident points.
    """
    uv, X = _as_arrays(pixels, points)
    if len(X) < 4:
        raise InsufficientCorrespondences("EPnP needs at least 4 correspondences")
    ctrl, alphas, planar = _control_points(X)
    if len(X) == 4 and not planar:
        cands = _minimal_p3p(uv, X, K)
        if cands:
            return cands
    m = len(ctrl)
    x = (uv[:, 0] - K.cx) / K.fx
    y = (uv[:, 1] - K.cy) / K.fy
    n = len(X)
    M = np.zeros((2 * n, 3 * m))
    for j in range(m):
        a = alphas[:, j]
        M[0::2, 3 * j] = a
        M[0::2, 3 * j + 2] = -a * x
        M[1::2, 3 * j + 1] = a
        M[1::2, 3 * j + 2] = -a * y
    _, _, vt = np.linalg.svd(M.T @ M)
    V = vt[::-1][:4]  # smallest singular vectors first
    rho, pairs = _rho(ctrl)
    cands = []
    for beta in _betas(V, rho, pairs, m):
        cc = np.tensordot(beta, V[: len(beta)].reshape(len(beta), m, 3), axes=1)
        sol = _pose_from_camera_ctrl(cc, alphas, X)
        if sol is None:
            continue
        R, t = sol
        proj, z = project_world(R, t, X, K)
        if not np.all(np.isfinite(proj)):
            continue
        err = float(np.mean(np.sum((proj - uv) ** 2, axis=1)))
        if np.sum(z > 0) < len(z) / 2:
            continue
        cands.append((err, R, t))
    cands.sort(key=lambda c: c[0])
    return [RigidPose(R, t).inverse() for _, R, t in cands]


def _minimal_p3p(uv, X, K):
    rays = np.column_stack([(uv[:, 0] - K.cx) / K.fx, (uv[:, 1] - K.cy) / K.fy, np.ones(len(uv))])
    f = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    cands = []
    for Pc in _p3p(f[:3], X[:3]):
        try:
            T = umeyama_align(X[:3], Pc, with_scale=False)
        except DegenerateInputError:
            continue
        proj, z = project_world(T.rotation, T.translation, X, K)
        if not np.all(z > 0):
            continue
        cands.append((float(np.sum((proj - uv) ** 2)), T.rotation, T.translation))
    cands.sort(key=lambda c: c[0])
    return [RigidPose(R, t).inverse() for _, R, t in cands]


# ---------------------------------------------------------------------------
# refinement


def residuals(world_to_cam: RigidPose, pixels, points, K: Intrinsics) -> np.ndarray:
    """Stacked reprojection residuals (2n,) ``[du0, dv0, du1, ...]``."""
    uv, X = _as_arrays(pixels, points)
    proj, _ = project_world(world_to_cam.rotation, world_to_cam.translation, X, K)
    return (proj - uv).ravel()


def reprojection_jacobian(world_to_cam: RigidPose, points, K: Intrinsics) -> np.ndarray:
    """d residual / d (omega, rho) for the left update ``T <- (Exp(omega), rho) * T``."""
    X = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    P = X @ world_to_cam.rotation.T + world_to_cam.translation
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    iz = 1.0 / z
    iz2 = iz * iz
    n = len(X)
    J = np.empty((2 * n, 6))
    # dpi/dP times [-[P]x | I]
    fu, fv = K.fx, K.fy
    J[0::2, 0] = -fu * x * y * iz2
    J[0::2, 1] = fu * (1.0 + x * x * iz2)
    J[0::2, 2] = -fu * y * iz
    J[0::2, 3] = fu * iz
    J[0::2, 4] = 0.0
    J[0::2, 5] = -fu * x * iz2
    J[1::2, 0] = -fv * (1.0 + y * y * iz2)
    J[1::2, 1] = fv * x * y * iz2
    J[1::2, 2] = fv * x * iz
    J[1::2, 3] = 0.0
    J[1::2, 4] = fv * iz
    J[1::2, 5] = -fv * y * iz2
    return J


def left_update(world_to_cam: RigidPose, delta: np.ndarray) -> RigidPose:
    E = so3_exp(delta[:3])
    return RigidPose(E @ world_to_cam.rotation, E @ world_to_cam.translation + delta[3:])


def _cost(T: RigidPose, uv, X, K) -> float:
    proj, z = project_world(T.rotation, T.translation, X, K)
    if not np.all(z > 0):
        return np.inf
    return float(np.sum((proj - uv) ** 2))


def refine_pose(initial: RigidPose, pixels, points, K: Intrinsics, max_iterations: int = 20,
                tol: float = 1e-10, return_info: bool = False):
    """Gauss-Newton on SE(3) minimizing the summed squared reprojection error.

    ``initial`` is camera-to-world. Steps that do not lower the cost are
    halved (up to 10 times); the result never has a higher cost than the
    input. If the very first step cannot lower the cost the input is returned
    unchanged and ``flagged`` is set in the optional info.
    """
    uv, X = _as_arrays(pixels, points)
    if len(X) < 6:
        raise InsufficientCorrespondences("refinement needs at least 6 correspondences")
    T = initial.inverse()
    cost0 = cost = _cost(T, uv, X, K)
    flagged = False
    it = 0
    if np.isfinite(cost):
        for it in range(1, max_iterations + 1):
            r = residuals(T, uv, X, K)
            J = reprojection_jacobian(T, X, K)
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
            if np.linalg.norm(delta) < tol:
                break
            step = delta
            accepted = False
            for _ in range(10):
                cand = left_update(T, step)
                c = _cost(cand, uv, X, K)
                if c < cost:
                    accepted = True
                    break
                step = step * 0.5
            if not accepted:
                flagged = it == 1
                break
            T, cost = cand, c
    else:
        flagged = True
    out = initial if (flagged or cost >= cost0) else T.inverse()
    if return_info:
        return out, RefineInfo(it, cost0, min(cost, cost0), flagged)
    return out


# ---------------------------------------------------------------------------
# RANSAC


def _near_collinear(Y: np.ndarray, min_deg: float = _COLLINEAR_DEG) -> bool:
    """True if any three of the sample points form a triangle with an angle
    above ``180 - min_deg`` degrees (or have coincident vertices)."""
    cos_lim = np.cos(np.radians(180.0 - min_deg))
    k = len(Y)
    for a in range(k):
        for b in range(a + 1, k):
            for c in range(b + 1, k):
                tri = (Y[a], Y[b], Y[c])
                for i in range(3):
                    p, q, r = tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]
                    u, v = q - p, r - p
                    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
                    if nu < 1e-12 or nv < 1e-12:
                        return True
                    if (u @ v) / (nu * nv) <= cos_lim:
                        return True
    return False


def _required_iterations(w: float, confidence: float, cap: int) -> int:
    p = w ** 4
    if p >= 1.0:
        return 1
    if p <= 0.0:
        return cap
    n = np.log(1.0 - confidence) / np.log(1.0 - p)
    return int(min(cap, max(1, np.ceil(n))))


def solve_pnp_ransac(pixels, points, K: Intrinsics, config: RansacConfig = RansacConfig()) -> PoseEstimate:
    """Robust pose: EPnP hypotheses on 4-point samples, inlier consensus, refinement.

    Deterministic for a given ``config.seed``. Raises
    :class:`InsufficientCorrespondences` when there are fewer than
    ``max(min_inliers, 6)`` correspondences and :class:`PoseNotFound` when no
    hypothesis gathers ``min_inliers`` inliers.
    """
    uv, X = _as_arrays(pixels, points)
    n = len(X)
    if n < max(config.min_inliers, 6):
        raise InsufficientCorrespondences(f"{n} correspondences, need {max(config.min_inliers, 6)}")
    rng = np.random.default_rng(config.seed)
    thr = config.reproj_threshold
    best = (0, np.inf, None)  # count, mean error, pose
    needed = config.max_iterations
    it = 0
    while it < needed:
        it += 1
        idx = rng.choice(n, 4, replace=False)
        if _near_collinear(X[idx]):
            continue
        try:
            cands = solve_pnp_minimal(uv[idx], X[idx], K)
        except DegenerateInputError:
            continue
        for pose in cands:
            err = reprojection_errors(pose, uv, X, K)
            inl = err < thr
            cnt = int(inl.sum())
            if cnt == 0:
                continue
            merr = float(err[inl].mean())
            if cnt > best[0] or (cnt == best[0] and merr < best[1]):
                best = (cnt, merr, pose)
                needed = _required_iterations(cnt / n, config.confidence, config.max_iterations)
    if best[2] is None or best[0] < config.min_inliers:
        raise PoseNotFound(f"best hypothesis has {best[0]} inliers, need {config.min_inliers}")
    pose = best[2]
    inl = np.flatnonzero(reprojection_errors(pose, uv, X, K) < thr)
    flagged = False
    for _ in range(2):
        refined, info = refine_pose(pose, uv[inl], X[inl], K, return_info=True)
        flagged = flagged or info.flagged
        new_inl = np.flatnonzero(reprojection_errors(refined, uv, X, K) < thr)
        same = np.array_equal(new_inl, inl)
        pose, inl = refined, new_inl
        if same:
            break
    if len(inl) < config.min_inliers:
        raise PoseNotFound(f"{len(inl)} inliers after refinement, need {config.min_inliers}")
    err = reprojection_errors(pose, uv[inl], X[inl], K)
    return PoseEstimate(pose, inl, float(err.mean()), it, flagged)
