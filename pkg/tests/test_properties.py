"""Property-based checks of the invariants each module promises."""

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pcloc.cloud import PointCloud
from pcloc.evaluation import ape, ssim
from pcloc.features import hamming_matrix, match_descriptors
from pcloc.geometry import (RigidPose, SimTransform, Trajectory, back_project, compose, invert, project_points,
                            so3_exp, so3_log, umeyama_align)
from pcloc.mapping import Landmark, prune_landmarks
from pcloc.pose import reprojection_errors, refine_pose
from pcloc.renderer import Framebuffer, RenderConfig, depth_pass, fill_holes, render

from conftest import SMALL_K

settings.register_profile("pcloc", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pcloc")

seeds = st.integers(0, 2 ** 32 - 1)


def pose_from(seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return RigidPose(so3_exp(rng.normal(size=3)), rng.normal(size=3) * scale)


@given(st.lists(arrays(np.float64, 3, elements=st.floats(-3.0, 3.0)), min_size=1, max_size=3))
def test_so3_log_exp_round_trip(ws):
    for w in ws:
        assume(np.linalg.norm(w) < np.pi - 1e-3)
        np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-9)


@given(seeds, seeds)
def test_group_laws(sa, sb):
    a, b = pose_from(sa), pose_from(sb)
    e = compose(a, invert(a))
    np.testing.assert_allclose(e.matrix(), np.eye(4), atol=1e-12)
    lhs, rhs = invert(compose(a, b)), compose(invert(b), invert(a))
    np.testing.assert_allclose(lhs.matrix(), rhs.matrix(), atol=1e-12)
    R = compose(a, b).rotation
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9


@given(seeds)
def test_project_back_project_round_trip(seed):
    rng = np.random.default_rng(seed)
    c2w = pose_from(seed)
    uv = rng.uniform([0, 0], [SMALL_K.width - 1, SMALL_K.height - 1], size=(50, 2))
    z = rng.uniform(0.2, 20.0, 50)
    X = back_project(uv, z, c2w, SMALL_K)
    uv2, z2, ok = project_points(X, c2w.inverse(), SMALL_K)
    assert ok.all()
    np.testing.assert_allclose(uv2, uv, atol=1e-9)
    np.testing.assert_allclose(back_project(uv2, z2, c2w, SMALL_K), X, atol=1e-9)


@given(seeds, st.floats(0.2, 5.0), st.booleans())
def test_umeyama_recovers_inverse(seed, scale, with_scale):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(30, 3)) * 2
    T = SimTransform(scale if with_scale else 1.0, so3_exp(rng.normal(size=3)), rng.normal(size=3))
    S = umeyama_align(T.apply(P), P, with_scale=with_scale)
    np.testing.assert_allclose(S.apply(T.apply(P)), P, atol=1e-9)
    assert S.scale > 0 and abs(np.linalg.det(S.rotation) - 1) < 1e-9


@given(seeds)
def test_ape_invariant_to_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    ts = np.arange(20) / 30.0
    gt = Trajectory(ts, tuple(pose_from(int(s)) for s in rng.integers(0, 2 ** 31, 20)))
    noisy = Trajectory(ts, tuple(RigidPose(p.rotation, p.translation + rng.normal(0, 0.01, 3))
                                 for p in gt.poses))
    g = pose_from(seed + 1, scale=10.0)
    moved = noisy.transformed(g)
    a, b = ape(noisy, gt), ape(moved, gt)
    assert abs(a.pos_rmse - b.pos_rmse) < 1e-9
    assert abs(a.ang_rmse - b.ang_rmse) < 1e-6


@given(seeds)
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (32, 40), dtype=np.uint8)
    b = np.clip(a + rng.normal(0, 30, a.shape), 0, 255).astype(np.uint8)
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) < 1e-12
    assert -1 <= s <= 1
    assert abs(ssim(a, a) - 1) < 1e-12


@given(seeds, st.integers(1, 40), st.integers(1, 40))
def test_matching_is_symmetric(seed, na, nb):
    rng = np.random.default_rng(seed)
    da = rng.integers(0, 256, (na, 32), dtype=np.uint8)
    # half of b are noisy copies of a so that some pairs survive
    db = rng.integers(0, 256, (nb, 32), dtype=np.uint8)
    k = min(na, nb) // 2
    flips = rng.random((k, 32, 8)) < 0.05
    db[:k] = da[:k] ^ np.packbits(flips, axis=-1).reshape(k, 32)
    ab = match_descriptors(da, db)
    ba = match_descriptors(db, da)
    assert set(zip(ab.index_a, ab.index_b)) == set(zip(ba.index_b, ba.index_a))
    assert len(set(ab.index_a)) == len(ab.index_a) and len(set(ab.index_b)) == len(ab.index_b)
    assert np.all(ab.distance <= 256)
    np.testing.assert_array_equal(ab.distance, hamming_matrix(da, db)[ab.index_a, ab.index_b])


@given(seeds, st.floats(0.02, 0.95))
def test_fill_never_alters_valid_pixels(seed, fraction):
    rng = np.random.default_rng(seed)
    H, W = 24, 33
    valid = rng.random((H, W)) < fraction
    assume(valid.any())
    color = np.where(valid[..., None], rng.integers(0, 256, (H, W, 3)), 0).astype(np.uint8)
    depth = np.where(valid, rng.uniform(0.5, 9.0, (H, W)), np.inf)
    out = fill_holes(Framebuffer(color, depth, valid, None))
    np.testing.assert_array_equal(out.color[valid], color[valid])
    np.testing.assert_array_equal(out.depth[valid], depth[valid])
    assert out.valid.all() and np.isfinite(out.depth).all()


def _small_cloud(seed, n=4000):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-1.5, 1.5, n), rng.uniform(1.0, 4.0, n)])
    return PointCloud(pts, rng.integers(0, 256, (n, 3), dtype=np.uint8))


@settings(max_examples=20)
@given(seeds)
def test_render_ignores_point_order(seed):
    cloud = _small_cloud(seed)
    perm = np.random.default_rng(seed + 1).permutation(len(cloud))
    shuffled = PointCloud(cloud.points[perm], cloud.colors[perm])
    cfg = RenderConfig(fill_holes=False)
    a = render(cloud, RigidPose.identity(), SMALL_K, cfg)
    b = render(shuffled, RigidPose.identity(), SMALL_K, cfg)
    np.testing.assert_array_equal(a.rgb, b.rgb)
    np.testing.assert_array_equal(a.depth, b.depth)
    np.testing.assert_array_equal(a.valid, b.valid)


@settings(max_examples=20)
@given(seeds, st.floats(0.05, 0.9))
def test_decimation_shrinks_coverage(seed, fraction):
    cloud = _small_cloud(seed)
    full = depth_pass(cloud, RigidPose.identity(), SMALL_K).valid
    sub = depth_pass(cloud.decimate(fraction, seed=seed), RigidPose.identity(), SMALL_K).valid
    assert not np.any(sub & ~full)


@given(seeds, st.floats(0.0, 0.2), st.floats(0.0, 2.0))
def test_refinement_never_increases_error(seed, dt, noise):
    rng = np.random.default_rng(seed)
    K = SMALL_K
    gt = RigidPose(so3_exp(rng.normal(0, 0.1, 3)), rng.normal(0, 0.1, 3))
    uv = rng.uniform([5, 5], [K.width - 5, K.height - 5], size=(30, 2))
    X = back_project(uv, rng.uniform(1, 5, 30), gt, K)
    uv = uv + rng.normal(0, noise, uv.shape)
    init = RigidPose(gt.rotation @ so3_exp(rng.normal(0, dt / 5, 3)), gt.translation + rng.normal(0, dt, 3))
    out = refine_pose(init, uv, X, K)
    before = np.sum(reprojection_errors(init, uv, X, K) ** 2)
    after = np.sum(reprojection_errors(out, uv, X, K) ** 2)
    assert after <= before or not np.isfinite(before)


@given(st.lists(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 50)), min_size=1, max_size=6),
                max_size=30))
def test_prune_keeps_exactly_multi_keyframe_landmarks(obs):
    lms = [Landmark(i, np.zeros(3, np.float32), np.zeros(32, np.uint8), sorted(set(o))) for i, o in enumerate(obs)]
    kept = prune_landmarks(lms)
    assert all(len({k for k, _ in lm.observations}) >= 2 for lm in kept)
    assert len(kept) == sum(len({k for k, _ in set(o)}) >= 2 for o in obs)
