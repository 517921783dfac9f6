import numpy as np

from pcloc.cloud import PointCloud
from pcloc.config import LiftConfig
from pcloc.geometry import RigidPose, so3_exp
from pcloc.lifting import lift_keypoints, nearest_pixel
from pcloc.renderer import render

from conftest import SMALL_K


def tilted_plane(step=0.003):
    # plane through (0, 0, 2) with normal tilted 30 degrees about y
    n = np.array([np.sin(np.radians(30)), 0.0, np.cos(np.radians(30))])
    a = np.array([np.cos(np.radians(30)), 0.0, -np.sin(np.radians(30))])
    b = np.array([0.0, 1.0, 0.0])
    s = np.arange(-1.5, 1.5, step)
    S, T = np.meshgrid(s, s)
    pts = np.array([0, 0, 2.0]) + S.reshape(-1, 1) * a + T.reshape(-1, 1) * b
    return PointCloud(pts, np.full((len(pts), 3), 120, np.uint8)), n


def ray_plane(xy, n, p0=np.array([0, 0, 2.0])):
    rays = np.column_stack([(xy[:, 0] - SMALL_K.cx) / SMALL_K.fx, (xy[:, 1] - SMALL_K.cy) / SMALL_K.fy,
                            np.ones(len(xy))])
    return rays * ((n @ p0) / (rays @ n))[:, None]


def test_nearest_pixel_rounds_half_up():
    c, r, ok = nearest_pixel(np.array([[0.5, 1.49], [-0.51, 3.0], [127.49, 95.5]]), (96, 128))
    assert c.tolist()[0] == 1 and r.tolist()[0] == 1
    assert ok.tolist() == [True, False, False]


def test_plane_fit_recovers_exact_intersection(rng):
    cloud, n = tilted_plane()
    view = render(cloud, RigidPose.identity(), SMALL_K)
    xy = rng.uniform([30, 20], [98, 76], size=(50, 2))
    X, ok = lift_keypoints(xy, view, RigidPose.identity(), SMALL_K, cloud)
    assert ok.all()
    assert np.abs(X - ray_plane(xy, n)).max() < 1e-6


def test_pixel_depth_only_when_fit_disabled(rng):
    cloud, _ = tilted_plane()
    view = render(cloud, RigidPose.identity(), SMALL_K)
    xy = rng.uniform([30, 20], [98, 76], size=(20, 2))
    X, ok = lift_keypoints(xy, view, RigidPose.identity(), SMALL_K, cloud, LiftConfig(plane_fit=False))
    c, r, _ = nearest_pixel(xy, view.depth.shape)
    assert ok.all()
    assert np.array_equal(X[:, 2], view.depth[r, c])


def test_world_frame_pose(rng):
    cloud, n = tilted_plane()
    pose = RigidPose(so3_exp([0.1, -0.2, 0.3]), [1.0, 2.0, -0.5])
    world = PointCloud(pose.apply(cloud.points), cloud.colors)
    view = render(world, pose, SMALL_K)
    xy = rng.uniform([30, 20], [98, 76], size=(20, 2))
    X, ok = lift_keypoints(xy, view, pose, SMALL_K, world)
    assert ok.all()
    assert np.abs(X - pose.apply(ray_plane(xy, n))).max() < 1e-6


def test_invalid_depth_not_lifted():
    cloud, _ = tilted_plane()
    keep = cloud.points[:, 0] < 0.2  # right part of the view is empty
    cloud = PointCloud(cloud.points[keep], cloud.colors[keep])
    view = render(cloud, RigidPose.identity(), SMALL_K)
    xy = np.array([[120.0, 48.0], [-3.0, 10.0]])
    X, ok = lift_keypoints(xy, view, RigidPose.identity(), SMALL_K, cloud)
    assert not ok.any() and np.isnan(X).all()


def test_silhouette_rejected():
    # near square in front of a far wall; a keypoint on its edge sees both depths
    xs = np.arange(-2, 2, 0.01)
    X, Y = np.meshgrid(xs, xs)
    far = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, 4.0)])
    s = np.arange(-0.3, 0.3, 0.002)
    A, B = np.meshgrid(s, s)
    near = np.column_stack([A.ravel(), B.ravel(), np.full(A.size, 1.0)])
    cloud = PointCloud(np.vstack([far, near]), np.full((len(far) + len(near), 3), 90, np.uint8))
    view = render(cloud, RigidPose.identity(), SMALL_K)
    edge_u = SMALL_K.cx + 0.3 * SMALL_K.fx
    _, ok = lift_keypoints(np.array([[edge_u, SMALL_K.cy], [SMALL_K.cx, SMALL_K.cy]]), view,
                           RigidPose.identity(), SMALL_K, cloud)
    assert ok.tolist() == [False, True]


def test_empty_input():
    cloud, _ = tilted_plane(0.01)
    view = render(cloud, RigidPose.identity(), SMALL_K)
    X, ok = lift_keypoints(np.zeros((0, 2)), view, RigidPose.identity(), SMALL_K, cloud)
    assert X.shape == (0, 3) and ok.shape == (0,)
