import numpy as np
import pytest

from pcloc import synth
from pcloc.errors import DegenerateInputError, SceneError
from pcloc.evaluation import ssim
from pcloc.geometry import Intrinsics, look_at
from pcloc.renderer import render
from pcloc.synth import Box, Rect, ScanConfig, Scene, Texture, TrajectorySpec


def box_room(tex=None):
    tex = tex or Texture("value_noise", (20, 20, 20), (230, 230, 230), 0.3, 2, 5)
    return Scene((Box((0, 0, 0), (4, 4, 3), (tex,), interior=True),), (), 0)


def test_points_lie_on_faces():
    scene = box_room()
    cloud = synth.simulate_lidar(scene, ScanConfig(((2.0, 2.0, 1.5),), np.radians(0.5)))
    assert len(cloud) > 100_000
    P = cloud.points
    d = np.min(np.abs(np.column_stack([P, [4, 4, 3] - P])), axis=1)
    assert d.max() < 1e-9
    assert synth.distance_to_surfaces(scene, P).max() < 1e-9


def test_short_range_empty():
    cloud = synth.simulate_lidar(box_room(), ScanConfig(((2.0, 2.0, 1.5),), np.radians(1.0), max_range=0.1))
    assert len(cloud) == 0


def test_two_scanners_concatenate():
    scene = box_room()
    a, b = (1.0, 1.0, 1.0), (3.0, 2.5, 2.0)
    one = synth.simulate_lidar(scene, ScanConfig((a,), np.radians(1.0)))
    two = synth.simulate_lidar(scene, ScanConfig((b,), np.radians(1.0)))
    both = synth.simulate_lidar(scene, ScanConfig((a, b), np.radians(1.0)))
    assert np.array_equal(both.points, np.vstack([one.points, two.points]))
    assert np.array_equal(both.colors, np.vstack([one.colors, two.colors]))


def test_scanner_inside_solid():
    scene = Scene((Box((0, 0, 0), (4, 4, 3), (Texture(),), interior=True), Box((1, 1, 0), (2, 2, 1), (Texture(),))))
    with pytest.raises(SceneError):
        synth.simulate_lidar(scene, ScanConfig(((1.5, 1.5, 0.5),), np.radians(2.0)))


def test_lidar_deterministic():
    cfg = ScanConfig(((2.0, 2.0, 1.5),), np.radians(1.0), range_noise=0.002)
    a = synth.simulate_lidar(box_room(), cfg, seed=3)
    b = synth.simulate_lidar(box_room(), cfg, seed=3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.colors, b.colors)


def test_scan_directions_unit():
    d = synth.scan_directions(np.radians(2.0))
    assert len(d) == 90 * 180
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)


def test_solid_wall_uniform_image():
    scene = box_room(Texture("solid", (90, 140, 30)))
    K = Intrinsics(100, 100, 64, 48, 128, 96)
    img = synth.render_camera_frame(scene, look_at([2, 2, 1.5], [4, 2, 1.5]), K)
    assert np.all(img == [90, 140, 30])


def test_checkerboard_square_size():
    texel, dist = 0.1, 2.0
    scene = Scene((), (Rect(0, 4.0, (-3, -3), (3, 3), Texture("checkerboard", (0, 0, 0), (255, 255, 255), texel)),))
    K = Intrinsics(300, 300, 160.5, 120.5, 320, 240)
    img = synth.render_camera_frame(scene, look_at([4.0 - dist, 0.02, 0.03], [4.0, 0.02, 0.03]), K)
    row = img[120, :, 0].astype(int)
    edges = np.flatnonzero(np.diff(row) != 0)
    widths = np.diff(edges)
    assert abs(np.median(widths) - K.fx * texel / dist) <= 1


def test_camera_frame_deterministic():
    scene = synth.default_scene()
    K = Intrinsics(100, 100, 64, 48, 128, 96)
    pose = look_at([4, 3, 1.5], [0, 3, 1.0])
    a = synth.render_camera_frame(scene, pose, K, supersample=2)
    b = synth.render_camera_frame(scene, pose, K, supersample=2)
    assert np.array_equal(a, b)


def test_camera_depth_is_z():
    scene = box_room()
    K = Intrinsics(100, 100, 64, 48, 128, 96)
    _, z = synth.render_camera_frame(scene, look_at([2, 2, 1.5], [4, 2, 1.5]), K, return_depth=True)
    assert np.allclose(z, 2.0)


def test_two_waypoints():
    spec = TrajectorySpec(((0, 0, 1), (1, 0, 1)), ((0, 5, 1), (1, 5, 1)), rate=30, speed=1.0)
    tr = synth.generate_trajectory(spec)
    assert len(tr) == 31
    assert np.allclose(np.diff(tr.timestamps), 1 / 30, atol=1e-15)
    steps = np.linalg.norm(np.diff(tr.positions, axis=0), axis=1)
    assert np.abs(steps - 1 / 30).max() < 1e-12


def test_open_polyline_arc_steps():
    spec = TrajectorySpec(((0, 0, 1), (1, 0, 1), (1, 2, 1.5)), ((0, 5, 1), (1, 5, 1), (5, 2, 1)), rate=25, speed=0.8)
    tr = synth.generate_trajectory(spec)
    p = tr.positions
    # arc length along the polyline
    corner = np.array([1, 0, 1.0])
    s = np.where(p[:, 1] <= 1e-12, p[:, 0], 1.0 + np.linalg.norm(p - corner, axis=1))
    assert np.abs(np.diff(s) - 0.8 / 25).max() < 1e-12


def test_loop_closes():
    tr = synth.generate_trajectory(synth.loop_trajectory_spec())
    assert np.array_equal(tr.poses[0].matrix(), tr.poses[-1].matrix())
    assert len(tr) == 650
    length = np.linalg.norm(np.diff(tr.positions, axis=0), axis=1).sum()
    assert 20.0 <= length <= 22.0


def test_look_at_orientation():
    tr = synth.generate_trajectory(TrajectorySpec(((0, 0, 1), (1, 0, 1)), ((0, 5, 1), (1, 5, 1))))
    R = tr.poses[0].rotation
    assert np.allclose(R[:, 2], [0, 1, 0])  # looking at the target
    assert R[2, 1] < 0  # image down is world down


def test_coincident_waypoints():
    with pytest.raises(DegenerateInputError):
        synth.generate_trajectory(TrajectorySpec(((0, 0, 1), (0, 0, 1), (1, 0, 1)), ((0, 1, 1),) * 3))


def test_scene_json_round_trip(tmp_path):
    s = synth.default_scene()
    s.save(tmp_path / "s.json")
    assert Scene.load(tmp_path / "s.json") == s
    with pytest.raises(SceneError):
        Scene.from_dict({"surfaces": [{"type": "sphere"}]})


def test_texture_validation():
    with pytest.raises(SceneError):
        Texture("marble")
    with pytest.raises(SceneError):
        Box((0, 0, 0), (1, 0, 1), (Texture(),))


def test_render_bridge_ssim(scene, room_cloud, camera):
    # the renderer at a scanner position against the ray-cast camera frame
    pos = synth.default_scan_config().positions[0]
    vals = []
    for tgt in ([0.0, pos[1], 1.2], [pos[0], 6.0, 1.4], [8.0, 0.0, 1.0]):
        pose = look_at(pos, tgt)
        vals.append(ssim(render(room_cloud, pose, camera).rgb, synth.render_camera_frame(scene, pose, camera)))
    assert min(vals) >= 0.85
