import numpy as np
import pytest

from pcloc import synth
from pcloc.cloud import PointCloud
from pcloc.geometry import Intrinsics, RigidPose


@pytest.fixture(scope="session")
def scene():
    return synth.default_scene()


@pytest.fixture(scope="session")
def camera():
    return synth.default_camera()


@pytest.fixture(scope="session")
def room_cloud(scene):
    """The dense 0.2 degree scan of the default room (about 4.9M points)."""
    return synth.simulate_lidar(scene, synth.default_scan_config(), seed=0)


@pytest.fixture(scope="session")
def coarse_cloud(scene):
    """A 0.5 degree scan, enough for quick renders at 320 x 240."""
    return synth.simulate_lidar(scene, synth.default_scan_config(resolution_deg=0.5), seed=0)


@pytest.fixture(scope="session")
def loop():
    return synth.generate_trajectory(synth.loop_trajectory_spec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, scale=1.0) -> RigidPose:
    from pcloc.geometry import so3_exp
    return RigidPose(so3_exp(rng.normal(size=3)), rng.normal(size=3) * scale)


def plane_cloud(z=2.0, half=1.5, step=0.002, color_fn=None):
    """Dense fronto-parallel plane z = const, facing a camera at the origin looking +z."""
    xs = np.arange(-half, half + 1e-9, step)
    X, Y = np.meshgrid(xs, xs)
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
    if color_fn is None:
        cols = np.full((len(pts), 3), 128, dtype=np.uint8)
    else:
        cols = color_fn(pts)
    return PointCloud(pts, cols)


SMALL_K = Intrinsics(100.0, 100.0, 64.0, 48.0, 128, 96)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
