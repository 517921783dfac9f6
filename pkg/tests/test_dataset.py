import numpy as np
import pytest

from pcloc import dataset
from pcloc.errors import FormatError
from pcloc.geometry import Intrinsics, RigidPose, Trajectory


def test_intrinsics_round_trip(tmp_path):
    K = Intrinsics(321.5, 320.25, 160.0, 119.5, 320, 240)
    dataset.save_intrinsics(tmp_path / "k.json", K)
    assert dataset.load_intrinsics(tmp_path / "k.json") == K
    (tmp_path / "bad.json").write_text('{"fx": 1}')
    with pytest.raises(FormatError):
        dataset.load_intrinsics(tmp_path / "bad.json")


def test_frames_round_trip(tmp_path, rng):
    imgs = [rng.integers(0, 256, (24, 32, 3), dtype=np.uint8) for _ in range(3)]
    ts = [0.0, 1 / 30, 2 / 30]
    gt = Trajectory(np.array(ts), tuple(RigidPose(np.eye(3), np.array([i, 0.0, 0.0])) for i in range(3)))
    K = Intrinsics(30.0, 30.0, 16.0, 12.0, 32, 24)
    d = dataset.write_frames(tmp_path / "f", ts, imgs, K, gt)
    idx = dataset.read_index(d)
    assert [t for t, _ in idx] == ts
    for (t, img), ref in zip(dataset.iter_frames(d), imgs):
        np.testing.assert_array_equal(img, ref)
    assert dataset.frame_intrinsics(d) == K
    back = dataset.frame_ground_truth(d)
    np.testing.assert_allclose(back.positions, gt.positions, atol=1e-12)


def test_missing_parts(tmp_path):
    assert dataset.frame_intrinsics(tmp_path) is None
    assert dataset.frame_ground_truth(tmp_path) is None
    with pytest.raises(FormatError):
        dataset.read_index(tmp_path)
    (tmp_path / dataset.INDEX_NAME).write_text("# comment\n0.5\n")
    with pytest.raises(FormatError):
        dataset.read_index(tmp_path)
