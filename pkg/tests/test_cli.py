import csv
import json

import numpy as np
import pytest

from pcloc import dataset
from pcloc.cli import main
from pcloc.evaluation import ssim
from pcloc.geometry import read_trajectory

ROI = {"min": [3.5, 2.5, 0.0], "max": [4.5, 3.5, 3.0], "grid_step": 1.0}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Scene, 0.2 deg scan and ten frames along the start of the loop."""
    d = tmp_path_factory.mktemp("cli")
    (d / "roi.json").write_text(json.dumps(ROI))
    rc = main(["synth", "all", "--scene", str(d / "scene.json"), "--cloud", str(d / "cloud.ply"),
               "--frames", str(d / "frames"), "--every", "3", "--max-frames", "10"])
    assert rc == 0
    return d


def _args(d, *extra):
    return [*extra, "--cloud", str(d / "cloud.ply")]


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["track", "--no-such-flag"])
    assert e.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_command_exits_2():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2


def test_pipeline_failure_exits_1(tmp_path):
    assert main(["track", "--mode", "pl", "--frames", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


def test_config_command(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["config", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert set(d) == {"render", "features", "ransac", "lift", "tracker", "reloc", "map"}
    d["tracker"]["max_failures"] = 7
    out.write_text(json.dumps(d))
    assert main(["config", "--config", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["tracker"]["max_failures"] == 7


def test_synth_outputs(workdir):
    man = json.loads((workdir / "frames" / "manifest.json").read_text())
    assert man["command"] == "synth all"
    assert len(man["config_hash"]) == 64
    assert len(dataset.read_index(workdir / "frames")) == 10
    assert len(read_trajectory(workdir / "frames" / dataset.GROUND_TRUTH_NAME)) == 10


def test_track_rm_then_ape(workdir):
    out = workdir / "rm"
    rc = main(_args(workdir, "track", "--mode", "rm", "--frames", str(workdir / "frames"), "--roi",
                    str(workdir / "roi.json"), "--db", str(workdir / "kf.db"), "--out", str(out)))
    assert rc == 0
    for name in ("report.csv", "trajectory.txt", "manifest.json", "report.png", "trajectory.png", "errors.png"):
        assert (out / name).exists(), name
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert rows[0]["status"] == "relocalized"
    assert all(r["status"] == "tracked" for r in rows[1:])
    ev = workdir / "ape"
    assert main(["eval", "ape", "--estimate", str(out / "trajectory.txt"), "--ground-truth",
                 str(workdir / "frames" / dataset.GROUND_TRUTH_NAME), "--out", str(ev)]) == 0
    r = next(csv.DictReader(open(ev / "ape.csv")))
    assert float(r["pos_rmse_m"]) < 0.05
    assert int(r["n_matched"]) == 10
    assert (ev / "ape_errors.png").exists() and (ev / "ape_trajectory.png").exists()


def test_build_map_and_track_pl(workdir):
    m = workdir / "lm.map"
    assert main(_args(workdir, "build-map", "--roi", str(workdir / "roi.json"), "--out", str(m))) == 0
    out = workdir / "pl"
    assert main(["track", "--mode", "pl", "--map", str(m), "--frames", str(workdir / "frames"),
                 "--out", str(out)]) == 0
    est = read_trajectory(out / "trajectory.txt")
    gt = read_trajectory(workdir / "frames" / dataset.GROUND_TRUTH_NAME)
    assert len(est) == 10
    assert np.max(np.linalg.norm(est.positions - gt.positions, axis=1)) < 0.05
    assert (out / "report.png").exists()


def test_render_matches_camera_frame(workdir):
    gt = read_trajectory(workdir / "frames" / dataset.GROUND_TRUTH_NAME)
    p = gt.poses[0]
    pose = " ".join(repr(float(v)) for v in [*p.translation, *p.quaternion()])
    out = workdir / "r" / "view"
    assert main(_args(workdir, "render", "--pose", pose, "--out", str(out))) == 0
    ren = dataset.load_image(out.with_suffix(".png"))
    cam = dataset.load_image(workdir / "frames" / "frame_00000.png")
    assert ssim(ren, cam) >= 0.85
    assert (workdir / "r" / "view_depth.png").exists()
    assert main(["eval", "overlay", "--camera", str(workdir / "frames" / "frame_00000.png"), "--render",
                 str(out.with_suffix(".png")), "--mask-black", "--out", str(workdir / "r")]) == 0
    assert dataset.load_image(workdir / "r" / "overlay.png").shape == cam.shape


def test_reloc_command(workdir, capsys):
    db = workdir / "kf2.db"
    assert main(_args(workdir, "build-db", "--roi", str(workdir / "roi.json"), "--out", str(db))) == 0
    out = workdir / "reloc.json"
    assert main(_args(workdir, "reloc", "--image", str(workdir / "frames" / "frame_00000.png"), "--db", str(db),
                      "--out", str(out))) == 0
    r = json.loads(out.read_text())
    gt = read_trajectory(workdir / "frames" / dataset.GROUND_TRUTH_NAME).poses[0]
    assert np.linalg.norm(np.array(r["translation"]) - gt.translation) < 0.02
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1]) == r


def test_decimation_study_command(workdir):
    outs = []
    for k in range(2):
        out = workdir / f"study{k}"
        rc = main(_args(workdir, "eval", "decimation-study", "--frames", str(workdir / "frames"), "--levels",
                        "1.0,0.05", "--arms", "full,point_based", "--bootstrap", "ground-truth",
                        "--roi", str(workdir / "roi.json"), "--no-timing", "--seed", "3", "--out", str(out)))
        assert rc == 0
        assert (out / "decimation.png").exists()
        outs.append((out / "decimation.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0].decode().splitlines()))
    assert [(r["arm"], r["level"]) for r in rows] == [("full", "1"), ("point_based", "1"),
                                                      ("full", "0.05"), ("point_based", "0.05")]
    assert int(rows[0]["frames_localized"]) == 10
