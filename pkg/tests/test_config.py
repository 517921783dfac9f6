import json

import pytest

from pcloc.config import LiftConfig, MapConfig, PipelineConfig, RelocConfig, TrackerConfig, config_hash
from pcloc.features import FeatureConfig
from pcloc.pose import RansacConfig
from pcloc.renderer import RenderConfig


def test_json_round_trip(tmp_path):
    cfg = PipelineConfig().replace(map=MapConfig(guided_radii=(3.0,), k_nearest=5),
                                   ransac=RansacConfig(seed=11))
    p = tmp_path / "cfg.json"
    cfg.save(p)
    back = PipelineConfig.load(p)
    assert back == cfg
    assert back.map.guided_radii == (3.0,)
    assert config_hash(back) == config_hash(cfg)


def test_partial_dict_keeps_defaults():
    cfg = PipelineConfig.from_dict({"tracker": {"max_failures": 5}})
    assert cfg.tracker.max_failures == 5
    assert cfg.render == RenderConfig()


@pytest.mark.parametrize("d", [{"bogus": {}}, {"render": {"no_such_key": 1}}])
def test_unknown_keys_raise(d):
    with pytest.raises(ValueError):
        PipelineConfig.from_dict(d)


def test_hash_is_stable_and_sensitive():
    a = config_hash(PipelineConfig())
    assert a == config_hash(PipelineConfig())
    assert len(a) == 32
    assert a != config_hash(PipelineConfig().replace(tracker=TrackerConfig(max_failures=4)))
    # key order in the source dict does not matter
    d = PipelineConfig().to_dict()
    shuffled = json.loads(json.dumps(dict(reversed(list(d.items())))))
    assert config_hash(PipelineConfig.from_dict(shuffled)) == a


@pytest.mark.parametrize("make", [
    lambda: LiftConfig(window_radius=0),
    lambda: TrackerConfig(max_failures=0),
    lambda: RelocConfig(face_resolution=32),
    lambda: MapConfig(n_directions=6),
    lambda: MapConfig(guided_radii=(0.0,)),
    lambda: FeatureConfig(n_levels=4),
    lambda: RansacConfig(confidence=1.0),
    lambda: RenderConfig(delta_rel=0.5),
])
def test_validation(make):
    with pytest.raises(ValueError):
        make()
