import json

import pytest

from offscreen.config import RunConfig
from offscreen.exceptions import ConfigError
from offscreen.metrics import ACCELERATION_BANDS, VELOCITY_BANDS
from offscreen.models import BOOSTER_DEFAULTS
from offscreen.tracking import CameraWindow


def test_defaults():
    cfg = RunConfig()
    assert cfg.window() == CameraWindow(40.0, 40.0)
    assert cfg.velocity_bands() == VELOCITY_BANDS
    assert cfg.acceleration_bands() == ACCELERATION_BANDS
    assert cfg.bandwidth == 0.3
    assert (cfg.split["train"], cfg.split["test"]) == (13, 5)
    assert cfg.boost_params() == BOOSTER_DEFAULTS
    assert cfg.synth_config().seed == 0


def test_partial_override_and_seed_flow(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 7, "camera": {"width": 30}, "models": {"params": {"tree": {"max_depth": 2}}}}))
    cfg = RunConfig.load(path)
    assert cfg.window() == CameraWindow(30.0, 40.0)
    assert cfg.boost_params()["tree"]["max_depth"] == 2
    assert cfg.boost_params()["tree"]["n_rounds"] == 300
    assert cfg.synth_config().seed == 7
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [{"bogus": 1}, {"seed": -1}, {"camera": {"width": 0}},
                                 {"bands": {"velocity": [0, 3.5]}}, {"smoothing": {"bandwidth": 0}},
                                 {"models": {"roster": ["forest"]}}, {"models": {"metrics": ["speed"]}},
                                 {"models": {"params": {"forest": {}}}}, {"split": {"train": 0}},
                                 {"synth": {"games": 0}}, {"camera": 5}])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(path)
