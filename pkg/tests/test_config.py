import json

import pytest

from idealdefer.config import ConfigError, ExperimentConfig, PRESETS, load_config


def test_presets_validate():
    for make in PRESETS.values():
        cfg = make()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_round_trip_through_file(tmp_path):
    cfg = PRESETS["specialist"](seeds=3)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


@pytest.mark.parametrize("change, words", [
    ({"gamma": -0.5}, "gamma=-0.5"),
    ({"gamma_expert": 0.0}, "temperatures"),
    ({"dr_loss": "hinge"}, "DR loss"),
    ({"methods": ["conf", "oracle"]}, "unknown methods"),
    ({"target_rates": [0.5, 0.1]}, "target_rates"),
    ({"fractions": [0.5, 0.5]}, "fractions"),
    ({"seeds": 0}, "seeds"),
    ({"base_corruption": {"kind": "label-noise", "k": 40}}, "k"),
    ({"point_loss": "hinge"}, "hinge"),
    ({"colour": "blue"}, "unknown config keys"),
])
def test_invalid_configs_are_named(change, words):
    d = ExperimentConfig().to_dict()
    d.update(change)
    with pytest.raises(ConfigError, match=words):
        ExperimentConfig.from_dict(d)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
