from __future__ import annotations

import pytest
import yaml

from spotformer.config import ConfigError, config_from_dict, dump_config, load_config


def test_defaults():
    cfg = config_from_dict({})
    g = cfg.frame_grid()
    assert (g.frame_len, g.fft_len, g.hop, g.sample_rate) == (256, 512, 128, 16000)
    assert cfg.scene.n_control == 9
    assert cfg.sweep.d_values == [1.0, 5.0, 20.0]
    scene = cfg.build_scene()
    assert scene.n_loudspeakers == 5 and scene.n_mics == 8


def test_zero_sigma_rejected_with_name():
    with pytest.raises(ConfigError, match="region.sigma_r"):
        config_from_dict({"region": {"sigma_r": 0.0}})


@pytest.mark.parametrize("data, where", [
    ({"sweep": {"d_values": [-1.0]}}, "sweep.d_values"),
    ({"scene": {"room": [6, 5]}}, "scene.room"),
    ({"scene": {"t60": -0.1}}, "scene.room/t60"),
    ({"grid": {"hop": 200}}, "grid"),
    ({"scene": {"user": [7.0, 1.0, 1.0]}}, "scene"),
    ({"solver": {"on_failure": "skip"}}, "solver.on_failure"),
    ({"region": {"orders": [8, 8]}}, "region.orders"),
    ({"sweep": {"runs": 1.5}}, "sweep.runs"),
    ({"version": 2}, "version"),
])
def test_invalid_values_name_the_field(data, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        config_from_dict(data)


def test_unknown_field():
    with pytest.raises(ConfigError, match="unknown field.*colour"):
        config_from_dict({"scene": {"colour": "red"}})


def test_round_trip(tmp_path):
    cfg = config_from_dict({"sweep": {"d_values": [2, 4]}, "scene": {"seed": 7, "t60": 0.2}})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    back = load_config(p)
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


def test_yaml_error_has_location(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("scene:\n  seed: 1\n  room: [6, 5\n")
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        load_config(tmp_path / "nope.yaml")


def test_dump_is_yaml():
    data = yaml.safe_load(dump_config(config_from_dict({})))
    assert data["grid"]["hop"] == 128
