import pytest

from scalprl import config
from scalprl.errors import ConfigError


def test_flat_keys_reach_every_section(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 7\nthreshold=12.5\nneurons = 16\nconv3d_kernel = 2x2x2\n"
                    "episodes = 9\ntax_pct = 0.1\ndqn = true\n")
    cfg = config.load(path)
    assert cfg.seed == 7 and cfg.threshold == 12.5
    assert cfg.net.neurons == 16 and cfg.net.conv3d_kernel == (2, 2, 2)
    assert cfg.train.episodes == 9 and cfg.train.seed == 7 and not cfg.train.double
    assert cfg.gym.cost_pct == pytest.approx(0.13) and cfg.train.gym == cfg.gym
    assert cfg.train.net == cfg.net


def test_overrides_win(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 7\n")
    assert config.load(path, {"seed": 3, "out_dir": None}).seed == 3


def test_unknown_and_bad_values():
    with pytest.raises(ConfigError):
        config.from_mapping({"nope": "1"})
    with pytest.raises(ConfigError):
        config.from_mapping({"seed": "abc"})
    with pytest.raises(ConfigError):
        config.from_mapping({"fill": "mid"})


def test_hash_tracks_content():
    a = config.from_mapping({})
    assert a.hash() == config.from_mapping({}).hash()
    assert a.hash() != config.from_mapping({"lr": "0.5"}).hash()
    assert a.stage_hash("threshold") == config.from_mapping({"lr": "0.5"}).stage_hash("threshold")


def test_validate(tmp_path):
    with pytest.raises(ConfigError):
        config.from_mapping({"data_dir": str(tmp_path / "missing")}).validate()
    with pytest.raises(ConfigError):
        config.from_mapping({"data_dir": str(tmp_path), "ratio": "1.5"}).validate()
