"""Tests for configuration loading and validation."""

from pathlib import Path

import pytest
import yaml

from dmtf_nav.core.config import THREADS_ENV, EnvConfig, ModelConfig, PPOConfig, RunConfig, worker_count
from dmtf_nav.core.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"


@pytest.mark.parametrize("name", ["smoke_config.yaml", "training_config.yaml", "ablation_config.yaml"])
def test_shipped_configs_load(name):
    config = RunConfig.from_file(CONFIG_DIR / name)
    assert Path(config.suites.train).is_absolute()
    assert config.model.image_size == config.env.image_size


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="dropout"):
        ModelConfig.from_dict({"dropout": 0.1})


def test_field_errors_name_the_field(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"suites": {"train": "t.json"}, "ppo": {"clip": -1}}))
    with pytest.raises(ConfigError, match="ppo.clip"):
        RunConfig.from_file(path)


def test_unsupported_extension(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("")
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"d_model": 10, "heads": 4})


def test_image_sizes_must_agree():
    with pytest.raises(ConfigError, match="image_size"):
        RunConfig.from_dict({"suites": {"train": "t.json"}, "env": {"image_size": 32}})


def test_even_view_rejected():
    with pytest.raises(ConfigError):
        EnvConfig.from_dict({"view_size": 4})


def test_learning_rate_profiles():
    assert PPOConfig().learning_rate == 1e-4
    assert PPOConfig(lr_profile="large-scene").learning_rate == 5e-5
    assert PPOConfig(lr=3e-4, lr_profile="large-scene").learning_rate == 3e-4


def test_ablation_switches():
    config = ModelConfig().with_ablation("no-ensa")
    assert config.effective_encoder_layers == 0
    assert config.ablation == "no-ensa"
    assert ModelConfig().with_ablation("no-mti").effective_targets == 1


def test_run_config_round_trips_through_yaml(tmp_path):
    config = RunConfig.from_dict({"suites": {"train": str(tmp_path / "train.json")}, "seed": 7})
    config.save_yaml(tmp_path / "config.yaml")
    assert RunConfig.from_file(tmp_path / "config.yaml") == config


class TestWorkerCount:
    def test_uncapped(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert worker_count(6) == 6

    def test_capped_by_environment(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "2")
        assert worker_count(6) == 2

    @pytest.mark.parametrize("raw", ["zero", "0"])
    def test_bad_values(self, monkeypatch, raw):
        monkeypatch.setenv(THREADS_ENV, raw)
        with pytest.raises(ConfigError):
            worker_count(4)
