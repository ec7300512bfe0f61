"""Shared fixtures: tiny networks, small maps and on-disk suites."""

from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pytest

from dmtf_nav.core.config import EnvConfig, ModelConfig, PPOConfig, RunConfig, SuitePaths
from dmtf_nav.core.schemas import EpisodeSpec
from dmtf_nav.env.sensors import TemplateBank
from dmtf_nav.env.suites import SuiteRequest, generate_suites, write_suites

TINY_BANDS = 8


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        image_size=8,
        patch_size=4,
        d_model=8,
        heads=2,
        encoder_layers=1,
        decoder_layers=1,
        num_targets=2,
        gru_hidden=6,
        dtype="float64",
    )


@pytest.fixture
def env_config() -> EnvConfig:
    return EnvConfig(image_size=8, view_size=3, audio_bands=TINY_BANDS, audio_frames=TINY_BANDS)


@pytest.fixture
def bank() -> TemplateBank:
    return TemplateBank.create(seed=0, count=4, num_bands=TINY_BANDS, split_fraction=0.5)


@pytest.fixture
def room_spec(bank: TemplateBank) -> EpisodeSpec:
    """6×6 empty room: agent at (1, 4) facing north, source at (1, 1)."""
    return EpisodeSpec(
        episode_id="room-0",
        map_seed=0,
        width=6,
        height=6,
        density=0.0,
        start=[1, 4, 0],
        source=[1, 1],
        template_id=bank.ids()[0],
        max_steps=30,
        audio_seed=7,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def suite_dir(tmp_path: Path) -> Path:
    """Small generated suites with two heard and two unheard templates."""
    request = SuiteRequest(
        seed=0,
        count=4,
        size=6,
        density=0.0,
        split_fraction=0.5,
        episodes=3,
        bands=TINY_BANDS,
        max_steps=30,
    )
    manifest, suites = generate_suites(request)
    out = tmp_path / "suites"
    write_suites(out, manifest, suites)
    return out


@pytest.fixture
def make_run_config(
    tmp_path: Path,
    suite_dir: Path,
    tiny_model_config: ModelConfig,
    env_config: EnvConfig,
) -> Callable[..., RunConfig]:
    """Factory for a two-update run on the generated suites."""

    def factory(**ppo_overrides: object) -> RunConfig:
        ppo: Dict[str, object] = dict(
            epochs=1,
            updates=2,
            episodes_per_update=2,
            horizon=12,
            minibatch_episodes=2,
            workers=1,
            checkpoint_interval=1,
            eval_interval=2,
            eval_episodes=2,
        )
        ppo.update(ppo_overrides)
        return RunConfig(
            model=tiny_model_config,
            ppo=PPOConfig(**ppo),
            env=env_config,
            suites=SuitePaths(
                train=str(suite_dir / "train.json"),
                val=str(suite_dir / "val-heard.json"),
                test=str(suite_dir / "test-heard.json"),
                test_unheard=str(suite_dir / "test-unheard.json"),
            ),
            output_dir=str(tmp_path / "run"),
            seed=3,
        )

    return factory
