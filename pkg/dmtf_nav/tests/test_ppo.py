"""Tests for rollout collection, advantage estimation and the PPO update."""

import numpy as np
import pytest

from dmtf_nav.core.config import PPOConfig
from dmtf_nav.core.errors import DimensionError, ProtocolError
from dmtf_nav.core.matching import NULL_CLASS
from dmtf_nav.core.model import DMTFNet
from dmtf_nav.env import EnvPool, GridNavEnv
from dmtf_nav.ndgrad import AdamState, GradTape, Parameter, Tensor, adam_step, backward, ops
from dmtf_nav.training.ppo import (
    AdvantageEstimates,
    clipped_surrogate,
    compute_gae,
    gae,
    ppo_update,
    time_major_batch,
)
from dmtf_nav.training.rollout import (
    EpisodeTrajectory,
    RolloutBuffer,
    collect_rollouts,
    episode_seeds,
    sample_action,
)


def fake_episode(tag: int, length: int, slots: int = 2) -> EpisodeTrajectory:
    return EpisodeTrajectory(
        episode_id=f"ep-{tag}",
        visual=np.zeros((length, 1)),
        audio=np.zeros((length, 1)),
        delta=None,
        actions=np.full(length, tag, dtype=np.int64),
        rewards=np.zeros(length),
        values=np.zeros(length),
        log_probs=np.zeros(length),
        gt_classes=np.full((length, slots), NULL_CLASS),
        gt_targets=np.zeros((length, slots, 2)),
        bootstrap_value=0.0,
        truncated=False,
        record=None,
    )


def room_specs(room_spec, count):
    return [
        room_spec.model_copy(update={"episode_id": f"room-{i}", "start": [1 + i % 3, 4, i % 4]})
        for i in range(count)
    ]


class TestAdvantages:
    def test_hand_computed_values(self):
        adv, ret = gae(np.array([1.0, 0.0, 1.0]), np.full(3, 0.5), bootstrap=0.0, gamma=0.9, lam=0.5)
        np.testing.assert_allclose(adv, [1.02875, 0.175, 0.5], rtol=1e-12)
        np.testing.assert_allclose(ret, adv + 0.5)

    def test_default_discounts_match_hand_unroll(self):
        rewards, values = np.array([1.0, 0.0, 1.0]), np.array([0.5, 0.2, 0.4])
        adv, _ = gae(rewards, values, bootstrap=0.0, gamma=0.99, lam=0.95)
        d0 = 1.0 + 0.99 * 0.2 - 0.5
        d1 = 0.0 + 0.99 * 0.4 - 0.2
        d2 = 1.0 + 0.99 * 0.0 - 0.4
        k = 0.99 * 0.95
        expected = [d0 + k * d1 + k * k * d2, d1 + k * d2, d2]
        np.testing.assert_allclose(adv, expected, rtol=0, atol=1e-12)
        np.testing.assert_allclose(adv, [1.41306215, 0.7603, 0.6], atol=1e-12)

    def test_single_terminal_step(self):
        adv, _ = gae(np.array([1.0]), np.array([0.0]), bootstrap=0.0, gamma=0.99, lam=0.95)
        assert adv[0] == 1.0

    def test_lambda_zero_gives_one_step_errors(self, rng):
        rewards, values = rng.normal(size=6), rng.normal(size=6)
        adv, _ = gae(rewards, values, bootstrap=0.7, gamma=0.99, lam=0.0)
        next_values = np.append(values[1:], 0.7)
        np.testing.assert_array_equal(adv, rewards + 0.99 * next_values - values)

    def test_lambda_one_gives_discounted_returns(self):
        _, ret = gae(np.array([1.0, 2.0, 3.0]), np.zeros(3), bootstrap=4.0, gamma=0.5, lam=1.0)
        np.testing.assert_allclose(ret, [3.25, 4.5, 5.0])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DimensionError):
            gae(np.zeros(3), np.zeros(2), 0.0, 0.99, 0.95)

    def test_normalized_advantages(self):
        buffer = RolloutBuffer(episodes=[fake_episode(0, 3), fake_episode(1, 2)])
        buffer.episodes[0].rewards[:] = [1.0, -1.0, 2.0]
        normalized = np.concatenate(compute_gae(buffer, 0.9, 0.9).normalized())
        assert normalized.mean() == pytest.approx(0.0, abs=1e-12)
        assert normalized.std() == pytest.approx(1.0, rel=1e-6)


def test_time_major_layout_keeps_active_prefixes():
    episodes = [fake_episode(0, 2), fake_episode(1, 4), fake_episode(2, 3)]
    zeros = [np.zeros(ep.length) for ep in episodes]
    batch = time_major_batch(episodes, zeros, zeros)
    assert batch.counts == [3, 3, 2, 1]
    np.testing.assert_array_equal(batch.actions, [1, 2, 0, 1, 2, 0, 1, 2, 1])


def test_sample_action_follows_degenerate_distribution(rng):
    assert {sample_action(np.array([0.0, 1.0, 0.0, 0.0]), rng) for _ in range(20)} == {1}


class TestRollouts:
    def test_same_buffer_for_any_worker_count(self, tiny_model_config, env_config, bank, room_spec):
        policy = DMTFNet(tiny_model_config, seed=0).snapshot()
        specs = room_specs(room_spec, 3)
        seeds = episode_seeds(0, 0, 3)
        buffers = [
            collect_rollouts(EnvPool(env_config, bank, workers), policy, specs, seeds, 10, 10.0)
            for workers in (1, 2)
        ]
        for a, b in zip(*(buf.episodes for buf in buffers)):
            assert a.episode_id == b.episode_id
            np.testing.assert_array_equal(a.actions, b.actions)
            assert a.log_probs.tobytes() == b.log_probs.tobytes()

    def test_horizon_bootstraps_value(self, tiny_model_config, env_config, bank, room_spec):
        policy = DMTFNet(tiny_model_config, seed=0).snapshot()
        buffer = collect_rollouts(EnvPool(env_config, bank, 1), policy, [room_spec], episode_seeds(1, 0, 1), 1, 10.0)
        (episode,) = buffer.episodes
        assert episode.length == 1
        assert episode.truncated == (episode.actions[0] != 3)
        assert episode.gt_classes.shape == (1, 2)

    def test_seed_count_must_match(self, tiny_model_config, env_config, bank, room_spec):
        policy = DMTFNet(tiny_model_config).snapshot()
        with pytest.raises(ProtocolError):
            collect_rollouts(EnvPool(env_config, bank, 1), policy, [room_spec], [], 5, 10.0)


class TestUpdate:
    def test_update_steps_optimizer_per_minibatch(self, tiny_model_config, env_config, bank, room_spec):
        model = DMTFNet(tiny_model_config, seed=0)
        before = model.state_dict()
        buffer = collect_rollouts(
            EnvPool(env_config, bank, 1), model.snapshot(), room_specs(room_spec, 3), episode_seeds(0, 0, 3), 8, 10.0
        )
        config = PPOConfig(epochs=2, minibatch_episodes=2, lr=1e-3)
        optimizer = AdamState.for_parameters(list(model.named_parameters()), lr=config.learning_rate)
        report = ppo_update(
            model, buffer, compute_gae(buffer, config.gamma, config.gae_lambda), config, optimizer,
            np.random.default_rng(0),
        )
        assert report.minibatches == 4
        assert optimizer.step == 4
        assert np.isfinite([report.surrogate, report.value_loss, report.entropy, report.matching_loss]).all()
        assert 0.0 <= report.null_fraction <= 1.0
        assert any(not np.array_equal(before[name], p.data) for name, p in model.named_parameters())

    def test_empty_buffer_rejected(self, tiny_model_config):
        model = DMTFNet(tiny_model_config)
        optimizer = AdamState.for_parameters(list(model.named_parameters()), lr=1e-3)
        with pytest.raises(DimensionError):
            ppo_update(model, RolloutBuffer(episodes=[]), compute_gae(RolloutBuffer(episodes=[]), 0.9, 0.9),
                       PPOConfig(), optimizer, np.random.default_rng(0))

    def test_positive_advantage_raises_action_probability(self, tiny_model_config, env_config, bank, room_spec):
        model = DMTFNet(tiny_model_config, seed=0)
        obs = GridNavEnv(env_config, bank).reset(room_spec)

        def one_step(tag, action, reward):
            out = model(obs.visual[None], obs.audio[None])
            ep = fake_episode(tag, 1)
            ep.visual = obs.visual[None].copy()
            ep.audio = obs.audio[None].copy()
            ep.actions[:] = action
            ep.rewards[:] = reward
            ep.log_probs[:] = out.log_probs.data[0, action]
            return ep

        buffer = RolloutBuffer(episodes=[one_step(0, 0, 1.0), one_step(1, 1, -1.0)])
        probs = model(obs.visual[None], obs.audio[None]).probs.data[0]
        config = PPOConfig(epochs=4, minibatch_episodes=2, lr=1e-2, value_coef=0.0, entropy_coef=0.0, match_coef=0.0)
        optimizer = AdamState.for_parameters(list(model.named_parameters()), lr=config.learning_rate)
        ppo_update(model, buffer, compute_gae(buffer, 0.99, 0.95), config, optimizer, np.random.default_rng(0))
        after = model(obs.visual[None], obs.audio[None]).probs.data[0]
        assert after[0] / after[1] > probs[0] / probs[1]


class TestClippedSurrogate:
    def test_unchanged_policy_gives_zero_surrogate(self, rng):
        estimates = AdvantageEstimates(advantages=[rng.normal(size=5), rng.normal(size=3)], returns=[])
        advantages = np.concatenate(estimates.normalized())
        old = np.log(rng.uniform(0.1, 0.9, size=8))
        surrogate, ratio = clipped_surrogate(Tensor(old), old, advantages, clip=0.1)
        np.testing.assert_array_equal(ratio.data, 1.0)
        assert surrogate.item() == pytest.approx(0.0, abs=1e-12)

    def test_clipped_branch_has_no_gradient(self):
        old = np.log(np.array([0.2, 0.2, 0.2]))
        new = Tensor(old + np.log([1.3, 1.05, 1.3]), requires_grad=True)
        advantages = np.array([1.0, 1.0, -1.0])
        with GradTape():
            surrogate, ratio = clipped_surrogate(new, old, advantages, clip=0.1)
        backward(surrogate)
        # ρ=1.3 with Â>0 is clipped; inside the band or with Â<0 the ratio term is live
        assert new.grad[0] == 0.0
        assert new.grad[1] == pytest.approx(-1.05 / 3)
        assert new.grad[2] == pytest.approx(1.3 / 3)


def test_bandit_learns_the_rewarding_arm():
    rng = np.random.default_rng(0)
    logits = Parameter(np.zeros(2))
    named = [("logits", logits)]
    optimizer = AdamState.for_parameters(named, lr=0.05)
    batch = 32
    history = []
    for _ in range(200):
        probs = np.exp(logits.data) / np.exp(logits.data).sum()
        history.append(probs[0])
        if probs[0] > 0.95:
            break
        actions = rng.choice(2, size=batch, p=probs)
        old_log_probs = np.log(probs)[actions]
        estimates = AdvantageEstimates(
            advantages=[gae(np.array([float(a == 0)]), np.zeros(1), 0.0, 0.99, 0.95)[0] for a in actions],
            returns=[],
        )
        advantages = np.concatenate(estimates.normalized())
        for _ in range(4):
            logits.zero_grad()
            with GradTape():
                log_probs = ops.log_softmax(logits)[actions]
                surrogate, _ = clipped_surrogate(log_probs, old_log_probs, advantages, clip=0.1)
            backward(surrogate)
            adam_step(named, optimizer)
    assert history[-1] > 0.95
    assert np.mean(history[len(history) // 2:]) > np.mean(history[: len(history) // 2])
