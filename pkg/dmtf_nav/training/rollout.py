"""
Rollout Collection
==================

Runs the current policy snapshot over a batch of episodes on a pool of
simulator instances and stores everything the PPO update needs.

Every episode draws its action samples from its own seed stream, so the
buffer is identical for any worker count.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import ProtocolError
from ..core.matching import build_gt_set, gt_arrays
from ..core.model import DMTFNet
from ..core.schemas import EpisodeSpec
from ..env.gridmap import Action
from ..env.simulator import EnvPool, EpisodeRecord, GridNavEnv

logger = logging.getLogger(__name__)


@dataclass
class EpisodeTrajectory:
    """
    One episode's transitions, indexed by step.

    ``bootstrap_value`` is 0 after a Stop and ``V(s_T)`` when the episode was
    cut by the horizon or the step budget.
    """

    episode_id: str
    visual: np.ndarray
    audio: np.ndarray
    delta: Optional[np.ndarray]
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    gt_classes: np.ndarray
    gt_targets: np.ndarray
    bootstrap_value: float
    truncated: bool
    record: Optional[EpisodeRecord]

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class RolloutBuffer:
    episodes: List[EpisodeTrajectory]

    @property
    def total_steps(self) -> int:
        return sum(ep.length for ep in self.episodes)

    @property
    def mean_return(self) -> float:
        return float(np.mean([ep.episode_return for ep in self.episodes]))

    def __len__(self) -> int:
        return self.total_steps


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a categorical distribution."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def run_policy_episode(
    env: GridNavEnv,
    policy: DMTFNet,
    spec: EpisodeSpec,
    seed: np.random.SeedSequence,
    horizon: int,
    modality_scale: float,
) -> EpisodeTrajectory:
    """Sample one episode from ``policy``, stopping at Stop, the step budget or ``horizon``."""
    rng = np.random.default_rng(seed)
    num_targets = policy.config.effective_targets
    obs = env.reset(spec)
    hidden = policy.initial_state(1)
    visual, audio, delta = [], [], []
    actions, rewards, values, log_probs = [], [], [], []
    gt_classes, gt_targets = [], []

    while not env.done and len(actions) < horizon:
        optimal, geodesic = env.oracle_targets()
        classes, targets = gt_arrays(build_gt_set(optimal, geodesic, num_targets, modality_scale))
        out = policy(obs.visual[None], obs.audio[None], None if obs.delta is None else obs.delta[None], hidden)
        probs = out.probs.data[0].astype(np.float64)
        action = sample_action(probs, rng)
        try:
            result = env.step(action)
        except ProtocolError as e:
            raise ProtocolError(f"episode {spec.episode_id} step {len(actions)}: {e}") from e

        visual.append(obs.visual)
        audio.append(obs.audio)
        if obs.delta is not None:
            delta.append(obs.delta)
        actions.append(action)
        rewards.append(result.reward)
        values.append(float(out.value.data[0]))
        log_probs.append(float(out.log_probs.data[0, action]))
        gt_classes.append(classes)
        gt_targets.append(targets)
        hidden = out.hidden.data
        obs = result.observation

    truncated = actions[-1] != Action.STOP
    bootstrap = 0.0
    if truncated:
        tail = policy(obs.visual[None], obs.audio[None], None if obs.delta is None else obs.delta[None], hidden)
        bootstrap = float(tail.value.data[0])

    dtype = policy.dtype
    return EpisodeTrajectory(
        episode_id=spec.episode_id,
        visual=np.stack(visual).astype(dtype),
        audio=np.stack(audio).astype(dtype),
        delta=np.stack(delta).astype(dtype) if delta else None,
        actions=np.asarray(actions, dtype=np.int64),
        rewards=np.asarray(rewards, dtype=np.float64),
        values=np.asarray(values, dtype=np.float64),
        log_probs=np.asarray(log_probs, dtype=np.float64),
        gt_classes=np.stack(gt_classes),
        gt_targets=np.stack(gt_targets),
        bootstrap_value=bootstrap,
        truncated=truncated,
        record=env.record() if env.done else None,
    )


def episode_seeds(seed: int, update: int, count: int) -> List[np.random.SeedSequence]:
    return [np.random.SeedSequence([seed, update, i]) for i in range(count)]


def collect_rollouts(
    pool: EnvPool,
    snapshot: DMTFNet,
    specs: Sequence[EpisodeSpec],
    seeds: Sequence[np.random.SeedSequence],
    horizon: int,
    modality_scale: float,
) -> RolloutBuffer:
    """
    Run one episode per spec with a read-only policy snapshot.

    Results are returned in spec order regardless of which worker ran them.
    """
    if len(specs) != len(seeds):
        raise ProtocolError(f"{len(specs)} episode specs but {len(seeds)} seed streams")
    jobs = list(zip(specs, seeds))
    episodes = pool.run(
        lambda env, job: run_policy_episode(env, snapshot, job[0], job[1], horizon, modality_scale),
        jobs,
    )
    return RolloutBuffer(episodes=episodes)
