"""
Training Module
===============

Rollout collection on environment pools, recurrent PPO with the auxiliary
matching loss, and the resumable training loop.
"""

from .ablation import VARIANTS, run_ablation
from .ppo import AdvantageEstimates, LossReport, clipped_surrogate, compute_gae, gae, ppo_update
from .rollout import EpisodeTrajectory, RolloutBuffer, collect_rollouts, run_policy_episode
from .trainer import Trainer, TrainResult, latest_checkpoint, train

__all__ = [
    "EpisodeTrajectory",
    "RolloutBuffer",
    "run_policy_episode",
    "collect_rollouts",
    "gae",
    "compute_gae",
    "AdvantageEstimates",
    "clipped_surrogate",
    "LossReport",
    "ppo_update",
    "Trainer",
    "TrainResult",
    "train",
    "latest_checkpoint",
    "VARIANTS",
    "run_ablation",
]
