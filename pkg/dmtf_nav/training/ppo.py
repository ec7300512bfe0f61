"""
Recurrent PPO
=============

Generalized advantage estimation and the clipped-surrogate update. Minibatches
are groups of whole episodes laid out time-major, longest first, so the set of
episodes still running at step ``t`` is always a prefix and the GRU can be
re-run from a zero state over the stored observations.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import PPOConfig
from ..core.errors import DimensionError, NumericError, TrainingError
from ..core.matching import match_batch
from ..core.model import DMTFNet, Perception
from ..ndgrad import ops
from ..ndgrad.optim import AdamState, adam_step, clip_grad_norm
from ..ndgrad.tensor import GradTape, Tensor, backward
from .rollout import EpisodeTrajectory, RolloutBuffer

logger = logging.getLogger(__name__)

NAN_DUMP = "nan_dump.json"


@dataclass
class AdvantageEstimates:
    """Per-episode advantage and return arrays, aligned with the buffer."""

    advantages: List[np.ndarray]
    returns: List[np.ndarray]

    def normalized(self) -> List[np.ndarray]:
        flat = np.concatenate(self.advantages)
        mean, std = flat.mean(), flat.std()
        return [(a - mean) / (std + 1e-8) for a in self.advantages]


@dataclass
class LossReport:
    """Minibatch-averaged diagnostics of one update."""

    surrogate: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    matching_loss: float = 0.0
    match_cost: float = 0.0
    null_fraction: float = 0.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    grad_norm: float = 0.0
    minibatches: int = 0


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap: float,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``Â_t = Σ_k (γλ)^k δ_{t+k}`` with ``δ_t = r_t + γ V_{t+1} − V_t``.

    ``bootstrap`` is the value after the last step (0 at a terminal state).
    Returns ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise DimensionError(f"rewards {rewards.shape} and values {values.shape} must be equal 1-D")
    adv = np.zeros_like(rewards)
    running = 0.0
    next_value = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> AdvantageEstimates:
    advantages, returns = [], []
    for ep in buffer.episodes:
        a, r = gae(ep.rewards, ep.values, ep.bootstrap_value, gamma, lam)
        advantages.append(a)
        returns.append(r)
    return AdvantageEstimates(advantages=advantages, returns=returns)


# ---------------------------------------------------------------------- #
# Minibatch layout
# ---------------------------------------------------------------------- #
@dataclass
class SequenceBatch:
    """Time-major steps of a group of episodes; ``counts[t]`` episodes are active at step ``t``."""

    episodes: List[EpisodeTrajectory]
    counts: List[int]
    visual: np.ndarray
    audio: np.ndarray
    delta: Optional[np.ndarray]
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    gt_classes: np.ndarray
    gt_targets: np.ndarray


def time_major_batch(
    episodes: Sequence[EpisodeTrajectory],
    advantages: Sequence[np.ndarray],
    returns: Sequence[np.ndarray],
) -> SequenceBatch:
    order = sorted(range(len(episodes)), key=lambda i: -episodes[i].length)
    eps = [episodes[i] for i in order]
    adv = [advantages[i] for i in order]
    ret = [returns[i] for i in order]
    longest = eps[0].length
    counts = [sum(1 for ep in eps if ep.length > t) for t in range(longest)]
    index = [(e, t) for t in range(longest) for e in range(counts[t])]

    def gather(arrays: Sequence[np.ndarray]) -> np.ndarray:
        return np.stack([arrays[e][t] for e, t in index])

    has_delta = eps[0].delta is not None
    return SequenceBatch(
        episodes=eps,
        counts=counts,
        visual=gather([ep.visual for ep in eps]),
        audio=gather([ep.audio for ep in eps]),
        delta=gather([ep.delta for ep in eps]) if has_delta else None,
        actions=gather([ep.actions for ep in eps]),
        old_log_probs=gather([ep.log_probs for ep in eps]),
        advantages=gather(adv),
        returns=gather(ret),
        gt_classes=gather([ep.gt_classes for ep in eps]),
        gt_targets=gather([ep.gt_targets for ep in eps]),
    )


def replay_sequences(model: DMTFNet, batch: SequenceBatch) -> Tuple[Perception, Tensor, Tensor, Tensor]:
    """Recompute policy outputs for every stored step, threading the GRU through time."""
    visual, audio, delta = model.prepare_inputs(batch.visual, batch.audio, batch.delta)
    perception = model.perceive(visual, audio, delta)
    hidden = Tensor(model.initial_state(batch.counts[0]))
    states = []
    start = 0
    for count in batch.counts:
        step_input = perception.embedding[start:start + count]
        hidden = model.recur(step_input, hidden[:count] if hidden.shape[0] != count else hidden)
        states.append(hidden)
        start += count
    probs, log_probs, value = model.heads(ops.concat(states, axis=0))
    return perception, probs, log_probs, value


# ---------------------------------------------------------------------- #
# Update
# ---------------------------------------------------------------------- #
def clipped_surrogate(
    new_log_probs: Tensor,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip: float,
) -> Tuple[Tensor, Tensor]:
    """``−mean(min(ρÂ, clip(ρ, 1±ε)Â))`` and the ratio ``ρ``."""
    dtype = new_log_probs.dtype
    adv = Tensor(np.asarray(advantages, dtype=dtype))
    ratio = ops.exp(new_log_probs - Tensor(np.asarray(old_log_probs, dtype=dtype)))
    unclipped = ratio * adv
    clipped = ops.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    return -ops.mean(ops.minimum(unclipped, clipped)), ratio


def ppo_losses(
    model: DMTFNet,
    batch: SequenceBatch,
    config: PPOConfig,
) -> Tuple[Tensor, Dict[str, float]]:
    """Total loss and its scalar components for one minibatch."""
    perception, probs, log_probs, value = replay_sequences(model, batch)
    dtype = log_probs.dtype
    new_logp = ops.take_along_last(log_probs, batch.actions)
    surrogate, ratio = clipped_surrogate(new_logp, batch.old_log_probs, batch.advantages, config.clip)
    value_loss = ops.mean(ops.square(value - Tensor(batch.returns.astype(dtype))))
    entropy = -ops.mean(ops.sum(probs * log_probs, axis=-1))
    total = surrogate + value_loss * config.value_coef - entropy * config.entropy_coef

    stats = {
        "surrogate": surrogate.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "matching_loss": 0.0,
        "match_cost": 0.0,
        "null_fraction": 0.0,
        "clip_fraction": float(np.mean(np.abs(ratio.data - 1.0) > config.clip)),
        "approx_kl": float(np.mean(batch.old_log_probs - new_logp.data)),
    }
    if perception.class_logits is not None and config.match_coef > 0:
        matched = match_batch(
            batch.gt_classes,
            batch.gt_targets,
            ops.softmax_lastdim(perception.class_logits),
            perception.modality,
        )
        total = total + matched.loss * config.match_coef
        stats.update(
            matching_loss=matched.loss.item(),
            match_cost=matched.mean_cost,
            null_fraction=matched.null_fraction,
        )
    return total, stats


def _dump_diagnostics(dump_dir: Optional[Path], payload: Dict[str, object]) -> Optional[Path]:
    if dump_dir is None:
        return None
    path = Path(dump_dir) / NAN_DUMP
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def ppo_update(
    model: DMTFNet,
    buffer: RolloutBuffer,
    estimates: AdvantageEstimates,
    config: PPOConfig,
    optimizer: AdamState,
    rng: np.random.Generator,
    dump_dir: Optional[Path] = None,
) -> LossReport:
    """
    ``config.epochs`` passes over shuffled episode minibatches, one Adam step each.

    Raises:
        NumericError: if a loss or gradient turns non-finite; the update is
            abandoned and a diagnostic dump is written to ``dump_dir``.
    """
    if not buffer.episodes:
        raise DimensionError("ppo_update needs a non-empty rollout buffer")
    advantages = estimates.normalized()
    named = list(model.named_parameters())
    params = [p for _, p in named]
    totals = LossReport()
    n = len(buffer.episodes)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_episodes):
            chosen = [int(i) for i in order[start:start + config.minibatch_episodes]]
            batch = time_major_batch(
                [buffer.episodes[i] for i in chosen],
                [advantages[i] for i in chosen],
                [estimates.returns[i] for i in chosen],
            )
            try:
                model.zero_grad()
                with GradTape():
                    loss, stats = ppo_losses(model, batch, config)
                backward(loss)
                grad_norm = clip_grad_norm(params, config.max_grad_norm) if config.max_grad_norm > 0 else 0.0
                adam_step(named, optimizer)
            except (NumericError, TrainingError) as e:
                path = _dump_diagnostics(
                    dump_dir,
                    {
                        "error": str(e),
                        "epoch": epoch,
                        "episodes": [ep.episode_id for ep in batch.episodes],
                        "adam_step": optimizer.step,
                        "param_norms": {name: float(np.linalg.norm(p.data)) for name, p in named},
                    },
                )
                raise NumericError(f"PPO update aborted in epoch {epoch}: {e} (diagnostics: {path})") from e

            for key, value in stats.items():
                setattr(totals, key, getattr(totals, key) + value)
            totals.grad_norm += float(grad_norm)
            totals.minibatches += 1

    report = LossReport(**{k: v / totals.minibatches for k, v in asdict(totals).items() if k != "minibatches"})
    report.minibatches = totals.minibatches
    return report
