"""
Evaluation Agents
=================

The trained policy (greedy), an always-optimal oracle and a uniform random
baseline, all behind one small interface.
"""

import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.model import DMTFNet, PolicyOutput
from ..core.schemas import EpisodeSpec
from ..env.gridmap import Action
from ..env.simulator import GridNavEnv, Observation


@dataclass
class AgentDecision:
    action: int
    output: Optional[PolicyOutput] = None

    @property
    def importance(self) -> Optional[np.ndarray]:
        if self.output is None or self.output.importance is None:
            return None
        return self.output.importance[0]


class Agent:
    """Base interface: ``reset`` at episode start, then ``act`` once per step."""

    name = "agent"

    def reset(self, spec: EpisodeSpec) -> None:
        pass

    def act(self, env: GridNavEnv, observation: Observation) -> AgentDecision:
        raise NotImplementedError


class DMTFAgent(Agent):
    """Argmax over the policy's action distribution; one recurrent state per episode."""

    name = "dmtf"

    def __init__(self, model: DMTFNet):
        self.model = model
        self._hidden = model.initial_state(1)

    def reset(self, spec: EpisodeSpec) -> None:
        self._hidden = self.model.initial_state(1)

    def act(self, env: GridNavEnv, observation: Observation) -> AgentDecision:
        delta = None if observation.delta is None else observation.delta[None]
        out = self.model(observation.visual[None], observation.audio[None], delta, self._hidden)
        self._hidden = out.hidden.data
        return AgentDecision(action=int(np.argmax(out.probs.data[0])), output=out)


class OracleAgent(Agent):
    """Follows the geodesic oracle, preferring forward moves, then left turns."""

    name = "oracle"

    def act(self, env: GridNavEnv, observation: Observation) -> AgentDecision:
        actions, _ = env.oracle_targets()
        return AgentDecision(action=int(min(actions)))


class RandomAgent(Agent):
    """Uniform over the four actions, seeded per episode id."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def reset(self, spec: EpisodeSpec) -> None:
        key = zlib.crc32(spec.episode_id.encode("utf-8"))
        self._rng = np.random.default_rng(np.random.SeedSequence([self.seed, key]))

    def act(self, env: GridNavEnv, observation: Observation) -> AgentDecision:
        return AgentDecision(action=int(self._rng.integers(len(Action))))
