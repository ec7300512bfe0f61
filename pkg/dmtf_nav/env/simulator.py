"""
Grid Navigation Simulator
=========================

Episode lifecycle for the audio-visual grid world: reset from an
``EpisodeSpec``, step with discrete actions, report shaped rewards and the
terminal ``EpisodeRecord`` used by the metrics.
"""

import logging
import queue
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..core.config import EnvConfig, worker_count
from ..core.errors import EpisodeSetupError, MapGenerationError, ProtocolError
from ..core.schemas import EpisodeSpec
from .gridmap import (
    UNREACHABLE,
    Action,
    AgentPose,
    Cell,
    GridMap,
    distance_field,
    generate_map,
    minimal_action_count,
    oracle_first_actions,
)
from .sensors import TemplateBank, agent_frame, render_visual, synth_audio_for

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class Observation:
    """Per-step sensor bundle."""

    visual: np.ndarray
    audio: np.ndarray
    delta: Optional[np.ndarray] = None


@dataclass
class StepInfo:
    geodesic_distance: int
    collided: bool
    success: bool
    truncated: bool
    optimal_actions: FrozenSet[Action]


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: StepInfo


@dataclass
class EpisodeRecord:
    """Terminal summary; ``actions`` counts every executed action including STOP."""

    episode_id: str
    success: int
    shortest: int
    path_length: int
    actions: int
    oracle_actions: int
    episode_return: float = 0.0


@dataclass
class _EpisodeState:
    spec: EpisodeSpec
    grid: GridMap
    source: Cell
    field: np.ndarray
    pose: AgentPose
    geodesic: int
    shortest: int
    oracle_actions: int
    t: int = 0
    forward_moves: int = 0
    episode_return: float = 0.0
    done: bool = False
    success: bool = False


class GridNavEnv:
    """
    One simulator instance. Instances are independent; a single instance must
    not be stepped from two threads at once.

    Args:
        config: Sensor and reward settings.
        bank: Sound templates referenced by episode specs.
    """

    def __init__(self, config: EnvConfig, bank: TemplateBank):
        if bank.manifest.num_bands != config.audio_bands:
            raise EpisodeSetupError(
                f"Template bank has {bank.manifest.num_bands} bands, env expects {config.audio_bands}"
            )
        self.config = config
        self.bank = bank
        self._maps: Dict[Tuple[int, int, int, float], GridMap] = {}
        self._state: Optional[_EpisodeState] = None

    # ------------------------------------------------------------------ #
    # Properties
    # ------------------------------------------------------------------ #
    @property
    def pose(self) -> AgentPose:
        return self._require_state().pose

    @property
    def grid(self) -> GridMap:
        return self._require_state().grid

    @property
    def source(self) -> Cell:
        return self._require_state().source

    @property
    def geodesic(self) -> int:
        return self._require_state().geodesic

    @property
    def t(self) -> int:
        return self._require_state().t

    @property
    def done(self) -> bool:
        return self._state is not None and self._state.done

    def _require_state(self) -> _EpisodeState:
        if self._state is None:
            raise ProtocolError("Environment used before reset()")
        return self._state

    # ------------------------------------------------------------------ #
    # Episode lifecycle
    # ------------------------------------------------------------------ #
    def _map_for(self, spec: EpisodeSpec) -> GridMap:
        key = (spec.map_seed, spec.width, spec.height, spec.density)
        grid = self._maps.get(key)
        if grid is None:
            try:
                grid = generate_map(spec.map_seed, spec.width, spec.height, spec.density)
            except MapGenerationError as e:
                raise EpisodeSetupError(f"Episode {spec.episode_id}: {e}") from e
            self._maps[key] = grid
        return grid

    def reset(self, spec: EpisodeSpec) -> Observation:
        """
        Start the episode described by ``spec``.

        Raises:
            EpisodeSetupError: if start or source is blocked, the source is
                unreachable, or the template is unknown.
        """
        grid = self._map_for(spec)
        start = AgentPose(spec.start[0], spec.start[1], spec.start[2])
        source = (spec.source[0], spec.source[1])
        if not grid.is_free(start.cell):
            raise EpisodeSetupError(f"Episode {spec.episode_id}: start {start.cell} is not free")
        if not grid.is_free(source):
            raise EpisodeSetupError(f"Episode {spec.episode_id}: source {source} is not free")
        self.bank[spec.template_id]

        field = distance_field(grid, source)
        geo = int(field[start.y, start.x])
        if geo == UNREACHABLE:
            raise EpisodeSetupError(f"Episode {spec.episode_id}: source unreachable from start")
        radius = self.config.success_radius
        self._state = _EpisodeState(
            spec=spec,
            grid=grid,
            source=source,
            field=field,
            pose=start,
            geodesic=geo,
            shortest=max(geo - radius, 0),
            oracle_actions=minimal_action_count(grid, start, source, radius, field),
        )
        return self._observe()

    def _observe(self) -> Observation:
        state = self._require_state()
        cfg = self.config
        visual = render_visual(state.grid, state.pose, cfg.view_size, cfg.image_size)
        step_seed = np.random.SeedSequence([state.spec.audio_seed, state.t])
        audio = synth_audio_for(
            state.grid,
            state.pose,
            state.source,
            self.bank[state.spec.template_id],
            state.geodesic,
            cfg.audio_frames,
            step_seed,
            cfg.noise_scale,
        )
        delta = None
        if cfg.pointgoal:
            delta = np.asarray(agent_frame(state.pose, state.source), dtype=np.float64)
        return Observation(visual=visual, audio=audio, delta=delta)

    def oracle_targets(self) -> Tuple[FrozenSet[Action], int]:
        """Optimal first actions and the current geodesic distance."""
        state = self._require_state()
        actions, _ = oracle_first_actions(
            state.grid, state.pose, state.source, self.config.success_radius, state.field
        )
        return actions, state.geodesic

    def step(self, action: int) -> StepResult:
        """
        Apply one action.

        Raises:
            ProtocolError: when called after the episode ended or with an
                unknown action.
        """
        state = self._require_state()
        if state.done:
            raise ProtocolError(
                f"Episode {state.spec.episode_id}: action after done (t={state.t})"
            )
        try:
            action = Action(int(action))
        except ValueError as e:
            raise ProtocolError(f"Unknown action {action!r}") from e

        cfg = self.config
        before = state.geodesic
        collided = False
        success = False
        if action == Action.MOVE_FORWARD:
            nxt = state.pose.forward_cell()
            if state.grid.is_free(nxt):
                state.pose = AgentPose(nxt[0], nxt[1], state.pose.heading)
                state.geodesic = int(state.field[nxt[1], nxt[0]])
                state.forward_moves += 1
            else:
                collided = True
        elif action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            state.pose = state.pose.turned(action)
        else:
            success = state.geodesic <= cfg.success_radius
            state.done = True
            state.success = success

        state.t += 1
        truncated = False
        if not state.done and state.t >= state.spec.max_steps:
            state.done = True
            truncated = True

        reward = cfg.success_reward * float(success) + float(before - state.geodesic) - cfg.step_penalty
        state.episode_return += reward
        optimal = frozenset() if state.done else self.oracle_targets()[0]
        info = StepInfo(
            geodesic_distance=state.geodesic,
            collided=collided,
            success=success,
            truncated=truncated,
            optimal_actions=optimal,
        )
        return StepResult(observation=self._observe(), reward=reward, done=state.done, info=info)

    def record(self) -> EpisodeRecord:
        """Summary of the finished episode."""
        state = self._require_state()
        if not state.done:
            raise ProtocolError(f"Episode {state.spec.episode_id} is still running")
        return EpisodeRecord(
            episode_id=state.spec.episode_id,
            success=int(state.success),
            shortest=state.shortest,
            path_length=state.forward_moves,
            actions=state.t,
            oracle_actions=state.oracle_actions,
            episode_return=state.episode_return,
        )


class EnvPool:
    """
    A fixed set of simulator instances shared by worker threads.

    Each task borrows one instance for a whole episode and hands it back, so
    no instance is ever stepped from two threads.
    """

    def __init__(self, config: EnvConfig, bank: TemplateBank, workers: int):
        self.workers = worker_count(workers)
        self._idle: "queue.SimpleQueue[GridNavEnv]" = queue.SimpleQueue()
        for _ in range(self.workers):
            self._idle.put(GridNavEnv(config, bank))

    def run(self, fn: Callable[[GridNavEnv, T], R], items: Sequence[T]) -> List[R]:
        """Apply ``fn(env, item)`` to every item; results come back in item order."""

        def task(item: T) -> R:
            env = self._idle.get()
            try:
                return fn(env, item)
            finally:
                self._idle.put(env)

        if self.workers == 1:
            return [task(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="gridnav") as pool:
            return list(pool.map(task, items))
