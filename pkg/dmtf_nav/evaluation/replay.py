"""
Trajectory Replay
=================

Re-executes a trajectory log against its suite and checks that every recorded
step reproduces: pose, reward, geodesic distance and termination.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..core.config import EnvConfig
from ..core.errors import ProtocolError
from ..core.schemas import TrajectoryRecord
from ..env.sensors import TemplateBank
from ..env.simulator import GridNavEnv
from ..env.suites import load_suite
from ..utils.io import read_jsonl
from .evaluator import _resolve_manifest

logger = logging.getLogger(__name__)

REWARD_TOLERANCE = 1e-9


@dataclass
class ReplayResult:
    episodes: int = 0
    steps: int = 0
    mismatches: List[str] = field(default_factory=list)
    frames: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def group_by_episode(records: List[TrajectoryRecord]) -> "OrderedDict[str, List[TrajectoryRecord]]":
    """
    Group records by episode, preserving file order.

    Raises:
        ProtocolError: if ``t`` is not strictly increasing within an episode
            or a record follows the terminal one.
    """
    grouped: "OrderedDict[str, List[TrajectoryRecord]]" = OrderedDict()
    for rec in records:
        steps = grouped.setdefault(rec.episode, [])
        if steps:
            if rec.t <= steps[-1].t:
                raise ProtocolError(f"{rec.episode}: t={rec.t} does not follow t={steps[-1].t}")
            if steps[-1].done:
                raise ProtocolError(f"{rec.episode}: record at t={rec.t} after the terminal step")
        steps.append(rec)
    return grouped


def replay_episode(env: GridNavEnv, records: List[TrajectoryRecord], render: bool = False) -> List[str]:
    """Replay one episode; returns the ASCII frames when ``render`` is set."""
    episode = records[0].episode
    frames = [env.grid.render_ascii(env.pose, env.source)] if render else []
    for rec in records:
        if env.done:
            raise ProtocolError(f"{episode}: episode ended before t={rec.t}")
        if rec.t != env.t:
            raise ProtocolError(f"{episode}: record t={rec.t} but simulator is at t={env.t}")
        result = env.step(rec.action)
        if env.pose.as_list() != rec.pose:
            raise ProtocolError(f"{episode} t={rec.t}: pose {env.pose.as_list()} != recorded {rec.pose}")
        if abs(result.reward - rec.reward) > REWARD_TOLERANCE:
            raise ProtocolError(f"{episode} t={rec.t}: reward {result.reward} != recorded {rec.reward}")
        if result.info.geodesic_distance != rec.geodesic:
            raise ProtocolError(
                f"{episode} t={rec.t}: geodesic {result.info.geodesic_distance} != recorded {rec.geodesic}"
            )
        if result.done != rec.done:
            raise ProtocolError(f"{episode} t={rec.t}: done={result.done} but recorded {rec.done}")
        if render:
            frames.append(env.grid.render_ascii(env.pose, env.source))
    return frames


def replay(
    suite_path: Union[str, Path],
    trajectories_path: Union[str, Path],
    env_config: Optional[EnvConfig] = None,
    manifest_path: Optional[Union[str, Path]] = None,
    render: bool = False,
) -> ReplayResult:
    """
    Replay every episode of a trajectory log.

    Episodes missing from the suite and per-step disagreements are collected
    as mismatches rather than raised, so one bad episode does not hide others.
    """
    suite_path = Path(suite_path)
    suite = load_suite(suite_path)
    manifest = _resolve_manifest(suite_path, suite, Path(manifest_path) if manifest_path else None)
    env = GridNavEnv(env_config or EnvConfig(audio_bands=manifest.num_bands), TemplateBank(manifest))
    specs = {ep.episode_id: ep for ep in suite.episodes}

    result = ReplayResult()
    for episode, records in group_by_episode(read_jsonl(trajectories_path, TrajectoryRecord)).items():
        result.episodes += 1
        spec = specs.get(episode)
        if spec is None:
            result.mismatches.append(f"{episode}: not in suite '{suite.suite_id}'")
            continue
        env.reset(spec)
        try:
            frames = replay_episode(env, records, render)
        except ProtocolError as e:
            result.mismatches.append(str(e))
            continue
        result.steps += len(records)
        if render:
            result.frames[episode] = frames

    logger.info(
        f"🎞️ Replayed {result.episodes} episode(s), {result.steps} step(s), "
        f"{len(result.mismatches)} mismatch(es)"
    )
    return result
