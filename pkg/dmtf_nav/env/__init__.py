"""
Grid-World Environment
======================

Procedural maps, a BFS geodesic oracle, egocentric vision and synthetic
binaural audio.
"""

from .gridmap import (
    Action,
    AgentPose,
    GridMap,
    Heading,
    distance_field,
    generate_map,
    geodesic_distance,
    minimal_action_count,
    oracle_first_actions,
)
from .sensors import (
    SoundTemplate,
    TemplateBank,
    agent_frame,
    relative_bearing,
    render_visual,
    synth_audio,
)
from .simulator import EnvPool, EpisodeRecord, GridNavEnv, Observation, StepInfo, StepResult
from .suites import SuiteRequest, check_split, generate_suites, load_suite, write_suites

__all__ = [
    "Action",
    "AgentPose",
    "GridMap",
    "Heading",
    "generate_map",
    "geodesic_distance",
    "distance_field",
    "oracle_first_actions",
    "minimal_action_count",
    "SoundTemplate",
    "TemplateBank",
    "agent_frame",
    "relative_bearing",
    "render_visual",
    "synth_audio",
    "GridNavEnv",
    "EnvPool",
    "Observation",
    "StepInfo",
    "StepResult",
    "EpisodeRecord",
    "SuiteRequest",
    "generate_suites",
    "write_suites",
    "load_suite",
    "check_split",
]
