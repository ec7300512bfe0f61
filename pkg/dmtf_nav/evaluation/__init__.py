"""
Evaluation Module
=================

SR / SPL / SNA metrics, scripted and learned agents, suite evaluation with
attention and trajectory dumps, and trajectory replay.
"""

from .agents import Agent, AgentDecision, DMTFAgent, OracleAgent, RandomAgent
from .evaluator import EvalReport, EpisodeOutcome, evaluate, evaluate_agent, run_episode, write_report
from .metrics import sna, sna_normalized, spl, success_rate, summarize
from .replay import ReplayResult, replay

__all__ = [
    "success_rate",
    "spl",
    "sna",
    "sna_normalized",
    "summarize",
    "Agent",
    "AgentDecision",
    "DMTFAgent",
    "OracleAgent",
    "RandomAgent",
    "EpisodeOutcome",
    "EvalReport",
    "run_episode",
    "evaluate_agent",
    "evaluate",
    "write_report",
    "ReplayResult",
    "replay",
]
