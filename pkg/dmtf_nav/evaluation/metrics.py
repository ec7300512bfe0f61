"""
Navigation Metrics
==================

Success rate, success weighted by path length, and success weighted by
number of actions, computed over terminal ``EpisodeRecord`` summaries.

Sums use ``math.fsum`` so a report does not depend on episode order.
"""

import math
from typing import Sequence

from ..core.errors import DataError
from ..core.schemas import ReportSummary, TemplateSplit
from ..env.simulator import EpisodeRecord


def _require_records(records: Sequence[EpisodeRecord]) -> None:
    if not records:
        raise DataError("metrics need at least one episode record")
    for r in records:
        if r.success not in (0, 1):
            raise DataError(f"episode {r.episode_id}: success flag must be 0 or 1, got {r.success}")


def success_rate(records: Sequence[EpisodeRecord]) -> float:
    _require_records(records)
    return math.fsum(r.success for r in records) / len(records)


def spl(records: Sequence[EpisodeRecord]) -> float:
    """Mean of ``S * l / max(p, l)``."""
    _require_records(records)
    terms = []
    for r in records:
        if not r.success:
            terms.append(0.0)
            continue
        if r.shortest <= 0:
            raise DataError(f"episode {r.episode_id}: successful episode has shortest path {r.shortest}")
        terms.append(r.shortest / max(r.path_length, r.shortest))
    return math.fsum(terms) / len(records)


def sna(records: Sequence[EpisodeRecord]) -> float:
    """Mean of ``S / a`` with ``a`` the number of executed actions."""
    _require_records(records)
    terms = []
    for r in records:
        if not r.success:
            terms.append(0.0)
            continue
        if r.actions < 1:
            raise DataError(f"episode {r.episode_id}: successful episode took {r.actions} actions")
        terms.append(1.0 / r.actions)
    return math.fsum(terms) / len(records)


def sna_normalized(records: Sequence[EpisodeRecord]) -> float:
    """Mean of ``S * a* / max(a, a*)`` with ``a*`` the oracle's action count."""
    _require_records(records)
    terms = []
    for r in records:
        if not r.success:
            terms.append(0.0)
            continue
        if r.actions < 1 or r.oracle_actions < 1:
            raise DataError(
                f"episode {r.episode_id}: action counts a={r.actions}, a*={r.oracle_actions} must be ≥ 1"
            )
        terms.append(r.oracle_actions / max(r.actions, r.oracle_actions))
    return math.fsum(terms) / len(records)


def summarize(
    records: Sequence[EpisodeRecord],
    suite_id: str,
    split: TemplateSplit,
    ablation: str = "none",
    agent: str = "dmtf",
) -> ReportSummary:
    return ReportSummary(
        sr=success_rate(records),
        spl=spl(records),
        sna=sna(records),
        sna_normalized=sna_normalized(records),
        split=split,
        ablation=ablation,
        suite_id=suite_id,
        num_episodes=len(records),
        agent=agent,
    )
