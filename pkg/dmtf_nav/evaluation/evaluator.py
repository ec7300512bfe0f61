"""
Suite Evaluation
================

Runs an agent over every episode of a suite, assembles the metrics report and
optionally dumps attention maps and trajectories for offline analysis.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from ..core.config import EnvConfig
from ..core.errors import ProtocolError
from ..core.model import DMTFNet
from ..core.schemas import (
    AttentionModule,
    AttentionRecord,
    EpisodeReportRow,
    EpisodeSpec,
    ReportSummary,
    SuiteFile,
    TemplateManifest,
    TemplateSplit,
    TrajectoryRecord,
)
from ..env.sensors import TemplateBank
from ..env.simulator import EnvPool, EpisodeRecord, GridNavEnv
from ..env.suites import check_split, load_suite, manifest_for
from ..utils.io import JsonlWriter, read_json, write_csv, write_json
from .agents import Agent, AgentDecision, DMTFAgent, OracleAgent, RandomAgent
from .metrics import summarize

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = ("episode_id", "S", "l", "p", "a", "a_star", "return")
AgentFactory = Callable[[], Agent]


@dataclass
class EpisodeOutcome:
    record: EpisodeRecord
    attention: List[AttentionRecord] = field(default_factory=list)
    trajectory: List[TrajectoryRecord] = field(default_factory=list)


@dataclass
class EvalReport:
    summary: ReportSummary
    rows: List[EpisodeReportRow]
    outcomes: List[EpisodeOutcome]

    @property
    def records(self) -> List[EpisodeRecord]:
        return [o.record for o in self.outcomes]


def _attention_records(
    episode: str,
    t: int,
    decision: AgentDecision,
    encoder: bool,
) -> List[AttentionRecord]:
    perception = decision.output.perception
    groups = [(AttentionModule.DECODER, perception.decoder_attention, perception.boundary)]
    if encoder:
        vis = perception.encoder_attention.get("encoder_visual", [])
        aud = perception.encoder_attention.get("encoder_audio", [])
        groups.append((AttentionModule.ENCODER_VISUAL, vis, vis[0].shape[-1] if vis else 0))
        groups.append((AttentionModule.ENCODER_AUDIO, aud, 0))
    records = []
    for module, maps, boundary in groups:
        for layer, weights in enumerate(maps):
            w = np.asarray(weights[0], dtype=np.float64)
            for head in range(w.shape[0]):
                for slot in range(w.shape[1]):
                    records.append(
                        AttentionRecord(
                            episode=episode,
                            t=t,
                            module=module,
                            layer=layer,
                            head=head,
                            slot=slot,
                            weights=w[head, slot].tolist(),
                            boundary=boundary,
                        )
                    )
    return records


def run_episode(
    env: GridNavEnv,
    agent: Agent,
    spec: EpisodeSpec,
    dump_attention: bool = False,
    dump_encoder_attention: bool = False,
    dump_trajectory: bool = False,
) -> EpisodeOutcome:
    """Roll one episode to termination and collect the requested dumps."""
    observation = env.reset(spec)
    agent.reset(spec)
    outcome_attention: List[AttentionRecord] = []
    trajectory: List[TrajectoryRecord] = []
    while not env.done:
        t = env.t
        decision = agent.act(env, observation)
        if decision.output is not None and (dump_attention or dump_encoder_attention):
            outcome_attention.extend(
                _attention_records(spec.episode_id, t, decision, dump_encoder_attention)
            )
        try:
            result = env.step(decision.action)
        except ProtocolError as e:
            raise ProtocolError(f"episode {spec.episode_id} step {t}: {e}") from e
        observation = result.observation
        if dump_trajectory:
            importance = decision.importance
            trajectory.append(
                TrajectoryRecord(
                    episode=spec.episode_id,
                    t=t,
                    pose=env.pose.as_list(),
                    action=decision.action,
                    reward=result.reward,
                    geodesic=result.info.geodesic_distance,
                    w_vis=None if importance is None else float(importance[0]),
                    w_aud=None if importance is None else float(importance[1]),
                    done=result.done,
                )
            )
    return EpisodeOutcome(record=env.record(), attention=outcome_attention, trajectory=trajectory)


def evaluate_agent(
    make_agent: AgentFactory,
    suite: SuiteFile,
    env_config: EnvConfig,
    bank: TemplateBank,
    workers: int = 1,
    episodes: Optional[int] = None,
    **dumps: bool,
) -> List[EpisodeOutcome]:
    """Run a fresh agent per episode across an environment pool, in suite order."""
    specs = suite.episodes if episodes is None else suite.episodes[:episodes]
    pool = EnvPool(env_config, bank, workers)
    return pool.run(lambda env, spec: run_episode(env, make_agent(), spec, **dumps), specs)


def build_report(
    outcomes: List[EpisodeOutcome],
    suite: SuiteFile,
    ablation: str = "none",
    agent: str = "dmtf",
) -> EvalReport:
    records = [o.record for o in outcomes]
    rows = [
        EpisodeReportRow(
            episode_id=r.episode_id,
            S=r.success,
            l=r.shortest,
            p=r.path_length,
            a=r.actions,
            a_star=r.oracle_actions,
            episode_return=r.episode_return,
        )
        for r in records
    ]
    summary = summarize(records, suite.suite_id, suite.template_split, ablation, agent)
    return EvalReport(summary=summary, rows=rows, outcomes=outcomes)


def write_report(out_dir: Union[str, Path], report: EvalReport) -> Dict[str, Path]:
    """Write ``episodes.csv``, ``summary.json`` and any collected dumps."""
    out_dir = Path(out_dir)
    paths = {
        "episodes": write_csv(out_dir / "episodes.csv", report.rows, EPISODE_COLUMNS),
        "summary": write_json(out_dir / "summary.json", report.summary),
    }
    if any(o.attention for o in report.outcomes):
        with JsonlWriter(out_dir / "attention.jsonl", AttentionRecord) as writer:
            for o in report.outcomes:
                for rec in o.attention:
                    writer.write(rec)
        paths["attention"] = writer.path
    if any(o.trajectory for o in report.outcomes):
        with JsonlWriter(out_dir / "trajectories.jsonl", TrajectoryRecord) as writer:
            for o in report.outcomes:
                for rec in o.trajectory:
                    writer.write(rec)
        paths["trajectories"] = writer.path
    return paths


def _resolve_manifest(suite_path: Path, suite: SuiteFile, manifest_path: Optional[Path]) -> TemplateManifest:
    manifest = manifest_for(suite_path, suite)
    if manifest is None and manifest_path is not None:
        manifest = read_json(manifest_path, TemplateManifest)
    if manifest is None:
        raise ProtocolError(f"Suite {suite_path} names no template manifest")
    return manifest


def check_training_overlap(suite: SuiteFile, metadata: Dict[str, Any]) -> None:
    """Unheard suites must not use any template the checkpoint was trained on."""
    trained = set(metadata.get("train_template_ids") or [])
    if suite.template_split != TemplateSplit.UNHEARD or not trained:
        return
    leaked = sorted({ep.template_id for ep in suite.episodes} & trained)
    if leaked:
        raise ProtocolError(
            f"Unheard suite '{suite.suite_id}' uses templates seen in training: {leaked[:10]}"
        )


def evaluate(
    suite_path: Union[str, Path],
    out_dir: Union[str, Path],
    checkpoint: Optional[Union[str, Path]] = None,
    agent: str = "dmtf",
    split: Optional[TemplateSplit] = None,
    env_config: Optional[EnvConfig] = None,
    manifest_path: Optional[Union[str, Path]] = None,
    workers: int = 1,
    seed: int = 0,
    dump_attention: bool = False,
    dump_encoder_attention: bool = False,
    dump_trajectories: bool = False,
) -> EvalReport:
    """
    Evaluate a checkpoint (or a scripted agent) on a suite and write the report.

    Raises:
        ProtocolError: if the suite's templates violate its split, the
            requested split differs from the suite's, or an unheard suite
            reuses training templates.
    """
    suite_path = Path(suite_path)
    suite = load_suite(suite_path)
    if split is not None and split != suite.template_split:
        raise ProtocolError(
            f"Suite '{suite.suite_id}' is tagged {suite.template_split.value}, not {split.value}"
        )
    manifest = _resolve_manifest(suite_path, suite, Path(manifest_path) if manifest_path else None)
    check_split(suite, manifest)

    ablation = "none"
    if agent == "dmtf":
        if checkpoint is None:
            raise ProtocolError("Evaluating the dmtf agent needs a checkpoint")
        model, _, metadata = DMTFNet.from_checkpoint(checkpoint)
        check_training_overlap(suite, metadata)
        ablation = model.config.ablation
        if env_config is None and "env_config" in metadata:
            env_config = EnvConfig.from_dict(metadata["env_config"], f"{checkpoint} env_config")
        make_agent: AgentFactory = lambda: DMTFAgent(model)
        if env_config is None:
            env_config = EnvConfig(
                image_size=model.config.image_size,
                pointgoal=model.config.pointgoal,
                audio_bands=manifest.num_bands,
            )
    elif agent == "oracle":
        make_agent = OracleAgent
    elif agent == "random":
        make_agent = lambda: RandomAgent(seed)
    else:
        raise ProtocolError(f"Unknown agent '{agent}'")
    env_config = env_config or EnvConfig(audio_bands=manifest.num_bands)

    outcomes = evaluate_agent(
        make_agent,
        suite,
        env_config,
        TemplateBank(manifest),
        workers=workers,
        dump_attention=dump_attention,
        dump_encoder_attention=dump_encoder_attention,
        dump_trajectory=dump_trajectories,
    )
    report = build_report(outcomes, suite, ablation, agent)
    write_report(out_dir, report)
    s = report.summary
    logger.info(
        f"📊 {suite.suite_id} [{s.split.value}] agent={agent} "
        f"SR={s.sr:.3f} SPL={s.spl:.3f} SNA={s.sna:.4f} SNA*={s.sna_normalized:.3f}"
    )
    return report
