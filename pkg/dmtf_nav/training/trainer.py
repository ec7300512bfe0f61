"""
Training Loop
=============

Collect → advantages → update, repeated for the configured number of updates,
with periodic checkpoints, validation and a metrics CSV. A run resumed from
its latest checkpoint continues exactly as the uninterrupted run would.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import RunConfig
from ..core.errors import CheckpointError, DataError
from ..core.model import OPTIMIZER_PREFIX, DMTFNet
from ..core.schemas import MetricsRow, SuiteFile, TemplateManifest
from ..env.sensors import TemplateBank
from ..env.simulator import EnvPool
from ..env.suites import check_split, load_suite, manifest_for
from ..evaluation.agents import DMTFAgent
from ..evaluation.evaluator import build_report, evaluate_agent
from ..ndgrad.checkpoint import load_checkpoint
from ..ndgrad.optim import AdamState
from ..utils.io import read_json, truncate_csv, write_csv
from .ppo import compute_gae, ppo_update
from .rollout import collect_rollouts, episode_seeds

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
METRICS_COLUMNS = tuple(MetricsRow.model_fields)
CHECKPOINT_GLOB = "ckpt_*.bin"


@dataclass
class TrainResult:
    checkpoint: Path
    metrics: Path
    updates: int
    env_steps: int


def checkpoint_name(update: int) -> str:
    return f"ckpt_{update:06d}.bin"


def latest_checkpoint(out_dir: Path) -> Optional[Path]:
    found = sorted(Path(out_dir).glob(CHECKPOINT_GLOB))
    return found[-1] if found else None


def _load_suite_with_manifest(path: str, fallback: Optional[str]) -> Tuple[SuiteFile, TemplateManifest]:
    suite = load_suite(path)
    manifest = manifest_for(path, suite)
    if manifest is None and fallback is not None:
        manifest = read_json(fallback, TemplateManifest)
    if manifest is None:
        raise DataError(f"Suite {path} names no template manifest and none is configured")
    check_split(suite, manifest)
    return suite, manifest


def _optimizer_tensors(state: AdamState) -> Dict[str, np.ndarray]:
    tensors = {}
    for name, m in state.m.items():
        tensors[f"{OPTIMIZER_PREFIX}m.{name}"] = m
    for name, v in state.v.items():
        tensors[f"{OPTIMIZER_PREFIX}v.{name}"] = v
    return tensors


def _restore_optimizer(state: AdamState, tensors: Dict[str, np.ndarray], step: int) -> None:
    for name in list(state.m):
        try:
            state.m[name] = tensors[f"{OPTIMIZER_PREFIX}m.{name}"].copy()
            state.v[name] = tensors[f"{OPTIMIZER_PREFIX}v.{name}"].copy()
        except KeyError as e:
            raise CheckpointError(f"Checkpoint lacks optimizer moment {e.args[0]}") from e
    state.step = step


class Trainer:
    """
    Owns the model, optimizer and environment pool of one run.

    Args:
        config: Validated run configuration.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.suite, manifest = _load_suite_with_manifest(config.suites.train, config.suites.manifest)
        self.bank = TemplateBank(manifest)
        self.val_suite: Optional[SuiteFile] = None
        self.val_bank: Optional[TemplateBank] = None
        if config.suites.val:
            self.val_suite, val_manifest = _load_suite_with_manifest(config.suites.val, config.suites.manifest)
            self.val_bank = self.bank if val_manifest == manifest else TemplateBank(val_manifest)

        self.model = DMTFNet(config.model, seed=config.seed)
        self.optimizer = AdamState.for_parameters(list(self.model.named_parameters()), config.ppo.learning_rate)
        self.pool = EnvPool(config.env, self.bank, config.ppo.workers)
        self.update = 0
        self.env_steps = 0
        logger.info(
            f"🧠 DMTFNet fusion={config.model.fusion} ablation={config.model.ablation} "
            f"params={self.model.num_parameters():,} workers={self.pool.workers}"
        )

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / METRICS_FILE

    # ------------------------------------------------------------------ #
    # Persistence
    # ------------------------------------------------------------------ #
    def save(self) -> Path:
        path = self.out_dir / checkpoint_name(self.update)
        self.model.save(
            path,
            extra_tensors=_optimizer_tensors(self.optimizer),
            metadata={
                "update": self.update,
                "env_steps": self.env_steps,
                "adam_step": self.optimizer.step,
                "env_config": self.config.env.model_dump(mode="json"),
                "ppo_config": self.config.ppo.model_dump(mode="json"),
                "train_suite": self.suite.suite_id,
                "train_template_ids": sorted({ep.template_id for ep in self.suite.episodes}),
            },
        )
        return path

    def resume(self) -> bool:
        """Restore the latest checkpoint in the output directory; False if none exists."""
        path = latest_checkpoint(self.out_dir)
        if path is None:
            logger.warning(f"⚠️ No checkpoint in {self.out_dir}; starting fresh")
            return False
        tensors, metadata = load_checkpoint(path)
        self.model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith(OPTIMIZER_PREFIX)})
        _restore_optimizer(self.optimizer, tensors, int(metadata.get("adam_step", 0)))
        self.update = int(metadata.get("update", 0))
        self.env_steps = int(metadata.get("env_steps", 0))
        kept = truncate_csv(self.metrics_path, MetricsRow, lambda r: r.update <= self.update, METRICS_COLUMNS)
        logger.info(f"🔁 Resumed from {path.name} at update {self.update} ({kept} metric rows kept)")
        return True

    # ------------------------------------------------------------------ #
    # Loop
    # ------------------------------------------------------------------ #
    def _episode_specs(self, update: int) -> List:
        n = self.config.ppo.episodes_per_update
        episodes = self.suite.episodes
        return [episodes[((update - 1) * n + i) % len(episodes)] for i in range(n)]

    def validate(self) -> Optional[Tuple[float, float, float]]:
        if self.val_suite is None:
            return None
        model = self.model.snapshot()
        outcomes = evaluate_agent(
            lambda: DMTFAgent(model),
            self.val_suite,
            self.config.env,
            self.val_bank,
            workers=self.config.ppo.workers,
            episodes=self.config.ppo.eval_episodes,
        )
        summary = build_report(outcomes, self.val_suite, self.config.model.ablation).summary
        return summary.sr, summary.spl, summary.sna

    def step(self) -> MetricsRow:
        """Run one collect/update iteration and return its metrics row."""
        cfg = self.config
        update = self.update + 1
        snapshot = self.model.snapshot()
        specs = self._episode_specs(update)
        buffer = collect_rollouts(
            self.pool,
            snapshot,
            specs,
            episode_seeds(cfg.seed, update, len(specs)),
            cfg.ppo.horizon,
            cfg.env.modality_distance_scale,
        )
        estimates = compute_gae(buffer, cfg.ppo.gamma, cfg.ppo.gae_lambda)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, update, 0xB0B]))
        report = ppo_update(self.model, buffer, estimates, cfg.ppo, self.optimizer, rng, dump_dir=self.out_dir)
        self.update = update
        self.env_steps += buffer.total_steps

        val = None
        if update % cfg.ppo.eval_interval == 0 or update == cfg.ppo.updates:
            val = self.validate()
        row = MetricsRow(
            update=update,
            env_steps=self.env_steps,
            mean_return=buffer.mean_return,
            surrogate=report.surrogate,
            value_loss=report.value_loss,
            entropy=report.entropy,
            matching_loss=report.matching_loss,
            match_cost=report.match_cost,
            null_fraction=report.null_fraction,
            sr_val=None if val is None else val[0],
            spl_val=None if val is None else val[1],
            sna_val=None if val is None else val[2],
        )
        write_csv(self.metrics_path, [row], METRICS_COLUMNS, append=True)
        logger.info(
            f"🏃 update {update}/{cfg.ppo.updates} steps={self.env_steps} return={row.mean_return:.3f} "
            f"surr={report.surrogate:.4f} vf={report.value_loss:.4f} ent={report.entropy:.3f} "
            f"match={report.matching_loss:.4f} clip={report.clip_fraction:.3f} kl={report.approx_kl:.5f}"
            + ("" if val is None else f" | val SR={val[0]:.3f} SPL={val[1]:.3f}")
        )
        if update % cfg.ppo.checkpoint_interval == 0 or update == cfg.ppo.updates:
            self.save()
        return row

    def run(self) -> TrainResult:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config.save_yaml(self.out_dir / "config.yaml")
        while self.update < self.config.ppo.updates:
            self.step()
        final = self.out_dir / checkpoint_name(self.update)
        if not final.exists():
            self.save()
        logger.info(f"✅ Training finished: {self.update} updates, {self.env_steps} env steps")
        return TrainResult(checkpoint=final, metrics=self.metrics_path, updates=self.update, env_steps=self.env_steps)


def train(config: RunConfig, resume: bool = False) -> TrainResult:
    """Train a policy as configured; with ``resume`` continue from the latest checkpoint."""
    trainer = Trainer(config)
    if resume:
        trainer.resume()
    elif latest_checkpoint(trainer.out_dir) is not None:
        raise DataError(f"{trainer.out_dir} already holds checkpoints; pass --resume or choose a new --out")
    return trainer.run()
