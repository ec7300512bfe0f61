"""
Command-Line Interface
======================

``dmtf-nav`` ties the package together: suite generation, training,
evaluation, ablation sweeps, trajectory replay and artifact validation.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from . import __version__
from .core.config import ABLATIONS, EnvConfig, RunConfig
from .core.errors import ConfigError, DMTFError
from .core.schemas import AblationSummary, TemplateSplit
from .env.suites import SuiteRequest, generate_suites, validate_reachability, write_suites
from .evaluation.evaluator import evaluate
from .evaluation.replay import replay
from .training.ablation import METRIC_COLUMNS, run_ablation
from .training.trainer import train
from .utils.io import validate_artifact
from .utils.logger import setup_logging

logger = logging.getLogger(__name__)
console = Console()


def _handle_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Map package exceptions onto exit codes with a one-line message."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except DMTFError as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            sys.exit(e.exit_code)
        except ValidationError as e:
            logger.error(f"❌ Invalid configuration: {e}")
            sys.exit(ConfigError.exit_code)

    return wrapper


def _load_run_config(path: str, out: Optional[str] = None, ablation: Optional[str] = None) -> RunConfig:
    config = RunConfig.from_file(path)
    if out is not None:
        config = config.model_copy(update={"output_dir": out})
    if ablation is not None:
        config = config.with_ablation(ablation)
    return config


@click.group()
@click.version_option(__version__, prog_name="dmtf-nav")
@click.option("--log-level", default="INFO", show_default=True, help="Logging level")
@click.option("--log-file", type=click.Path(dir_okay=False), default=None, help="Also log to this file")
def cli(log_level: str, log_file: Optional[str]) -> None:
    """Audio-visual navigation with multi-target transformer fusion."""
    setup_logging(log_level.upper(), log_file)


@cli.command("gen-suite")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=100, show_default=True, help="Sound-template pool size")
@click.option("--size", type=click.IntRange(min=4), default=16, show_default=True, help="Map width and height")
@click.option("--density", type=click.FloatRange(0.0, 0.4), default=0.2, show_default=True)
@click.option("--split-fraction", type=click.FloatRange(0.0, 1.0), default=0.2, show_default=True)
@click.option("--episodes", type=click.IntRange(min=1), default=50, show_default=True, help="Episodes per suite")
@click.option("--bands", type=click.IntRange(min=1), default=64, show_default=True, help="Audio frequency bands")
@click.option("--max-steps", type=click.IntRange(1, 500), default=500, show_default=True)
@click.option("--success-radius", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True, help="Overwrite existing suite files")
@_handle_errors
def gen_suite(
    seed: int,
    count: int,
    size: int,
    density: float,
    split_fraction: float,
    episodes: int,
    bands: int,
    max_steps: int,
    success_radius: int,
    out: str,
    force: bool,
) -> None:
    """Generate train/val/test suites and the template split manifest."""
    request = SuiteRequest(
        seed=seed,
        count=count,
        size=size,
        density=density,
        split_fraction=split_fraction,
        episodes=episodes,
        bands=bands,
        max_steps=max_steps,
        success_radius=success_radius,
    )
    manifest, suites = generate_suites(request)
    for suite in suites.values():
        validate_reachability(suite, success_radius)
    written = write_suites(out, manifest, suites, force=force)

    table = Table(title=f"Suites in {out}")
    table.add_column("suite")
    table.add_column("split")
    table.add_column("templates")
    table.add_column("episodes", justify="right")
    for stem, suite in suites.items():
        table.add_row(stem, suite.split.value, suite.template_split.value, str(len(suite.episodes)))
    console.print(table)
    logger.info(
        f"✅ Wrote {len(written)} file(s): {len(manifest.heard_ids)} heard / "
        f"{len(manifest.unheard_ids)} unheard templates"
    )


@cli.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Override output_dir")
@click.option("--ablation", type=click.Choice(ABLATIONS), default=None)
@click.option("--resume", is_flag=True, help="Continue from the latest checkpoint in the output directory")
@_handle_errors
def train_cmd(config_path: str, out: Optional[str], ablation: Optional[str], resume: bool) -> None:
    """Train a policy with recurrent PPO."""
    config = _load_run_config(config_path, out, ablation)
    result = train(config, resume=resume)
    console.print(
        f"Final checkpoint: {result.checkpoint}\nMetrics: {result.metrics}\n"
        f"Updates: {result.updates}  Env steps: {result.env_steps}"
    )


@cli.command("eval")
@click.option("--suite", "suite_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--agent", type=click.Choice(["dmtf", "oracle", "random"]), default="dmtf", show_default=True)
@click.option("--split", type=click.Choice([s.value for s in TemplateSplit]), default=None,
              help="Require the suite to carry this template split")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Run config whose env section overrides the checkpoint's")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the random agent")
@click.option("--dump-attention", is_flag=True)
@click.option("--dump-encoder-attention", is_flag=True)
@click.option("--dump-trajectories", is_flag=True)
@_handle_errors
def eval_cmd(
    suite_path: str,
    out: str,
    checkpoint: Optional[str],
    agent: str,
    split: Optional[str],
    config_path: Optional[str],
    manifest: Optional[str],
    workers: int,
    seed: int,
    dump_attention: bool,
    dump_encoder_attention: bool,
    dump_trajectories: bool,
) -> None:
    """Evaluate a checkpoint or scripted agent on a suite."""
    env_config: Optional[EnvConfig] = None
    if config_path is not None:
        env_config = RunConfig.from_file(config_path).env
    report = evaluate(
        suite_path,
        out,
        checkpoint=checkpoint,
        agent=agent,
        split=TemplateSplit(split) if split else None,
        env_config=env_config,
        manifest_path=manifest,
        workers=workers,
        seed=seed,
        dump_attention=dump_attention,
        dump_encoder_attention=dump_encoder_attention,
        dump_trajectories=dump_trajectories,
    )
    s = report.summary
    table = Table(title=f"{s.suite_id} ({s.split.value}, {s.num_episodes} episodes)")
    for column in ("agent", "ablation", "SR", "SPL", "SNA", "SNA*"):
        table.add_column(column, justify="right")
    table.add_row(s.agent, s.ablation, f"{s.sr:.3f}", f"{s.spl:.3f}", f"{s.sna:.4f}", f"{s.sna_normalized:.3f}")
    console.print(table)


def _ablation_table(summary: AblationSummary) -> Table:
    table = Table(title="Ablation study")
    table.add_column("variant")
    for column in METRIC_COLUMNS:
        table.add_column(column.replace("_", " ").upper(), justify="right")
    for row in summary.rows:
        values = [getattr(row, c) for c in METRIC_COLUMNS]
        table.add_row(row.variant, *("-" if v is None else f"{100 * v:.1f}" for v in values))
    return table


@cli.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seeds", "seeds", multiple=True, type=int, default=(0, 1, 2), show_default=True,
              help="Shared seeds (repeat the option)")
@_handle_errors
def ablate(config_path: str, out: str, seeds: Sequence[int]) -> None:
    """Train the full model and every ablation with shared seeds."""
    config = _load_run_config(config_path)
    summary = run_ablation(config, out, list(seeds))
    console.print(_ablation_table(summary))
    failed = [row.variant for row in summary.rows if row.error]
    if failed:
        logger.warning(f"⚠️ Runs failed for: {', '.join(failed)}")


@cli.command("replay")
@click.option("--suite", "suite_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trajectories", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Run config supplying the environment parameters")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--render", is_flag=True, help="Print an ASCII frame per step")
@_handle_errors
def replay_cmd(
    suite_path: str,
    trajectories: str,
    config_path: Optional[str],
    manifest: Optional[str],
    render: bool,
) -> None:
    """Re-execute a trajectory log and verify every recorded step."""
    env_config = RunConfig.from_file(config_path).env if config_path else None
    result = replay(suite_path, trajectories, env_config=env_config, manifest_path=manifest, render=render)
    for episode, frames in result.frames.items():
        console.rule(episode)
        for t, frame in enumerate(frames):
            console.print(f"t={t}\n{frame}\n", markup=False, highlight=False)
    for mismatch in result.mismatches:
        console.print(f"[red]✗[/red] {mismatch}")
    console.print(f"{result.episodes} episode(s), {result.steps} step(s) verified")
    if not result.ok:
        sys.exit(3)


@cli.command("validate")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@_handle_errors
def validate(paths: Sequence[str]) -> None:
    """Re-check artifacts against their schemas."""
    for path in paths:
        console.print(validate_artifact(Path(path)), markup=False)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
