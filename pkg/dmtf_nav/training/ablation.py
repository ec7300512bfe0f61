"""
Ablation Sweeps
===============

Trains the full model and each single-component ablation with shared seeds,
evaluates every run on the same heard/unheard suites and assembles the
comparison table.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..core.config import RunConfig
from ..core.errors import ConfigError, DMTFError
from ..core.schemas import AblationRow, AblationSummary, ReportSummary
from ..evaluation.evaluator import evaluate
from ..utils.io import write_json
from .trainer import train

logger = logging.getLogger(__name__)

# Row order of the comparison table
VARIANTS: Tuple[Tuple[str, str], ...] = (
    ("DMTF", "none"),
    ("w/o MTI", "no-mti"),
    ("w/o PE", "no-pe"),
    ("w/o ENSA", "no-ensa"),
)
METRIC_COLUMNS = ("sna_heard", "sr_heard", "spl_heard", "sna_unheard", "sr_unheard", "spl_unheard")


def eval_suites(config: RunConfig) -> Tuple[str, Optional[str]]:
    """The heard and unheard suites every variant is scored on."""
    heard = config.suites.test or config.suites.val
    unheard = config.suites.test_unheard or config.suites.val_unheard
    if heard is None:
        raise ConfigError("suites.test or suites.val must be set for an ablation sweep")
    return heard, unheard


def _mean(values: List[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def run_variant(
    config: RunConfig,
    ablation: str,
    seed: int,
    out_dir: Path,
    heard: str,
    unheard: Optional[str],
) -> Dict[str, ReportSummary]:
    """Train one (variant, seed) run and score it on the shared suites."""
    run_dir = out_dir / ablation / f"seed_{seed}"
    run_cfg = config.with_ablation(ablation).model_copy(update={"seed": seed, "output_dir": str(run_dir)})
    result = train(run_cfg)
    reports = {
        "heard": evaluate(heard, run_dir / "eval_heard", checkpoint=result.checkpoint, workers=config.ppo.workers).summary
    }
    if unheard is not None:
        reports["unheard"] = evaluate(
            unheard, run_dir / "eval_unheard", checkpoint=result.checkpoint, workers=config.ppo.workers
        ).summary
    return reports


def run_ablation(
    config: RunConfig,
    out_dir: Union[str, Path],
    seeds: Sequence[int],
) -> AblationSummary:
    """
    Run every variant on every seed and write ``ablation.json``.

    A failed run is logged and recorded on its row; the other runs continue
    and the table is emitted with whatever finished.
    """
    out_dir = Path(out_dir)
    heard, unheard = eval_suites(config)
    rows: List[AblationRow] = []
    for label, ablation in VARIANTS:
        collected: Dict[str, List[float]] = {c: [] for c in METRIC_COLUMNS}
        finished: List[int] = []
        errors: List[str] = []
        for seed in seeds:
            try:
                reports = run_variant(config, ablation, seed, out_dir, heard, unheard)
            except DMTFError as e:
                logger.error(f"❌ {label} seed {seed} failed: {e}")
                errors.append(f"seed {seed}: {e}")
                continue
            finished.append(seed)
            for split, summary in reports.items():
                collected[f"sna_{split}"].append(summary.sna)
                collected[f"sr_{split}"].append(summary.sr)
                collected[f"spl_{split}"].append(summary.spl)
        rows.append(
            AblationRow(
                variant=label,
                seeds=finished,
                error="; ".join(errors) or None,
                **{c: _mean(v) for c, v in collected.items()},
            )
        )

    summary = AblationSummary(rows=rows, heard_suite=heard, unheard_suite=unheard, seeds=list(seeds))
    write_json(out_dir / "ablation.json", summary)
    logger.info(f"🧪 Ablation sweep finished: {len(VARIANTS)} variants × {len(seeds)} seed(s)")
    return summary
