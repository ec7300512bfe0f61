"""
Episode Suites
==============

Seeded generation of train / validation / test suites with heard and unheard
sound-template splits, plus loading and split-consistency checks.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DataError, EpisodeSetupError, ProtocolError
from ..core.schemas import EpisodeSpec, SuiteFile, SuiteSplit, TemplateManifest, TemplateSplit
from ..utils.io import read_json, write_json
from .gridmap import AgentPose, distance_field, generate_map, oracle_first_actions
from .sensors import TemplateBank

logger = logging.getLogger(__name__)

MANIFEST_NAME = "templates.json"

# (file stem, suite split, template split, seed stream id)
SUITE_LAYOUT = (
    ("train", SuiteSplit.TRAIN, TemplateSplit.HEARD, 1),
    ("val-heard", SuiteSplit.VAL, TemplateSplit.HEARD, 2),
    ("val-unheard", SuiteSplit.VAL, TemplateSplit.UNHEARD, 3),
    ("test-heard", SuiteSplit.TEST, TemplateSplit.HEARD, 4),
    ("test-unheard", SuiteSplit.TEST, TemplateSplit.UNHEARD, 5),
)


@dataclass
class SuiteRequest:
    seed: int
    count: int
    size: int
    density: float
    split_fraction: float
    episodes: int = 50
    bands: int = 64
    max_steps: int = 500
    success_radius: int = 1


def _sample_episode(
    episode_id: str,
    rng: np.random.Generator,
    request: SuiteRequest,
    template_ids: Sequence[int],
) -> EpisodeSpec:
    map_seed = int(rng.integers(0, 2**31 - 1))
    grid = generate_map(map_seed, request.size, request.size, request.density)
    free = grid.free_cells()
    for _ in range(256):
        source = free[int(rng.integers(len(free)))]
        field = distance_field(grid, source)
        candidates = [c for c in free if field[c[1], c[0]] > request.success_radius]
        if candidates:
            break
    else:
        raise EpisodeSetupError(
            f"{episode_id}: no start cell outside the success region on map seed {map_seed}"
        )
    start = candidates[int(rng.integers(len(candidates)))]
    return EpisodeSpec(
        episode_id=episode_id,
        map_seed=map_seed,
        width=request.size,
        height=request.size,
        density=request.density,
        start=[start[0], start[1], int(rng.integers(4))],
        source=[source[0], source[1]],
        template_id=int(template_ids[int(rng.integers(len(template_ids)))]),
        max_steps=request.max_steps,
        audio_seed=int(rng.integers(0, 2**31 - 1)),
    )


def generate_suites(request: SuiteRequest) -> Tuple[TemplateManifest, Dict[str, SuiteFile]]:
    """
    Build every suite of the layout that has templates to draw from.

    Returns:
        ``(manifest, {stem: SuiteFile})``; suites whose template split is empty
        are omitted with a warning.
    """
    bank = TemplateBank.create(request.seed, request.count, request.bands, request.split_fraction)
    manifest = bank.manifest
    pools = {
        TemplateSplit.HEARD: manifest.heard_ids,
        TemplateSplit.UNHEARD: manifest.unheard_ids,
    }
    suites: Dict[str, SuiteFile] = {}
    for stem, split, template_split, stream in SUITE_LAYOUT:
        pool = pools[template_split]
        if not pool:
            logger.warning(f"⚠️ Skipping suite '{stem}': no {template_split.value} templates")
            continue
        rng = np.random.default_rng(np.random.SeedSequence([request.seed, stream]))
        episodes = [
            _sample_episode(f"{stem}-{i:05d}", rng, request, pool)
            for i in range(request.episodes)
        ]
        suites[stem] = SuiteFile(
            suite_id=stem,
            split=split,
            template_split=template_split,
            manifest=MANIFEST_NAME,
            episodes=episodes,
        )
    return manifest, suites


def write_suites(
    out_dir: Union[str, Path],
    manifest: TemplateManifest,
    suites: Dict[str, SuiteFile],
    force: bool = False,
) -> List[Path]:
    """Write the manifest and suite files; refuses to overwrite without ``force``."""
    out_dir = Path(out_dir)
    targets = [out_dir / MANIFEST_NAME] + [out_dir / f"{stem}.json" for stem in suites]
    existing = [p for p in targets if p.exists()]
    if existing and not force:
        raise DataError(
            f"Refusing to overwrite {len(existing)} existing file(s) such as {existing[0]}; use --force"
        )
    written = [write_json(out_dir / MANIFEST_NAME, manifest)]
    for stem, suite in suites.items():
        written.append(write_json(out_dir / f"{stem}.json", suite))
    return written


def load_suite(path: Union[str, Path]) -> SuiteFile:
    return read_json(path, SuiteFile)


def manifest_for(suite_path: Union[str, Path], suite: SuiteFile) -> Optional[TemplateManifest]:
    """Load the template manifest a suite points at, if any."""
    if suite.manifest is None:
        return None
    path = Path(suite_path).parent / suite.manifest
    return read_json(path, TemplateManifest)


def check_split(suite: SuiteFile, manifest: TemplateManifest) -> None:
    """
    Ensure a suite only uses templates of its declared split.

    Raises:
        ProtocolError: if an unheard suite uses a training (heard) template,
            or a heard suite uses a held-out template.
    """
    allowed = set(manifest.heard_ids if suite.template_split == TemplateSplit.HEARD else manifest.unheard_ids)
    bad = sorted({ep.template_id for ep in suite.episodes} - allowed)
    if bad:
        raise ProtocolError(
            f"Suite '{suite.suite_id}' is tagged {suite.template_split.value} but uses templates {bad[:10]}"
        )


def validate_reachability(suite: SuiteFile, success_radius: int = 1) -> int:
    """Re-check every episode against the oracle; returns the number checked."""
    for ep in suite.episodes:
        grid = generate_map(ep.map_seed, ep.width, ep.height, ep.density)
        pose = AgentPose(*ep.start)
        oracle_first_actions(grid, pose, (ep.source[0], ep.source[1]), success_radius)
    return len(suite.episodes)
