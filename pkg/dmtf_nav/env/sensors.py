"""
Egocentric Sensors
==================

Visual rendering (occupancy window, raycast depth, validity mask) and a
parametric binaural spectrogram synthesizer driven by geodesic distance and
interaural level difference.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..core.errors import EpisodeSetupError
from ..core.schemas import TemplateManifest, TemplateSplit
from .gridmap import HEADING_VECTORS, AgentPose, Cell, GridMap


# ---------------------------------------------------------------------- #
# Frames
# ---------------------------------------------------------------------- #
def agent_frame(pose: AgentPose, target: Cell) -> Tuple[int, int]:
    """``target - agent`` as (lateral-right, forward) in the agent frame."""
    fx, fy = HEADING_VECTORS[pose.heading]
    rx, ry = HEADING_VECTORS[(pose.heading + 1) % 4]
    dx, dy = target[0] - pose.x, target[1] - pose.y
    return dx * rx + dy * ry, dx * fx + dy * fy


def relative_bearing(pose: AgentPose, target: Cell) -> float:
    """Bearing of ``target`` in radians, positive to the agent's left; 0 at the agent."""
    right, forward = agent_frame(pose, target)
    if right == 0 and forward == 0:
        return 0.0
    return math.atan2(-right, forward)


# ---------------------------------------------------------------------- #
# Vision
# ---------------------------------------------------------------------- #
def _window_cells(pose: AgentPose, view_size: int) -> np.ndarray:
    """Map cells for each window position, shape [view, view, 2] as (x, y)."""
    fx, fy = HEADING_VECTORS[pose.heading]
    rx, ry = HEADING_VECTORS[(pose.heading + 1) % 4]
    half = view_size // 2
    forward = (view_size - 1 - np.arange(view_size))[:, None]
    lateral = (np.arange(view_size) - half)[None, :]
    xs = pose.x + forward * fx + lateral * rx
    ys = pose.y + forward * fy + lateral * ry
    return np.stack([xs, ys], axis=-1)


def render_window(grid: GridMap, pose: AgentPose, view_size: int) -> np.ndarray:
    """
    Cell-resolution egocentric view, shape ``[view, view, 3]``.

    Rows run from farthest (top) to the agent's row (bottom); the agent sits in
    the centre column of the bottom row.
    """
    cells = _window_cells(pose, view_size)
    xs, ys = cells[..., 0], cells[..., 1]
    valid = (xs >= 0) & (xs < grid.width) & (ys >= 0) & (ys < grid.height)
    occupied = np.ones((view_size, view_size), dtype=bool)
    occupied[valid] = grid.occupancy[ys[valid], xs[valid]]

    depth = np.ones((view_size, view_size))
    scale = max(view_size - 1, 1)
    for col in range(view_size):
        # bottom row is forward distance 0
        hits = np.nonzero(occupied[::-1, col])[0]
        if hits.size:
            depth[:, col] = hits[0] / scale

    window = np.empty((view_size, view_size, 3))
    window[..., 0] = occupied
    window[..., 1] = depth
    window[..., 2] = valid
    return window


def render_visual(grid: GridMap, pose: AgentPose, view_size: int = 7, image_size: int = 64) -> np.ndarray:
    """Egocentric image ``[image_size, image_size, 3]`` in [0, 1], nearest-neighbour upsampled."""
    window = render_window(grid, pose, view_size)
    idx = (np.arange(image_size) * view_size) // image_size
    return window[idx][:, idx]


# ---------------------------------------------------------------------- #
# Audio
# ---------------------------------------------------------------------- #
@dataclass(frozen=True)
class SoundTemplate:
    id: int
    profile: np.ndarray
    label: TemplateSplit


def make_profile(seed: int, template_id: int, num_bands: int) -> np.ndarray:
    """Procedural spectral profile: a few Gaussian bumps over a small floor, max 1."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, template_id]))
    bands = np.arange(num_bands)
    profile = np.full(num_bands, 0.05)
    for _ in range(int(rng.integers(1, 4))):
        centre = rng.uniform(0, num_bands - 1)
        width = rng.uniform(1.0, max(num_bands / 6.0, 1.5))
        profile += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((bands - centre) / width) ** 2)
    return profile / profile.max()


def split_templates(seed: int, count: int, split_fraction: float) -> Tuple[List[int], List[int]]:
    """Partition template ids into (heard, unheard); ``round(count * fraction)`` are held out."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    order = rng.permutation(count)
    n_unheard = int(round(count * split_fraction))
    unheard = sorted(int(i) for i in order[:n_unheard])
    heard = sorted(int(i) for i in order[n_unheard:])
    return heard, unheard


class TemplateBank:
    """All sound templates of a manifest, regenerated from its seed."""

    def __init__(self, manifest: TemplateManifest):
        self.manifest = manifest
        unheard = set(manifest.unheard_ids)
        self._templates: Dict[int, SoundTemplate] = {
            tid: SoundTemplate(
                id=tid,
                profile=make_profile(manifest.seed, tid, manifest.num_bands),
                label=TemplateSplit.UNHEARD if tid in unheard else TemplateSplit.HEARD,
            )
            for tid in range(manifest.count)
        }

    @classmethod
    def create(cls, seed: int, count: int, num_bands: int, split_fraction: float) -> "TemplateBank":
        heard, unheard = split_templates(seed, count, split_fraction)
        return cls(
            TemplateManifest(
                seed=seed,
                count=count,
                num_bands=num_bands,
                split_fraction=split_fraction,
                heard_ids=heard,
                unheard_ids=unheard,
            )
        )

    def __getitem__(self, template_id: int) -> SoundTemplate:
        try:
            return self._templates[template_id]
        except KeyError as e:
            raise EpisodeSetupError(f"Unknown sound template id {template_id}") from e

    def __len__(self) -> int:
        return len(self._templates)

    def ids(self, label: Optional[TemplateSplit] = None) -> List[int]:
        return [t.id for t in self._templates.values() if label is None or t.label == label]

    def __iter__(self) -> Iterable[SoundTemplate]:
        return iter(self._templates.values())


def binaural_gains(theta: float) -> Tuple[float, float]:
    """Interaural level difference: (left, right) gains for bearing ``theta``."""
    s = math.sin(theta)
    return (1.0 + s) / 2.0, (1.0 - s) / 2.0


def synth_audio(
    geodesic: int,
    theta: float,
    template: SoundTemplate,
    frames: int,
    step_seed: Optional[np.random.SeedSequence] = None,
    noise_scale: float = 0.01,
) -> np.ndarray:
    """
    Binaural spectrogram ``[bands, frames, 2]`` (left, right) in [0, 1].

    Each channel is ``gain * 1/(1 + geodesic) * profile`` broadcast over time,
    plus uniform noise in ``±noise_scale`` drawn from ``step_seed``.
    """
    amplitude = 1.0 / (1.0 + geodesic)
    left, right = binaural_gains(theta)
    base = amplitude * np.repeat(template.profile[:, None], frames, axis=1)
    spec = np.stack([left * base, right * base], axis=-1)
    if noise_scale > 0 and step_seed is not None:
        rng = np.random.default_rng(step_seed)
        spec = spec + rng.uniform(-noise_scale, noise_scale, size=spec.shape)
    return np.clip(spec, 0.0, 1.0)


def synth_audio_for(
    grid: GridMap,
    pose: AgentPose,
    source: Cell,
    template: SoundTemplate,
    geodesic: int,
    frames: int,
    step_seed: Optional[np.random.SeedSequence],
    noise_scale: float,
) -> np.ndarray:
    """Pose-level wrapper: bearing from the pose, distance from the geodesic oracle."""
    if not grid.is_free(source):
        raise EpisodeSetupError(f"Source cell {source} is not free")
    return synth_audio(geodesic, relative_bearing(pose, source), template, frames, step_seed, noise_scale)
