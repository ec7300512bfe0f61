"""
Grid Maps and Geodesic Oracle
=============================

Occupancy grids, breadth-first geodesic distances and the optimal-action
oracle. Coordinates are ``(x, y)`` with ``x`` growing east and ``y`` growing
south; occupancy arrays are indexed ``[y, x]``.
"""

import logging
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from ..core.errors import EpisodeSetupError, MapGenerationError

logger = logging.getLogger(__name__)

MAX_GENERATION_ATTEMPTS = 200
UNREACHABLE = -1

Cell = Tuple[int, int]


class Action(IntEnum):
    MOVE_FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    STOP = 3


class Heading(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3


# (dx, dy) per heading
HEADING_VECTORS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass(frozen=True)
class AgentPose:
    x: int
    y: int
    heading: int

    @property
    def cell(self) -> Cell:
        return (self.x, self.y)

    def forward_cell(self) -> Cell:
        dx, dy = HEADING_VECTORS[self.heading]
        return (self.x + dx, self.y + dy)

    def turned(self, action: Action) -> "AgentPose":
        delta = -1 if action == Action.TURN_LEFT else 1
        return AgentPose(self.x, self.y, (self.heading + delta) % 4)

    def as_list(self) -> List[int]:
        return [self.x, self.y, self.heading]


@dataclass(frozen=True, eq=False)
class GridMap:
    """Occupancy grid; ``True`` marks an obstacle."""

    width: int
    height: int
    occupancy: np.ndarray
    seed: int

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not bool(self.occupancy[cell[1], cell[0]])

    def free_cells(self) -> List[Cell]:
        ys, xs = np.nonzero(~self.occupancy)
        return [(int(x), int(y)) for y, x in zip(ys, xs)]

    def neighbors(self, cell: Cell) -> List[Cell]:
        x, y = cell
        out = []
        for dx, dy in HEADING_VECTORS:
            nxt = (x + dx, y + dy)
            if self.is_free(nxt):
                out.append(nxt)
        return out

    def render_ascii(self, pose: Optional[AgentPose] = None, source: Optional[Cell] = None) -> str:
        arrows = "^>v<"
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                if pose is not None and (x, y) == pose.cell:
                    row.append(arrows[pose.heading])
                elif source is not None and (x, y) == source:
                    row.append("*")
                else:
                    row.append("#" if self.occupancy[y, x] else ".")
            rows.append("".join(row))
        return "\n".join(rows)


def _connected(occupancy: np.ndarray) -> bool:
    free = np.argwhere(~occupancy)
    if len(free) < 2:
        return False
    seen = np.zeros_like(occupancy, dtype=bool)
    y0, x0 = free[0]
    seen[y0, x0] = True
    queue = deque([(int(x0), int(y0))])
    h, w = occupancy.shape
    while queue:
        x, y = queue.popleft()
        for dx, dy in HEADING_VECTORS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and not occupancy[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((nx, ny))
    return int(seen.sum()) == len(free)


def generate_map(seed: int, width: int, height: int, obstacle_density: float) -> GridMap:
    """
    Generate a bordered map whose free cells form one connected component.

    Args:
        seed: Map seed; the same seed always yields the same map.
        width: Width in cells (≥ 4).
        height: Height in cells (≥ 4).
        obstacle_density: Probability that an interior cell is occupied, in [0, 0.4].

    Raises:
        MapGenerationError: on invalid arguments or when no connected map is
            found within the retry budget.
    """
    if width < 4 or height < 4:
        raise MapGenerationError(f"Map must be at least 4×4, got {width}×{height}")
    if not 0.0 <= obstacle_density <= 0.4:
        raise MapGenerationError(f"Obstacle density must lie in [0, 0.4], got {obstacle_density}")

    for attempt in range(MAX_GENERATION_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        occupancy = np.zeros((height, width), dtype=bool)
        occupancy[0, :] = occupancy[-1, :] = True
        occupancy[:, 0] = occupancy[:, -1] = True
        interior = rng.random((height - 2, width - 2)) < obstacle_density
        occupancy[1:-1, 1:-1] = interior
        if _connected(occupancy):
            if attempt:
                logger.debug(f"Map seed {seed} connected after {attempt + 1} attempts")
            occupancy.setflags(write=False)
            return GridMap(width=width, height=height, occupancy=occupancy, seed=seed)

    raise MapGenerationError(
        f"No connected {width}×{height} map at density {obstacle_density} "
        f"after {MAX_GENERATION_ATTEMPTS} attempts (seed {seed})"
    )


def distance_field(grid: GridMap, goal: Cell) -> np.ndarray:
    """BFS distances from ``goal`` to every cell; unreachable and occupied cells are -1."""
    if not grid.is_free(goal):
        raise EpisodeSetupError(f"Goal cell {goal} is not free")
    dist = np.full((grid.height, grid.width), UNREACHABLE, dtype=np.int64)
    dist[goal[1], goal[0]] = 0
    queue = deque([goal])
    while queue:
        cell = queue.popleft()
        d = dist[cell[1], cell[0]]
        for nxt in grid.neighbors(cell):
            if dist[nxt[1], nxt[0]] == UNREACHABLE:
                dist[nxt[1], nxt[0]] = d + 1
                queue.append(nxt)
    dist.setflags(write=False)
    return dist


def geodesic_distance(grid: GridMap, a: Cell, b: Cell) -> Optional[int]:
    """
    Shortest 4-neighbour path length between free cells ``a`` and ``b``.

    Returns:
        The distance in cells, or ``None`` when ``b`` is unreachable from ``a``.

    Raises:
        EpisodeSetupError: if either endpoint is occupied or out of bounds.
    """
    if not grid.is_free(a):
        raise EpisodeSetupError(f"Cell {a} is not free")
    if not grid.is_free(b):
        raise EpisodeSetupError(f"Cell {b} is not free")
    d = int(distance_field(grid, b)[a[1], a[0]])
    return None if d == UNREACHABLE else d


def _cell_distance(field: np.ndarray, cell: Cell) -> int:
    return int(field[cell[1], cell[0]])


def oracle_first_actions(
    grid: GridMap,
    pose: AgentPose,
    goal: Cell,
    success_radius: int = 1,
    field: Optional[np.ndarray] = None,
) -> Tuple[FrozenSet[Action], int]:
    """
    Action classes that start a shortest path toward ``goal``.

    Inside the success region the answer is exactly ``{STOP}``. Elsewhere an
    action qualifies when it moves onto a neighbour one step closer to the goal
    (``MOVE_FORWARD``) or begins the shortest rotation toward such a neighbour;
    a neighbour directly behind makes both turns qualify.

    Returns:
        ``(actions, l)`` where ``l`` is the number of forward moves still needed
        to enter the success region.

    Raises:
        EpisodeSetupError: if the goal is unreachable from the pose.
    """
    field = distance_field(grid, goal) if field is None else field
    g = _cell_distance(field, pose.cell)
    if g == UNREACHABLE:
        raise EpisodeSetupError(f"Goal {goal} unreachable from {pose.cell}")
    if g <= success_radius:
        return frozenset({Action.STOP}), 0

    actions = set()
    for heading, (dx, dy) in enumerate(HEADING_VECTORS):
        nxt = (pose.x + dx, pose.y + dy)
        if not grid.is_free(nxt) or _cell_distance(field, nxt) != g - 1:
            continue
        right_turns = (heading - pose.heading) % 4
        if right_turns == 0:
            actions.add(Action.MOVE_FORWARD)
        elif right_turns == 1:
            actions.add(Action.TURN_RIGHT)
        elif right_turns == 3:
            actions.add(Action.TURN_LEFT)
        else:
            actions.update((Action.TURN_LEFT, Action.TURN_RIGHT))
    return frozenset(actions), g - success_radius


def minimal_action_count(
    grid: GridMap,
    pose: AgentPose,
    goal: Cell,
    success_radius: int = 1,
    field: Optional[np.ndarray] = None,
) -> int:
    """
    Fewest actions (turns and moves, plus the final STOP) that end an episode
    successfully from ``pose``, by breadth-first search over poses.
    """
    field = distance_field(grid, goal) if field is None else field
    if _cell_distance(field, pose.cell) == UNREACHABLE:
        raise EpisodeSetupError(f"Goal {goal} unreachable from {pose.cell}")

    def in_region(p: AgentPose) -> bool:
        return _cell_distance(field, p.cell) <= success_radius

    seen = {pose: 0}
    queue = deque([pose])
    while queue:
        current = queue.popleft()
        cost = seen[current]
        if in_region(current):
            return cost + 1
        successors = [current.turned(Action.TURN_LEFT), current.turned(Action.TURN_RIGHT)]
        fwd = current.forward_cell()
        if grid.is_free(fwd):
            successors.append(AgentPose(fwd[0], fwd[1], current.heading))
        for nxt in successors:
            if nxt not in seen:
                seen[nxt] = cost + 1
                queue.append(nxt)
    raise EpisodeSetupError(f"Goal {goal} unreachable from {pose.cell}")
