"""
Set Matching
============

Bipartite matching between predicted target slots and the oracle's
ground-truth navigation items, and the auxiliary matching loss built on it.

Ground-truth rows are indexed ``i``, prediction slots ``j``; a match maps
every ground-truth item to exactly one slot.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ..ndgrad import ops
from ..ndgrad.tensor import Tensor
from .errors import DimensionError, NumericError

logger = logging.getLogger(__name__)

NULL_CLASS = 4
_PROB_TOL = 1e-6


@dataclass(frozen=True)
class GroundTruthItem:
    """
    One navigation target ``(c, a)``.

    ``c`` is an action index or ``NULL_CLASS``; ``a`` is ``(w_aud, w_vis)``
    and is ignored for null items.
    """

    c: int
    a: Tuple[float, float] = (0.0, 0.0)

    @property
    def is_null(self) -> bool:
        return self.c == NULL_CLASS


@dataclass
class MatchResult:
    permutation: np.ndarray
    total_cost: float


@dataclass
class MatchingLoss:
    """Differentiable loss plus the diagnostics logged per update."""

    loss: Tensor
    mean_cost: float
    null_fraction: float
    permutations: np.ndarray


def build_gt_set(
    actions: Iterable[int],
    geodesic: int,
    num_targets: int,
    d_max: float,
) -> List[GroundTruthItem]:
    """
    Ground-truth set for one step: one item per optimal action, null-padded.

    Far targets lean on audio and near ones on vision:
    ``w_aud = min(1, geodesic / d_max)``, ``w_vis = 1 - w_aud``.
    """
    if num_targets < 1:
        raise DimensionError(f"num_targets must be ≥ 1, got {num_targets}")
    w_aud = min(1.0, max(float(geodesic), 0.0) / d_max)
    target = (w_aud, 1.0 - w_aud)
    classes = sorted({int(a) for a in actions})
    if len(classes) > num_targets:
        logger.warning(
            f"⚠️ {len(classes)} optimal actions exceed {num_targets} target slots; truncating"
        )
        classes = classes[:num_targets]
    items = [GroundTruthItem(c=c, a=target) for c in classes]
    items += [GroundTruthItem(c=NULL_CLASS)] * (num_targets - len(items))
    return items


def gt_arrays(items: Sequence[GroundTruthItem]) -> Tuple[np.ndarray, np.ndarray]:
    """``(classes [N], targets [N, 2])`` for storage in rollout buffers."""
    classes = np.array([it.c for it in items], dtype=np.int64)
    targets = np.array([it.a for it in items], dtype=np.float64)
    return classes, targets


def _check_probs(probs: np.ndarray) -> None:
    if np.any(probs < -_PROB_TOL) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > _PROB_TOL):
        raise NumericError("class probabilities are not normalized")


def pair_cost(item: GroundTruthItem, probs: np.ndarray, modality: np.ndarray) -> float:
    """``-p̂(c) + mean|a - â|`` for a real item, 0 for a null item."""
    probs = np.asarray(probs, dtype=np.float64)
    _check_probs(probs)
    if item.is_null:
        return 0.0
    l1 = float(np.mean(np.abs(np.asarray(item.a) - np.asarray(modality, dtype=np.float64))))
    return -float(probs[item.c]) + l1


def cost_matrix(classes: np.ndarray, targets: np.ndarray, probs: np.ndarray, modality: np.ndarray) -> np.ndarray:
    """All pair costs ``[N_gt, N_slots]`` for one step."""
    _check_probs(probs)
    real = classes != NULL_CLASS
    picked = probs[:, np.where(real, classes, 0)].T
    l1 = np.abs(targets[:, None, :] - modality[None, :, :]).mean(axis=-1)
    return np.where(real[:, None], l1 - picked, 0.0)


# ---------------------------------------------------------------------- #
# Assignment
# ---------------------------------------------------------------------- #
def _solve_duals(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Kuhn–Munkres; returns (assignment, u, v)."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[p[j] - 1] = j - 1
    return assignment, u[1:], v[1:]


def _has_perfect_matching(tight: np.ndarray, rows: Sequence[int], free_cols: Sequence[int]) -> bool:
    match = {}

    def augment(r: int, seen: set) -> bool:
        for c in free_cols:
            if tight[r, c] and c not in seen:
                seen.add(c)
                if c not in match or augment(match[c], seen):
                    match[c] = r
                    return True
        return False

    return all(augment(r, set()) for r in rows)


def _lexicographic_tight(cost: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    tol = 1e-9 * max(1.0, float(np.abs(cost).max()))
    tight = np.abs(cost - u[:, None] - v[None, :]) <= tol
    chosen = np.empty(n, dtype=np.int64)
    free = list(range(n))
    for row in range(n):
        for col in free:
            if not tight[row, col]:
                continue
            rest = [c for c in free if c != col]
            if _has_perfect_matching(tight, range(row + 1, n), rest):
                chosen[row] = col
                free = rest
                break
        else:
            return np.empty(0, dtype=np.int64)
    return chosen


def hungarian(cost: np.ndarray) -> MatchResult:
    """
    Minimum-cost perfect assignment on a square matrix.

    Among optimal assignments, the lexicographically smallest permutation is
    returned.

    Raises:
        DimensionError: if the matrix is empty or not square.
        NumericError: if any entry is NaN or infinite.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise DimensionError(f"hungarian needs a non-empty square matrix, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise NumericError("hungarian cost matrix has non-finite entries")
    n = cost.shape[0]
    assignment, u, v = _solve_duals(cost)
    best = float(cost[np.arange(n), assignment].sum())
    lex = _lexicographic_tight(cost, u, v)
    if lex.size == n:
        lex_cost = float(cost[np.arange(n), lex].sum())
        if lex_cost <= best + 1e-9 * max(1.0, abs(best)):
            assignment, best = lex, lex_cost
    return MatchResult(permutation=assignment, total_cost=best)


# ---------------------------------------------------------------------- #
# Loss
# ---------------------------------------------------------------------- #
def match_batch(
    gt_classes: np.ndarray,
    gt_targets: np.ndarray,
    class_probs: Tensor,
    modality: Tensor,
) -> MatchingLoss:
    """
    Matching loss averaged over a batch of steps.

    Args:
        gt_classes: ``[B, N]`` ground-truth classes (``NULL_CLASS`` for padding).
        gt_targets: ``[B, N, 2]`` modality targets.
        class_probs: ``[B, N, 5]`` slot class probabilities.
        modality: ``[B, N, 2]`` slot modality predictions.

    The assignment is computed on detached costs and the matched terms are
    re-evaluated on the tape. Terms are summed in ascending value order, so the
    result does not depend on slot or ground-truth order.
    """
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    gt_targets = np.asarray(gt_targets)
    if class_probs.ndim != 3 or modality.ndim != 3:
        raise DimensionError(
            f"expected [B, N, C] slot outputs, got {class_probs.shape} and {modality.shape}"
        )
    b, n, _ = class_probs.shape
    if gt_classes.shape != (b, n) or gt_targets.shape[:2] != (b, n):
        raise DimensionError(
            f"ground truth {gt_classes.shape} does not match {n} slots for batch {b}"
        )

    probs_np = class_probs.data.astype(np.float64)
    mod_np = modality.data.astype(np.float64)
    perms = np.empty((b, n), dtype=np.int64)
    total = 0.0
    for k in range(b):
        result = hungarian(cost_matrix(gt_classes[k], gt_targets[k], probs_np[k], mod_np[k]))
        perms[k] = result.permutation
        total += result.total_cost

    real = gt_classes != NULL_CLASS
    null_fraction = float(1.0 - real.mean())
    batch_idx, row_idx = np.nonzero(real)
    if batch_idx.size == 0:
        zero = ops.sum(class_probs) * 0.0
        return MatchingLoss(loss=zero, mean_cost=total / b, null_fraction=null_fraction, permutations=perms)

    slot_idx = perms[batch_idx, row_idx]
    cls_idx = gt_classes[batch_idx, row_idx]
    picked = class_probs[batch_idx, slot_idx, cls_idx]
    predicted = modality[batch_idx, slot_idx]
    targets = gt_targets[batch_idx, row_idx].astype(modality.dtype)
    l1 = ops.mean(ops.abs(predicted - Tensor(targets)), axis=-1)
    terms = l1 - picked
    order = np.lexsort((terms.data, batch_idx))
    loss = ops.sum(terms[order]) * (1.0 / b)
    return MatchingLoss(loss=loss, mean_cost=total / b, null_fraction=null_fraction, permutations=perms)


def matching_loss(
    gt_set: Sequence[GroundTruthItem],
    class_probs: Tensor,
    modality: Tensor,
) -> MatchingLoss:
    """Single-step loss over ``[N, 5]`` probabilities and ``[N, 2]`` modality outputs."""
    if class_probs.ndim != 2 or len(gt_set) != class_probs.shape[0]:
        raise DimensionError(
            f"{len(gt_set)} ground-truth items for slot outputs of shape {class_probs.shape}"
        )
    classes, targets = gt_arrays(gt_set)
    return match_batch(
        classes[None],
        targets[None],
        ops.reshape(class_probs, (1,) + class_probs.shape),
        ops.reshape(modality, (1,) + modality.shape),
    )
