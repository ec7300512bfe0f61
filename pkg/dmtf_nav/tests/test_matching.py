"""Tests for ground-truth sets, the assignment solver and the matching loss."""

import itertools

import numpy as np
import pytest

from dmtf_nav.core.errors import DimensionError, NumericError
from dmtf_nav.core.matching import (
    NULL_CLASS,
    GroundTruthItem,
    build_gt_set,
    gt_arrays,
    hungarian,
    match_batch,
    matching_loss,
    pair_cost,
)
from dmtf_nav.ndgrad import GradTape, Tensor, backward


PERMUTATIONS_6 = np.array(list(itertools.permutations(range(6))))


def brute_force(cost):
    n = cost.shape[0]
    best = min(itertools.permutations(range(n)), key=lambda p: (cost[np.arange(n), p].sum(), p))
    return np.array(best), cost[np.arange(n), best].sum()


def brute_force_6(cost):
    """Lexicographically first optimum over all 720 assignments."""
    totals = cost[np.arange(6), PERMUTATIONS_6].sum(axis=1)
    best = int(np.argmin(totals))
    return PERMUTATIONS_6[best], totals[best]


def random_slots(rng, n):
    logits = rng.normal(size=(n, 5))
    probs = np.exp(logits) / np.exp(logits).sum(axis=-1, keepdims=True)
    return probs, rng.random((n, 2))


class TestGroundTruth:
    def test_optimal_actions_then_null_padding(self):
        items = build_gt_set([2, 1, 2], geodesic=5, num_targets=4, d_max=10.0)
        assert [it.c for it in items] == [1, 2, NULL_CLASS, NULL_CLASS]
        assert items[0].a == (0.5, 0.5)

    def test_far_targets_are_all_audio(self):
        (item,) = build_gt_set([0], geodesic=25, num_targets=1, d_max=10.0)
        assert item.a == (1.0, 0.0)

    def test_truncates_to_slot_count(self):
        items = build_gt_set([0, 1, 2], geodesic=3, num_targets=2, d_max=10.0)
        assert [it.c for it in items] == [0, 1]

    def test_needs_a_slot(self):
        with pytest.raises(DimensionError):
            build_gt_set([0], geodesic=1, num_targets=0, d_max=10.0)

    def test_null_items_cost_nothing(self, rng):
        probs, modality = random_slots(rng, 1)
        assert pair_cost(GroundTruthItem(c=NULL_CLASS), probs[0], modality[0]) == 0.0
        cost = pair_cost(GroundTruthItem(c=2, a=(1.0, 0.0)), probs[0], modality[0])
        expected = -probs[0, 2] + np.mean(np.abs(np.array([1.0, 0.0]) - modality[0]))
        assert cost == pytest.approx(expected)

    def test_unnormalized_probabilities_rejected(self):
        with pytest.raises(NumericError):
            pair_cost(GroundTruthItem(c=0), np.array([0.5, 0.6, 0.0, 0.0, 0.0]), np.zeros(2))


class TestHungarian:
    @pytest.mark.slow
    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(0)
        for trial in range(1000):
            cost = rng.normal(size=(6, 6))
            result = hungarian(cost)
            perm, total = brute_force_6(cost)
            np.testing.assert_array_equal(result.permutation, perm, err_msg=f"trial {trial}")
            assert result.total_cost == pytest.approx(total, abs=1e-9)

    def test_integer_costs_with_many_optima(self):
        cost = np.random.default_rng(3).integers(0, 3, size=(6, 6)).astype(float)
        perm, total = brute_force(cost)
        result = hungarian(cost)
        assert result.total_cost == pytest.approx(total)
        np.testing.assert_array_equal(result.permutation, perm)

    def test_ties_break_lexicographically(self):
        np.testing.assert_array_equal(hungarian(np.zeros((3, 3))).permutation, [0, 1, 2])
        derangement = 5.0 * np.eye(3)
        np.testing.assert_array_equal(hungarian(derangement).permutation, [1, 2, 0])

    def test_rejects_bad_matrices(self):
        with pytest.raises(DimensionError):
            hungarian(np.zeros((2, 3)))
        with pytest.raises(DimensionError):
            hungarian(np.zeros((0, 0)))
        with pytest.raises(NumericError):
            hungarian(np.array([[0.0, np.nan], [1.0, 0.0]]))


class TestMatchingLoss:
    def test_all_null_set_gives_zero(self, rng):
        probs, modality = random_slots(rng, 3)
        gt = build_gt_set([], geodesic=4, num_targets=3, d_max=10.0)
        result = matching_loss(gt, Tensor(probs), Tensor(modality))
        assert result.loss.item() == 0.0
        assert result.null_fraction == 1.0

    def test_invariant_to_slot_and_target_order(self, rng):
        probs, modality = random_slots(rng, 4)
        gt = build_gt_set([0, 3], geodesic=6, num_targets=4, d_max=10.0)
        base = matching_loss(gt, Tensor(probs), Tensor(modality)).loss.item()
        for perm in ([3, 1, 0, 2], [2, 3, 1, 0]):
            shuffled = matching_loss(gt, Tensor(probs[perm]), Tensor(modality[perm])).loss.item()
            assert shuffled == base
            reordered = matching_loss([gt[i] for i in perm], Tensor(probs), Tensor(modality)).loss.item()
            assert reordered == base

    @pytest.mark.slow
    def test_invariant_to_random_permutations(self):
        rng = np.random.default_rng(11)
        for trial in range(1000):
            probs, modality = random_slots(rng, 4)
            actions = [int(a) for a in rng.permutation(4)[: int(rng.integers(0, 5))]]
            gt = build_gt_set(actions, geodesic=int(rng.integers(1, 15)), num_targets=4, d_max=10.0)
            base = matching_loss(gt, Tensor(probs), Tensor(modality)).loss.item()
            slots = rng.permutation(4)
            targets = rng.permutation(4)
            shuffled = matching_loss(
                [gt[i] for i in targets], Tensor(probs[slots]), Tensor(modality[slots])
            ).loss.item()
            assert shuffled == base, f"trial {trial}"

    def test_loss_equals_optimal_assignment_cost(self, rng):
        probs, modality = random_slots(rng, 3)
        gt = build_gt_set([1, 2], geodesic=2, num_targets=3, d_max=10.0)
        result = matching_loss(gt, Tensor(probs), Tensor(modality))
        assert result.loss.item() == pytest.approx(result.mean_cost, abs=1e-12)

    def test_gradient_reaches_matched_slots_only(self, rng):
        probs, modality = random_slots(rng, 3)
        classes, targets = gt_arrays(build_gt_set([1], geodesic=2, num_targets=3, d_max=10.0))
        p = Tensor(probs[None], requires_grad=True)
        m = Tensor(modality[None], requires_grad=True)
        with GradTape():
            result = match_batch(classes[None], targets[None], p, m)
        backward(result.loss)
        slot = result.permutations[0, 0]
        assert p.grad[0, slot, 1] == -1.0
        assert np.count_nonzero(p.grad) == 1
        assert np.count_nonzero(m.grad[0, slot]) == 2

    def test_shape_mismatch_rejected(self, rng):
        probs, modality = random_slots(rng, 3)
        gt = build_gt_set([0], geodesic=2, num_targets=2, d_max=10.0)
        with pytest.raises(DimensionError):
            matching_loss(gt, Tensor(probs), Tensor(modality))
