"""Tests for SR, SPL, SNA and the normalized SNA."""

import numpy as np
import pytest

from dmtf_nav.core.errors import DataError
from dmtf_nav.core.schemas import TemplateSplit
from dmtf_nav.env.simulator import EpisodeRecord
from dmtf_nav.evaluation.metrics import sna, sna_normalized, spl, success_rate, summarize


def record(success, shortest, path_length, actions, oracle_actions, name="ep"):
    return EpisodeRecord(
        episode_id=name,
        success=success,
        shortest=shortest,
        path_length=path_length,
        actions=actions,
        oracle_actions=oracle_actions,
    )


RECORDS = [
    record(1, 4, 4, 6, 6, "a"),
    record(1, 2, 4, 10, 5, "b"),
    record(0, 3, 9, 12, 5, "c"),
]


def test_detour_halves_spl():
    assert spl([record(1, 2, 4, 5, 3)]) == 0.5


def test_reference_values():
    assert success_rate(RECORDS) == pytest.approx(2 / 3)
    assert spl(RECORDS) == pytest.approx(0.5)
    assert sna(RECORDS) == pytest.approx((1 / 6 + 1 / 10) / 3)
    assert sna_normalized(RECORDS) == pytest.approx(0.5)


def test_order_does_not_change_results():
    shuffled = [RECORDS[2], RECORDS[0], RECORDS[1]]
    for metric in (success_rate, spl, sna, sna_normalized):
        assert metric(shuffled) == metric(RECORDS)


def test_weighted_metrics_never_exceed_success_rate(rng):
    records = []
    for i in range(200):
        shortest = int(rng.integers(1, 20))
        oracle = shortest + int(rng.integers(1, 4))
        records.append(
            record(
                int(rng.integers(0, 2)),
                shortest,
                shortest + int(rng.integers(0, 10)),
                oracle + int(rng.integers(0, 10)),
                oracle,
                f"ep-{i}",
            )
        )
    sr = success_rate(records)
    assert spl(records) <= sr
    assert sna(records) <= sr
    assert sna_normalized(records) <= sr


def test_failures_contribute_zero():
    failed = [record(0, 5, 0, 1, 6)]
    assert (success_rate(failed), spl(failed), sna(failed), sna_normalized(failed)) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize(
    "records",
    [
        [],
        [record(2, 1, 1, 1, 1)],
        [record(1, 0, 0, 1, 1)],
    ],
    ids=["empty", "bad-flag", "zero-shortest"],
)
def test_malformed_records_rejected(records):
    with pytest.raises(DataError):
        spl(records)


def test_summary_carries_all_metrics():
    summary = summarize(RECORDS, "test-heard", TemplateSplit.HEARD, ablation="no-pe", agent="oracle")
    assert summary.num_episodes == 3
    assert summary.ablation == "no-pe"
    assert np.isclose(summary.sna_normalized, 0.5)
