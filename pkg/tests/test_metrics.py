from __future__ import annotations

import numpy as np
import pytest

from cooc.core.correlation import correlation_matrix
from cooc.core.metrics import confusion, corr_distance, evaluate, macro_f1, per_class_f1
from cooc.errors import BatchTooSmallError, ConfigError


def brute_f1(truth: list[int], pred: list[int]) -> float:
    tp = sum(1 for t, p in zip(truth, pred) if t and p)
    fp = sum(1 for t, p in zip(truth, pred) if not t and p)
    fn = sum(1 for t, p in zip(truth, pred) if t and not p)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def test_f1_hand_example() -> None:
    y = np.array([[1], [0], [0], [0]])
    yhat = np.array([[0.9], [0.8], [0.1], [0.1]])
    assert macro_f1(confusion(y, yhat)) == pytest.approx(2 / 3)


def test_macro_f1_two_class_hand_example() -> None:
    # a: tp=1 fp=1 fn=0, b: tp=1 fp=0 fn=1
    y = np.array([[1, 1], [0, 1]])
    yhat = np.array([[0.9, 0.9], [0.8, 0.1]])
    assert macro_f1(confusion(y, yhat)) == 2 / 3


def test_threshold_is_inclusive() -> None:
    counts = confusion(np.array([[1], [0]]), np.array([[0.5], [0.49]]))
    assert counts.tp.tolist() == [1] and counts.fp.tolist() == [0]


def test_class_without_positives_scores_one() -> None:
    y = np.array([[1, 0], [0, 0], [1, 0]])
    yhat = np.array([[0.9, 0.1], [0.2, 0.2], [0.7, 0.3]])
    assert per_class_f1(confusion(y, yhat)).tolist() == [1.0, 1.0]


def test_f1_matches_brute_force() -> None:
    rng = np.random.default_rng(8)
    for _ in range(1000):
        y = (rng.random((12, 3)) < 0.3).astype(int)
        yhat = rng.random((12, 3))
        counts = confusion(y, yhat, threshold=0.6)
        pred = (yhat >= 0.6).astype(int)
        expected = [brute_f1(y[:, k].tolist(), pred[:, k].tolist()) for k in range(3)]
        assert np.max(np.abs(per_class_f1(counts) - expected)) <= 1e-12
        assert abs(macro_f1(counts) - sum(expected) / 3) <= 1e-12


def test_corr_distance_matches_pairwise_sum() -> None:
    rng = np.random.default_rng(1)
    y = (rng.random((40, 4)) < 0.5).astype(float)
    yhat = rng.random((40, 4))
    gt, pm = correlation_matrix(y).values, correlation_matrix(yhat).values
    expected = sum(abs(gt[i, j] - pm[i, j]) for i in range(4) for j in range(i + 1, 4))
    assert corr_distance(y, yhat) == pytest.approx(expected, abs=1e-12)


def test_corr_distance_can_binarize() -> None:
    y = np.array([[1, 1], [0, 0], [1, 0], [0, 1]], dtype=float)
    yhat = np.array([[0.9, 0.8], [0.1, 0.3], [0.7, 0.2], [0.4, 0.6]])
    assert corr_distance(y, yhat, binarize_at=0.5) == pytest.approx(0.0, abs=1e-12)
    assert corr_distance(y, yhat) > 0.0


def test_evaluate_report() -> None:
    y = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    report = evaluate(y, y * 0.8 + 0.1, class_names=("a", "b"))
    assert report.macro_f1 == 1.0
    assert report.corr_distance == pytest.approx(0.0, abs=1e-12)
    assert report.to_row() == {"macro_f1": 1.0, "corr_distance": report.corr_distance, "f1_a": 1.0, "f1_b": 1.0}
    assert report.to_dict()["per_class_f1"] == {"a": 1.0, "b": 1.0}


def test_metric_errors() -> None:
    with pytest.raises(ConfigError):
        confusion(np.ones((2, 2)), np.ones((2, 2)), threshold=1.0)
    with pytest.raises(BatchTooSmallError):
        corr_distance(np.ones((1, 2)), np.ones((1, 2)))


@pytest.mark.parametrize("level", [0.1, 0.3, 0.5])
def test_constant_prediction_column_is_skipped(level: float) -> None:
    y = np.array([[1, 1], [1, 1], [0, 0], [0, 0]] * 16, dtype=float)
    yhat = np.column_stack([np.full(64, level), np.linspace(0.1, 0.9, 64)])
    assert corr_distance(y, yhat) == 0.0
