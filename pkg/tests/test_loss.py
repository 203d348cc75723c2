from __future__ import annotations

import numpy as np
import pytest

from cooc.core.correlation import correlation_matrix, pearson
from cooc.core.gradcheck import numeric_gradient, relative_error
from cooc.core.loss import (
    LossConfig,
    bce,
    combined_loss,
    combined_loss_gradient,
    corr_loss,
    dataset_target,
)
from cooc.errors import BatchTooSmallError, ConfigError, ShapeError


def batch(seed: int = 0, n: int = 24, u: int = 4) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    y = (rng.random((n, u)) < 0.5).astype(float)
    y[0], y[1] = 1.0, 0.0  # no constant columns
    yhat = rng.uniform(0.1, 0.9, size=(n, u))
    return y, yhat


def test_bce_hand_value() -> None:
    assert bce(np.array([[1.0]]), np.array([[0.5]]))[0] == pytest.approx(np.log(2.0), abs=1e-12)


def test_rho_zero_is_mean_bce() -> None:
    for seed in range(1000):
        y, yhat = batch(seed, n=8, u=3)
        value = combined_loss(y, yhat, LossConfig(rho=0.0))
        assert abs(value.total - float(np.mean(bce(y, yhat)))) <= 1e-12


def test_rho_one_is_half_corr_loss() -> None:
    cfg = LossConfig(rho=1.0)
    for seed in range(1000):
        y, yhat = batch(seed, n=8, u=3)
        assert abs(combined_loss(y, yhat, cfg).total - corr_loss(y, yhat, cfg) / 2.0) <= 1e-12


def test_affine_predictions_have_no_corr_loss() -> None:
    y, _ = batch(2)
    yhat = 0.8 * y + 0.1
    assert corr_loss(y, yhat, LossConfig(rho=0.5)) < 1e-9


def test_perfect_anticorrelation_hits_the_upper_bound() -> None:
    y = np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=float)
    yhat = np.array([[0.9, 0.9], [0.1, 0.1], [0.9, 0.9], [0.1, 0.1]])
    # target -1, prediction +1, one pair: 2 / 1
    assert corr_loss(y, yhat, LossConfig()) == pytest.approx(2.0)


def test_corr_loss_ignores_invalid_pairs() -> None:
    y = np.array([[1, 1, 0], [1, 0, 1], [1, 1, 1], [1, 0, 0]], dtype=float)
    yhat = np.full((4, 3), 0.5)
    yhat[:, 1] = [0.9, 0.1, 0.8, 0.2]
    yhat[:, 2] = [0.2, 0.8, 0.7, 0.1]
    cfg = LossConfig()
    only_valid = abs(correlation_matrix(y).values[1, 2] - correlation_matrix(yhat).values[1, 2])
    assert corr_loss(y, yhat, cfg) == pytest.approx(only_valid / 3.0, abs=1e-12)


def test_masked_pairs_do_not_count() -> None:
    y, yhat = batch(3, u=3)
    mask = np.zeros((3, 3), dtype=bool)
    assert corr_loss(y, yhat, LossConfig(mask=mask)) == 0.0


def test_single_row_batch_is_rejected() -> None:
    with pytest.raises(BatchTooSmallError):
        combined_loss(np.array([[1.0, 0.0]]), np.array([[0.6, 0.4]]), LossConfig(rho=0.3))


def test_shape_and_config_errors() -> None:
    with pytest.raises(ShapeError):
        combined_loss(np.ones((4, 2)), np.ones((4, 3)) * 0.5, LossConfig())
    with pytest.raises(ConfigError):
        LossConfig(rho=1.5)
    with pytest.raises(ConfigError):
        LossConfig(target="epoch")
    with pytest.raises(ConfigError):
        LossConfig(mask=np.ones((3, 3), dtype=bool))


def test_dataset_target_replaces_batch_correlation() -> None:
    y, yhat = batch(4)
    cfg = LossConfig(rho=1.0, target="dataset")
    target = dataset_target(y, cfg)
    assert corr_loss(y, yhat, cfg, target) == pytest.approx(corr_loss(y, yhat, cfg), abs=1e-12)


@pytest.mark.parametrize("rho", [0.0, 0.45, 1.0])
def test_gradient_matches_central_differences(rho: float) -> None:
    y, yhat = batch(5, n=16, u=3)
    cfg = LossConfig(rho=rho)
    analytic = combined_loss_gradient(y, yhat, cfg)
    numeric = numeric_gradient(lambda p: combined_loss(y, p, cfg).total, yhat)
    assert relative_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize("level", [0.1, 0.3, 0.5, 0.9])
def test_constant_prediction_column_contributes_nothing(level: float) -> None:
    y = np.array([[1, 1], [1, 1], [0, 0], [0, 0]] * 16, dtype=float)
    yhat = np.column_stack([np.full(64, level), np.linspace(0.1, 0.9, 64)])
    cfg = LossConfig(rho=0.5)
    assert corr_loss(y, yhat, cfg) == 0.0
    assert np.all(np.isfinite(combined_loss_gradient(y, yhat, cfg)))


def test_corr_loss_is_invariant_to_column_order() -> None:
    y, yhat = batch(7, n=32, u=5)
    mask = np.triu(np.ones((5, 5), dtype=bool), 1)
    mask[1, 3] = False
    perm = np.array([3, 0, 4, 1, 2])
    both = mask | mask.T
    permuted_mask = np.triu(both[np.ix_(perm, perm)], 1)
    a = corr_loss(y, yhat, LossConfig(mask=mask))
    b = corr_loss(y[:, perm], yhat[:, perm], LossConfig(mask=permuted_mask))
    assert b == pytest.approx(a, abs=1e-12)


def test_loss_value_recomposes_at_rho_045() -> None:
    y, yhat = batch(9)
    cfg = LossConfig(rho=0.45)
    value = combined_loss(y, yhat, cfg)
    bce_part = float(np.mean(bce(y, yhat)))
    corr_part = corr_loss(y, yhat, cfg)
    assert value.bce_part == bce_part and value.corr_part == corr_part
    assert abs(value.total - (0.55 * bce_part + 0.45 * corr_part / 2.0)) <= 1e-12


def test_seven_class_corr_loss_matches_pairwise_loop() -> None:
    y, yhat = batch(11, n=64, u=7)
    expected = 0.0
    for i in range(7):
        for j in range(i + 1, 7):
            expected += abs(pearson(y[:, i], y[:, j]) - pearson(yhat[:, i], yhat[:, j]))
    value = corr_loss(y, yhat, LossConfig())
    assert 0.0 <= value <= 2.0
    assert value == pytest.approx(expected / 21.0, abs=1e-12)
