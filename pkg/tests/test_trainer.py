from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from cooc.core.correlation import LabelSpace
from cooc.core.dataset import DatasetTable
from cooc.core.loss import LossConfig, bce
from cooc.core.model import ParamGrads, backward, forward, init_params
from cooc.core.trainer import (
    HISTORY_COLUMNS,
    AdamState,
    TrainConfig,
    _batches,
    adam_step,
    evaluate_loss,
    history_csv,
    train,
)
from cooc.errors import ConfigError, ShapeError, TrainingDivergedError


def make_table(n: int = 60, d: int = 5, u: int = 3, seed: int = 0, subjects: int = 4) -> DatasetTable:
    rng = np.random.default_rng(seed)
    y = (rng.random((n, u)) < 0.4).astype(np.int8)
    y[0], y[1] = 1, 0
    x = rng.standard_normal((n, d)) + 1.5 * y @ rng.standard_normal((u, d))
    return DatasetTable(
        features=x,
        labels=y,
        subject_ids=[f"s{i % subjects}" for i in range(n)],
        task_ids=["t"] * n,
        domain_ids=["source"] * n,
        space=LabelSpace(tuple(f"c{i}" for i in range(u))),
    )


def test_adam_first_step_moves_by_learning_rate_and_clips() -> None:
    params = init_params(2, 3, 2, seed=0)
    grads = ParamGrads(*(np.full_like(a, 50.0) for a in params.arrays().values()))
    cfg = TrainConfig(learning_rate=0.01, clip_value=1.0)

    state, new = adam_step(AdamState.zeros_like(params), params, grads, cfg)
    assert state.step == 1
    # bias-corrected first step is lr * g / (|g| + eps), independent of the raw magnitude
    assert np.allclose(new.w1, params.w1 - 0.01, atol=1e-8)
    assert np.allclose(state.m["w1"], 0.1)  # (1 - beta1) * clipped gradient


def test_last_batch_of_one_row_is_dropped() -> None:
    batches = _batches(np.arange(9), 4)
    assert [b.size for b in batches] == [4, 4]
    assert [b.size for b in _batches(np.arange(10), 4)] == [4, 4, 2]


def test_zero_epochs_returns_initial_parameters() -> None:
    table = make_table()
    init = init_params(table.feature_dim, 4, table.space.U, seed=9)
    result = train(table, None, TrainConfig(epochs=0, hidden=4), init=init)
    assert result.history == []
    assert result.best_epoch is None
    assert result.params is init


def test_training_is_deterministic() -> None:
    table = make_table(seed=1)
    cfg = TrainConfig(learning_rate=1e-2, epochs=3, batch_size=16, seed=4, hidden=6, loss=LossConfig(rho=0.45))
    a = train(table, table, cfg)
    b = train(table, table, cfg)
    for name, arr in a.params.arrays().items():
        assert np.array_equal(arr, b.params.arrays()[name])
    assert history_csv(a.history) == history_csv(b.history)


def test_bce_training_reduces_loss() -> None:
    table = make_table(n=200, seed=2)
    cfg = TrainConfig(learning_rate=1e-2, epochs=25, batch_size=32, seed=0, hidden=16, dropout=0.0)
    result = train(table, None, cfg)
    first, last = result.history[0].train.total, result.history[-1].train.total
    assert last < first
    assert result.best_epoch == cfg.epochs


def test_validation_picks_best_epoch() -> None:
    table = make_table(n=120, seed=3)
    cfg = TrainConfig(learning_rate=1e-2, epochs=6, batch_size=32, seed=1, hidden=8)
    result = train(table.take(np.arange(80)), table.take(np.arange(80, 120)), cfg)
    vals = [r.val.total for r in result.history]
    assert result.best_epoch == int(np.argmin(vals)) + 1


def test_history_csv_header() -> None:
    table = make_table()
    result = train(table, None, TrainConfig(epochs=1, hidden=4, batch_size=16))
    text = history_csv(result.history)
    assert text.splitlines()[0] == ",".join(HISTORY_COLUMNS)
    assert text.endswith("\n") and "\r" not in text


def test_dataset_target_mode_trains() -> None:
    table = make_table(seed=5)
    cfg = TrainConfig(epochs=2, hidden=4, batch_size=16, loss=LossConfig(rho=0.6, target="dataset"))
    result = train(table, None, cfg)
    assert len(result.history) == 2
    assert np.isfinite(evaluate_loss(result.params, table, cfg).total)


def test_incompatible_inputs() -> None:
    table = make_table()
    other = make_table(d=4)
    with pytest.raises(ShapeError):
        train(table, other, TrainConfig(epochs=1))
    with pytest.raises(ShapeError):
        train(table.take([0]), None, TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        replace(TrainConfig(), batch_size=1)


def test_adam_zero_gradient_leaves_parameters() -> None:
    params = init_params(3, 4, 2, seed=1)
    zero = ParamGrads(*(np.zeros_like(a) for a in params.arrays().values()))
    state, new = adam_step(AdamState.zeros_like(params), params, zero, TrainConfig(learning_rate=0.01))
    assert state.step == 1
    for name, arr in params.arrays().items():
        assert np.array_equal(new.arrays()[name], arr)


def test_adam_constant_gradient_steps_by_learning_rate() -> None:
    params = init_params(3, 4, 2, seed=1)
    grads = ParamGrads(*(np.full_like(a, 0.3) for a in params.arrays().values()))
    cfg = TrainConfig(learning_rate=0.01)
    state = AdamState.zeros_like(params)
    for _ in range(200):
        before = params
        state, params = adam_step(state, params, grads, cfg)
    assert state.step == 200
    assert np.allclose(before.w2 - params.w2, 0.01, rtol=1e-6)


def test_non_finite_loss_stops_training() -> None:
    table = make_table()
    init = init_params(table.feature_dim, 4, table.space.U, seed=0)
    b2 = init.b2.copy()
    b2[0] = np.nan
    with pytest.raises(TrainingDivergedError) as err:
        train(table, None, TrainConfig(epochs=2, hidden=4, batch_size=16), init=init.with_arrays({**init.arrays(), "b2": b2}))
    assert (err.value.epoch, err.value.batch) == (1, 0)


def test_returned_parameters_are_from_the_best_validation_epoch() -> None:
    table = make_table(n=120, seed=3)
    # same features, inverted labels: fitting the training set hurts this validation set
    flipped = DatasetTable(
        features=table.features,
        labels=1 - table.labels,
        subject_ids=table.subject_ids,
        task_ids=table.task_ids,
        domain_ids=table.domain_ids,
        space=table.space,
    )
    cfg = TrainConfig(learning_rate=1e-2, epochs=8, batch_size=32, seed=2, hidden=8, dropout=0.0)
    full = train(table, flipped, cfg)
    assert full.best_epoch < cfg.epochs

    prefix = train(table, flipped, replace(cfg, epochs=full.best_epoch))
    for name, arr in prefix.params.arrays().items():
        assert np.array_equal(full.params.arrays()[name], arr)


def test_rho_zero_matches_a_plain_cross_entropy_loop() -> None:
    table = make_table(n=90, seed=6)
    cfg = TrainConfig(learning_rate=1e-2, epochs=3, batch_size=16, seed=5, hidden=6, loss=LossConfig(rho=0.0))
    result = train(table, None, cfg)

    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    params = init_params(table.feature_dim, cfg.hidden, table.space.U, seed=np.random.default_rng(init_seq))
    shuffle_rng, dropout_rng = np.random.default_rng(shuffle_seq), np.random.default_rng(dropout_seq)
    state = AdamState.zeros_like(params)
    epoch_bce = []
    for _ in range(cfg.epochs):
        losses, sizes = [], []
        for idx in _batches(shuffle_rng.permutation(table.n_rows), cfg.batch_size):
            y = table.labels[idx].astype(np.float64)
            yhat, cache = forward(params, table.features[idx], training=True, seed=dropout_rng)
            grad = (yhat - y) / (yhat * (1.0 - yhat)) / y.size
            state, params = adam_step(state, params, backward(params, cache, grad), cfg)
            losses.append(float(np.mean(bce(y, yhat))))
            sizes.append(idx.size)
        epoch_bce.append(np.average(losses, weights=sizes))

    for name, arr in params.arrays().items():
        assert np.array_equal(result.params.arrays()[name], arr)
    assert [r.train.total for r in result.history] == pytest.approx(epoch_bce, abs=1e-12)
