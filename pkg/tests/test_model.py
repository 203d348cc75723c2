from __future__ import annotations

import numpy as np
import pytest

from cooc.core.model import (
    MlpPredictor,
    backward,
    checkpoint_json,
    forward,
    init_params,
    load_checkpoint,
)
from cooc.errors import ContractError, ParseError, ShapeError


def test_init_is_deterministic_and_bounded() -> None:
    a = init_params(6, 5, 3, seed=11)
    b = init_params(6, 5, 3, seed=11)
    for x, y in zip(a.arrays().values(), b.arrays().values()):
        assert np.array_equal(x, y)
    assert np.all(np.abs(a.w1) <= np.sqrt(3.0 / 6))
    assert np.all(np.abs(a.w2) <= np.sqrt(3.0 / 5))
    assert not np.any(a.b1) and not np.any(a.b2)


def test_forward_shapes_and_range() -> None:
    params = init_params(4, 8, 3, seed=0)
    x = np.random.default_rng(0).standard_normal((10, 4))
    yhat, cache = forward(params, x)
    assert yhat.shape == (10, 3)
    assert np.all((yhat > 0) & (yhat < 1))
    assert cache.z1.shape == (10, 8)


def test_eval_mode_ignores_dropout() -> None:
    params = init_params(4, 8, 3, seed=0, dropout_rate=0.5)
    x = np.random.default_rng(1).standard_normal((5, 4))
    a, _ = forward(params, x, training=False, seed=1)
    b, _ = forward(params, x, training=False, seed=2)
    assert np.array_equal(a, b)


def test_dropout_mask_is_inverted() -> None:
    params = init_params(4, 200, 2, seed=0, dropout_rate=0.5)
    x = np.ones((3, 4))
    _, cache = forward(params, x, training=True, seed=7)
    assert set(np.unique(cache.mask)) <= {0.0, 2.0}


def test_forward_rejects_wrong_feature_dim() -> None:
    params = init_params(4, 8, 3, seed=0)
    with pytest.raises(ShapeError):
        forward(params, np.zeros((2, 5)))


def test_backward_rejects_mismatched_gradient() -> None:
    params = init_params(4, 8, 3, seed=0)
    _, cache = forward(params, np.zeros((2, 4)))
    with pytest.raises(ContractError):
        backward(params, cache, np.zeros((2, 2)))


def test_predictor_matches_forward() -> None:
    params = init_params(3, 4, 2, seed=3)
    x = np.random.default_rng(3).standard_normal((6, 3))
    assert np.array_equal(MlpPredictor(params).predict(x), forward(params, x)[0])


def test_checkpoint_round_trip(tmp_path) -> None:
    params = init_params(3, 4, 2, seed=5, dropout_rate=0.25)
    path = tmp_path / "checkpoint.json"
    path.write_text(checkpoint_json(params, seed=5, class_names=("AU01", "AU02")), encoding="utf-8")

    loaded, meta = load_checkpoint(path)
    assert loaded.dims == (3, 4, 2)
    assert loaded.dropout_rate == 0.25
    assert meta == {"seed": 5, "class_names": ["AU01", "AU02"]}
    for name, arr in params.arrays().items():
        assert np.array_equal(arr, loaded.arrays()[name])


def test_checkpoint_rejects_other_json(tmp_path) -> None:
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else"}', encoding="utf-8")
    with pytest.raises(ParseError):
        load_checkpoint(path)


def test_zero_loss_gradient_gives_zero_parameter_gradients() -> None:
    params = init_params(4, 6, 3, seed=2, dropout_rate=0.0)
    x = np.random.default_rng(2).standard_normal((8, 4))
    yhat, cache = forward(params, x)
    grads = backward(params, cache, np.zeros_like(yhat))
    for arr in grads.arrays().values():
        assert not np.any(arr)


def test_dead_relu_unit_gets_no_gradient() -> None:
    params = init_params(4, 6, 3, seed=2, dropout_rate=0.0)
    b1 = params.b1.copy()
    b1[2] = -100.0
    params = params.with_arrays({**params.arrays(), "b1": b1})
    x = np.random.default_rng(2).standard_normal((8, 4))
    yhat, cache = forward(params, x)
    assert np.all(cache.z1[:, 2] < 0.0)

    grads = backward(params, cache, np.ones_like(yhat))
    assert not np.any(grads.w1[:, 2]) and grads.b1[2] == 0.0
    assert not np.any(grads.w2[2])
    assert np.any(grads.w1[:, [0, 1, 3, 4, 5]])


def test_all_dead_units_still_train_the_output_bias() -> None:
    params = init_params(4, 6, 2, seed=3, dropout_rate=0.0)
    params = params.with_arrays({**params.arrays(), "b1": np.full(6, -100.0)})
    x = np.random.default_rng(3).standard_normal((8, 4))
    yhat, cache = forward(params, x)
    assert np.all(yhat == 0.5)

    grads = backward(params, cache, np.ones_like(yhat))
    assert not np.any(grads.w1) and not np.any(grads.b1) and not np.any(grads.w2)
    assert np.allclose(grads.b2, 8 * 0.25)
