from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from cooc.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    BATCH_SIZE,
    CLIP_VALUE,
    DROPOUT_RATE,
    EPOCHS,
    HIDDEN_UNITS,
    LEARNING_RATE,
    METRIC_DECIMALS,
)
from cooc.core.correlation import CorrelationMatrix
from cooc.core.dataset import DatasetTable
from cooc.core.loss import LossConfig, LossValue, combined_loss, dataset_target, loss_and_gradient
from cooc.core.model import MlpParams, ParamGrads, backward, forward, init_params
from cooc.errors import ConfigError, ShapeError, TrainingDivergedError

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_total", "train_bce", "train_corr", "val_total", "val_bce", "val_corr")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = LEARNING_RATE
    clip_value: float = CLIP_VALUE
    batch_size: int = BATCH_SIZE
    epochs: int = EPOCHS
    seed: int = 0
    hidden: int = HIDDEN_UNITS
    dropout: float = DROPOUT_RATE
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.clip_value > 0:
            raise ConfigError(f"clip_value must be positive, got {self.clip_value}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.hidden < 1:
            raise ConfigError(f"hidden must be at least 1, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def snapshot(self) -> dict:
        out = asdict(self)
        loss = self.loss
        out["loss"] = {
            "rho": loss.rho,
            "epsilon": loss.epsilon,
            "sigma_floor": loss.sigma_floor,
            "target": loss.target,
            "masked_pairs": None if loss.mask is None else int(loss.mask.sum()),
        }
        return out


@dataclass(frozen=True)
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def zeros_like(params: MlpParams) -> "AdamState":
        arrays = params.arrays()
        return AdamState(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
            step=0,
        )


def adam_step(
    state: AdamState, params: MlpParams, grads: ParamGrads, cfg: TrainConfig
) -> tuple[AdamState, MlpParams]:
    """Clip every gradient element into [-clip_value, clip_value], then a bias-corrected Adam update."""
    t = state.step + 1
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    new_p: Dict[str, np.ndarray] = {}

    for name, p in params.arrays().items():
        g = getattr(grads, name)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} is {g.shape}, parameter is {p.shape}")
        g = np.clip(g, -cfg.clip_value, cfg.clip_value)

        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)

        new_m[name] = m
        new_v[name] = v
        new_p[name] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    return AdamState(m=new_m, v=new_v, step=t), params.with_arrays(new_p)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: LossValue
    val: Optional[LossValue]

    def as_row(self) -> dict:
        nan = float("nan")
        return {
            "epoch": self.epoch,
            "train_total": self.train.total,
            "train_bce": self.train.bce_part,
            "train_corr": self.train.corr_part,
            "val_total": self.val.total if self.val else nan,
            "val_bce": self.val.bce_part if self.val else nan,
            "val_corr": self.val.corr_part if self.val else nan,
        }


@dataclass(frozen=True)
class TrainResult:
    params: MlpParams
    history: List[EpochRecord]
    best_epoch: Optional[int]


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    out = [order[i : i + batch_size] for i in range(0, order.size, batch_size)]
    # Pearson is undefined on a single row
    if out and out[-1].size < 2:
        out.pop()
    return out


def _mean_loss(values: List[LossValue], weights: List[int]) -> LossValue:
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    return LossValue(
        total=float(np.dot(w, [v.total for v in values])),
        bce_part=float(np.dot(w, [v.bce_part for v in values])),
        corr_part=float(np.dot(w, [v.corr_part for v in values])),
    )


def evaluate_loss(
    params: MlpParams,
    table: DatasetTable,
    cfg: TrainConfig,
    target: Optional[CorrelationMatrix] = None,
) -> LossValue:
    """Eval-mode combined loss over fixed-order batches, weighted by batch size."""
    batches = _batches(np.arange(table.n_rows), cfg.batch_size)
    if not batches:
        raise ShapeError(f"need at least 2 rows to compute a loss, got {table.n_rows}")
    values, sizes = [], []
    for idx in batches:
        yhat, _ = forward(params, table.features[idx], training=False, epsilon=cfg.loss.epsilon)
        values.append(combined_loss(table.labels[idx], yhat, cfg.loss, target))
        sizes.append(idx.size)
    return _mean_loss(values, sizes)


def _check_compatible(dataset: DatasetTable, val: Optional[DatasetTable]) -> None:
    if dataset.n_rows < 2:
        raise ShapeError(f"training set needs at least 2 rows, got {dataset.n_rows}")
    if val is None:
        return
    if val.space != dataset.space:
        raise ConfigError("training and validation label spaces differ")
    if val.feature_dim != dataset.feature_dim:
        raise ShapeError(f"feature dims differ ({dataset.feature_dim} vs {val.feature_dim})")


def train(
    dataset: DatasetTable,
    val: Optional[DatasetTable],
    cfg: TrainConfig,
    init: Optional[MlpParams] = None,
) -> TrainResult:
    """
    Mini-batch training with the combined loss.

    With a validation set the returned parameters are the ones with the lowest
    validation total; without one (finetuning) the final parameters are returned.
    """
    _check_compatible(dataset, val)

    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    if init is None:
        params = init_params(
            dataset.feature_dim,
            cfg.hidden,
            dataset.space.U,
            seed=np.random.default_rng(init_seq),
            dropout_rate=cfg.dropout,
        )
    else:
        params = init
    if params.dims[0] != dataset.feature_dim or params.dims[2] != dataset.space.U:
        raise ShapeError(
            f"initial parameters {params.dims} do not fit D={dataset.feature_dim}, U={dataset.space.U}"
        )

    target = dataset_target(dataset.labels, cfg.loss) if cfg.loss.target == "dataset" else None
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    state = AdamState.zeros_like(params)
    history: List[EpochRecord] = []
    best_params, best_val, best_epoch = params, float("inf"), None

    for epoch in range(1, cfg.epochs + 1):
        values, sizes = [], []
        for b, idx in enumerate(_batches(shuffle_rng.permutation(dataset.n_rows), cfg.batch_size)):
            yhat, cache = forward(
                params, dataset.features[idx], training=True, seed=dropout_rng, epsilon=cfg.loss.epsilon
            )
            value, grad = loss_and_gradient(dataset.labels[idx], yhat, cfg.loss, target)
            if not np.isfinite(value.total) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(epoch, b, f"loss={value.total!r}")
            state, params = adam_step(state, params, backward(params, cache, grad), cfg)
            values.append(value)
            sizes.append(idx.size)

        if not values:
            raise ShapeError(f"no batch of at least 2 rows in {dataset.n_rows} training rows")
        train_loss = _mean_loss(values, sizes)

        val_loss = evaluate_loss(params, val, cfg, target) if val is not None else None
        history.append(EpochRecord(epoch=epoch, train=train_loss, val=val_loss))

        if val_loss is None:
            best_params, best_epoch = params, epoch
        elif val_loss.total < best_val:
            best_params, best_val, best_epoch = params, val_loss.total, epoch

        log.debug(
            "epoch %d train=%.5f val=%s",
            epoch,
            train_loss.total,
            f"{val_loss.total:.5f}" if val_loss else "-",
        )

    if history:
        log.info("trained %d epochs (rho=%.2f), best epoch %s", cfg.epochs, cfg.loss.rho, best_epoch)
    return TrainResult(params=best_params, history=history, best_epoch=best_epoch)


def history_frame(history: List[EpochRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in history], columns=list(HISTORY_COLUMNS))


def history_csv(history: List[EpochRecord]) -> str:
    """epoch, train_total, train_bce, train_corr, val_total, val_bce, val_corr"""
    return history_frame(history).to_csv(
        index=False, float_format=f"%.{METRIC_DECIMALS + 4}f", lineterminator="\n"
    )
