from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cooc.config import PRED_EPSILON, SIGMA_FLOOR
from cooc.core.correlation import (
    CorrelationMatrix,
    column_stats,
    correlation_from_centered,
    correlation_matrix,
    pair_count,
)
from cooc.errors import BatchTooSmallError, ConfigError, ShapeError

TARGET_MODES = ("batch", "dataset")


@dataclass(frozen=True)
class LossConfig:
    rho: float = 0.0
    epsilon: float = PRED_EPSILON
    sigma_floor: float = SIGMA_FLOOR
    mask: Optional[np.ndarray] = field(default=None, compare=False)
    target: str = "batch"

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 < self.epsilon < 0.1:
            raise ConfigError(f"epsilon must be in (0, 0.1), got {self.epsilon}")
        if not self.sigma_floor > 0.0:
            raise ConfigError(f"sigma_floor must be positive, got {self.sigma_floor}")
        if self.target not in TARGET_MODES:
            raise ConfigError(f"target must be one of {TARGET_MODES}, got '{self.target}'")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError(f"pair mask must be square, got shape {m.shape}")
            if np.any(np.tril(m)):
                raise ConfigError("pair mask must be false on and below the diagonal")
            object.__setattr__(self, "mask", m)

    def mask_for(self, U: int) -> np.ndarray:
        if self.mask is None:
            return np.triu(np.ones((U, U), dtype=bool), 1)
        if self.mask.shape != (U, U):
            raise ShapeError(f"pair mask is {self.mask.shape[0]}×{self.mask.shape[1]} but U={U}")
        return self.mask


@dataclass(frozen=True)
class LossValue:
    total: float
    bce_part: float
    corr_part: float


def _check_pair(y: np.ndarray, yhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.ndim != 2 or y.shape != yhat.shape:
        raise ShapeError(f"label shape {y.shape} does not match prediction shape {yhat.shape}")
    return y, yhat


def bce(y: np.ndarray, yhat: np.ndarray, epsilon: float = PRED_EPSILON) -> np.ndarray:
    """Per-sample binary cross-entropy, averaged over the U classes."""
    y, yhat = _check_pair(y, yhat)
    p = np.clip(yhat, epsilon, 1.0 - epsilon)
    terms = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return -terms.mean(axis=1)


def dataset_target(labels: np.ndarray, cfg: LossConfig) -> CorrelationMatrix:
    """Correlation target computed once over a whole training split."""
    return correlation_matrix(labels, cfg.sigma_floor)


@dataclass(frozen=True)
class _CorrTerms:
    value: float
    sign: np.ndarray  # U×U, nonzero only on masked valid pairs
    p_hat: np.ndarray
    centered: np.ndarray
    sigma: np.ndarray


def _corr_terms(
    y: np.ndarray, yhat: np.ndarray, cfg: LossConfig, target: Optional[CorrelationMatrix]
) -> _CorrTerms:
    n, u = yhat.shape
    if n < 2:
        raise BatchTooSmallError(f"CorrLoss needs at least 2 samples per batch, got {n}")
    mask = cfg.mask_for(u)

    if target is None:
        target = correlation_matrix(y, cfg.sigma_floor)
    elif target.values.shape != (u, u):
        raise ShapeError(f"target correlation is {target.values.shape}, expected {(u, u)}")

    centered, sigma = column_stats(yhat)
    p_hat, valid_hat = correlation_from_centered(centered, sigma, cfg.sigma_floor)

    use = mask & target.valid & valid_hat
    diff = np.abs((target.values + 1.0) - (p_hat + 1.0))
    value = float(diff[use].sum() / pair_count(u))

    # d|p_y - p_hat|/dp_hat; np.sign(0) == 0 gives the zero subgradient at the kink
    sign = np.where(use, np.sign(p_hat - target.values), 0.0)
    return _CorrTerms(value=value, sign=sign, p_hat=p_hat, centered=centered, sigma=sigma)


def corr_loss(
    y: np.ndarray,
    yhat: np.ndarray,
    cfg: LossConfig,
    target: Optional[CorrelationMatrix] = None,
) -> float:
    y, yhat = _check_pair(y, yhat)
    return _corr_terms(y, yhat, cfg, target).value


def _compose(bce_part: float, corr_part: float, rho: float) -> LossValue:
    total = (1.0 - rho) * bce_part + rho * corr_part / 2.0
    return LossValue(total=float(total), bce_part=float(bce_part), corr_part=float(corr_part))


def combined_loss(
    y: np.ndarray,
    yhat: np.ndarray,
    cfg: LossConfig,
    target: Optional[CorrelationMatrix] = None,
) -> LossValue:
    y, yhat = _check_pair(y, yhat)
    bce_part = float(np.mean(bce(y, yhat, cfg.epsilon)))
    corr_part = _corr_terms(y, yhat, cfg, target).value
    return _compose(bce_part, corr_part, cfg.rho)


def _bce_gradient(y: np.ndarray, yhat: np.ndarray, epsilon: float) -> np.ndarray:
    n, u = y.shape
    p = np.clip(yhat, epsilon, 1.0 - epsilon)
    inside = (yhat >= epsilon) & (yhat <= 1.0 - epsilon)
    return np.where(inside, (p - y) / (p * (1.0 - p)), 0.0) / (n * u)


def _corr_gradient(terms: _CorrTerms, sigma_floor: float) -> np.ndarray:
    """
    d(sum of masked |p_y - p_hat|)/d(yhat), before the 1/(0.5(U^2-U)) scale.

    For p = cov(a,b)/(S_a S_b) with S = max(sigma, floor):
      dp/dx_ia = d_ib/(N S_a S_b) - p * d_ia/(N sigma_a S_a)   (second term only when not floored)
    """
    d = terms.centered
    n = d.shape[0]
    w = terms.sign + terms.sign.T
    s = np.maximum(terms.sigma, sigma_floor)
    inv_s = 1.0 / s

    cross = d @ (w * np.outer(inv_s, inv_s)) / n

    free = terms.sigma > sigma_floor
    scale = np.zeros_like(s)
    scale[free] = 1.0 / (terms.sigma[free] * s[free])
    weighted_p = np.sum(w * terms.p_hat, axis=1)
    own = d * (weighted_p * scale) / n
    return cross - own


def loss_and_gradient(
    y: np.ndarray,
    yhat: np.ndarray,
    cfg: LossConfig,
    target: Optional[CorrelationMatrix] = None,
) -> tuple[LossValue, np.ndarray]:
    """Value and d(total)/d(yhat) in one pass over the batch."""
    y, yhat = _check_pair(y, yhat)
    u = y.shape[1]

    bce_part = float(np.mean(bce(y, yhat, cfg.epsilon)))
    grad = (1.0 - cfg.rho) * _bce_gradient(y, yhat, cfg.epsilon)

    terms = _corr_terms(y, yhat, cfg, target)
    if cfg.rho > 0.0:
        grad = grad + (cfg.rho / (2.0 * pair_count(u))) * _corr_gradient(terms, cfg.sigma_floor)

    return _compose(bce_part, terms.value, cfg.rho), grad


def combined_loss_gradient(
    y: np.ndarray,
    yhat: np.ndarray,
    cfg: LossConfig,
    target: Optional[CorrelationMatrix] = None,
) -> np.ndarray:
    return loss_and_gradient(y, yhat, cfg, target)[1]
