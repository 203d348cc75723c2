from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from cooc.config import DECISION_THRESHOLD, SIGMA_FLOOR
from cooc.core.correlation import correlation_matrix
from cooc.errors import BatchTooSmallError, ConfigError, ShapeError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    macro_f1: float
    per_class_f1: Tuple[float, ...]
    corr_distance: float
    threshold: float
    class_names: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        names = self.class_names or tuple(str(i) for i in range(len(self.per_class_f1)))
        return {
            "macro_f1": self.macro_f1,
            "corr_distance": self.corr_distance,
            "threshold": self.threshold,
            "per_class_f1": {n: f for n, f in zip(names, self.per_class_f1)},
        }

    def to_row(self) -> Dict[str, float]:
        row = {"macro_f1": self.macro_f1, "corr_distance": self.corr_distance}
        names = self.class_names or tuple(str(i) for i in range(len(self.per_class_f1)))
        for n, f in zip(names, self.per_class_f1):
            row[f"f1_{n}"] = f
        return row


def _check(y: np.ndarray, yhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.ndim != 2 or y.shape != yhat.shape:
        raise ShapeError(f"label shape {y.shape} does not match prediction shape {yhat.shape}")
    return y, yhat


def confusion(y: np.ndarray, yhat: np.ndarray, threshold: float = DECISION_THRESHOLD) -> ConfusionCounts:
    y, yhat = _check(y, yhat)
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    truth = y.astype(bool)
    pred = yhat >= threshold
    return ConfusionCounts(
        tp=np.sum(truth & pred, axis=0),
        fp=np.sum(~truth & pred, axis=0),
        fn=np.sum(truth & ~pred, axis=0),
        tn=np.sum(~truth & ~pred, axis=0),
    )


def per_class_f1(counts: ConfusionCounts) -> np.ndarray:
    """tp / (tp + (fp + fn)/2); a class with no tp, fp or fn scores 1."""
    tp = counts.tp.astype(np.float64)
    denom = tp + 0.5 * (counts.fp + counts.fn)
    return np.divide(tp, denom, out=np.ones_like(tp), where=denom > 0)


def macro_f1(counts: ConfusionCounts) -> float:
    return float(np.mean(per_class_f1(counts)))


def corr_distance(
    y: np.ndarray,
    yhat: np.ndarray,
    mask: Optional[np.ndarray] = None,
    sigma_floor: float = SIGMA_FLOOR,
    binarize_at: Optional[float] = None,
) -> float:
    """
    Unscaled sum over masked pairs of |(p_y + 1) - (p_yhat + 1)|; pairs with a
    zero-variance column in either matrix are skipped.
    """
    y, yhat = _check(y, yhat)
    n, u = y.shape
    if n < 2:
        raise BatchTooSmallError(f"correlation distance needs at least 2 rows, got {n}")
    if mask is None:
        mask = np.triu(np.ones((u, u), dtype=bool), 1)
    elif mask.shape != (u, u):
        raise ShapeError(f"pair mask is {mask.shape}, expected {(u, u)}")

    pred = (yhat >= binarize_at).astype(np.float64) if binarize_at is not None else yhat
    gt = correlation_matrix(y, sigma_floor)
    pm = correlation_matrix(pred, sigma_floor)
    use = mask & gt.valid & pm.valid
    diff = np.abs((gt.values + 1.0) - (pm.values + 1.0))
    return float(diff[use].sum())


def evaluate(
    y: np.ndarray,
    yhat: np.ndarray,
    mask: Optional[np.ndarray] = None,
    threshold: float = DECISION_THRESHOLD,
    sigma_floor: float = SIGMA_FLOOR,
    class_names: Tuple[str, ...] = (),
    binarize_corr: bool = False,
) -> MetricReport:
    counts = confusion(y, yhat, threshold)
    f1 = per_class_f1(counts)
    dist = corr_distance(y, yhat, mask, sigma_floor, threshold if binarize_corr else None)
    return MetricReport(
        macro_f1=float(np.mean(f1)),
        per_class_f1=tuple(float(v) for v in f1),
        corr_distance=dist,
        threshold=threshold,
        class_names=tuple(class_names),
    )
