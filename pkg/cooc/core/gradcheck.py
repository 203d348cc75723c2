from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from cooc.config import (
    GRADCHECK_ATOL,
    GRADCHECK_INSTANCES,
    GRADCHECK_RTOL,
    GRADCHECK_STEP,
)
from cooc.core.correlation import correlation_matrix
from cooc.core.loss import LossConfig, combined_loss, combined_loss_gradient
from cooc.core.model import MlpParams, backward, forward, init_params

log = logging.getLogger(__name__)

CHECK_RHOS = (0.0, 0.45, 1.0)

# instances closer than this to a kink (|dp| = 0 or a ReLU hinge) are redrawn
KINK_MARGIN = 1e-3


@dataclass(frozen=True)
class GradcheckCase:
    index: int
    level: str  # "loss" | "model"
    U: int
    N: int
    rho: float
    max_error: float


@dataclass(frozen=True)
class GradcheckReport:
    cases: Tuple[GradcheckCase, ...]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max((c.max_error for c in self.cases), default=0.0)

    @property
    def worst(self) -> Optional[GradcheckCase]:
        return max(self.cases, key=lambda c: c.max_error, default=None)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "instances": len(self.cases),
            "max_relative_error": self.max_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "cases": [asdict(c) for c in self.cases],
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = GRADCHECK_ATOL) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|); elements where both sides are within atol of zero count as exact."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    err = np.where(scale <= atol, 0.0, diff / np.where(scale > atol, scale, 1.0))
    return float(err.max()) if err.size else 0.0


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = GRADCHECK_STEP) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def _min_corr_gap(y: np.ndarray, yhat: np.ndarray, cfg: LossConfig) -> float:
    gt = correlation_matrix(y, cfg.sigma_floor)
    pm = correlation_matrix(yhat, cfg.sigma_floor)
    use = cfg.mask_for(y.shape[1]) & gt.valid & pm.valid
    gaps = np.abs(gt.values - pm.values)[use]
    return float(gaps.min()) if gaps.size else np.inf


def _labels(rng: np.random.Generator, n: int, u: int) -> np.ndarray:
    y = (rng.random((n, u)) < rng.uniform(0.2, 0.8, size=u)).astype(np.float64)
    # small batches sometimes draw a constant column; its pairs are invalid and contribute 0
    return y


def check_loss_gradient(y: np.ndarray, yhat: np.ndarray, cfg: LossConfig, h: float = GRADCHECK_STEP) -> float:
    analytic = combined_loss_gradient(y, yhat, cfg)
    numeric = numeric_gradient(lambda p: combined_loss(y, p, cfg).total, yhat, h)
    return relative_error(analytic, numeric)


def _model_loss(params: MlpParams, x: np.ndarray, y: np.ndarray, cfg: LossConfig) -> float:
    yhat, _ = forward(params, x, training=False, epsilon=cfg.epsilon)
    return combined_loss(y, yhat, cfg).total


def check_model_gradient(
    params: MlpParams, x: np.ndarray, y: np.ndarray, cfg: LossConfig, h: float = GRADCHECK_STEP
) -> float:
    """Analytic parameter gradients (loss gradient + backward) against central differences."""
    yhat, cache = forward(params, x, training=False, epsilon=cfg.epsilon)
    grads = backward(params, cache, combined_loss_gradient(y, yhat, cfg))

    worst = 0.0
    arrays = params.arrays()
    for name, analytic in grads.arrays().items():

        def f(value: np.ndarray, name: str = name) -> float:
            return _model_loss(params.with_arrays({**arrays, name: value}), x, y, cfg)

        worst = max(worst, relative_error(analytic, numeric_gradient(f, arrays[name], h)))
    return worst


def _draw_loss_case(rng: np.random.Generator, cfg_rho: float) -> Tuple[np.ndarray, np.ndarray, LossConfig]:
    cfg = LossConfig(rho=cfg_rho)
    while True:
        u = int(rng.integers(2, 9))
        n = int(rng.integers(4, 65))
        y = _labels(rng, n, u)
        yhat = rng.uniform(0.05, 0.95, size=(n, u))
        if _min_corr_gap(y, yhat, cfg) > KINK_MARGIN:
            return y, yhat, cfg


def _draw_model_case(
    rng: np.random.Generator, cfg_rho: float
) -> Tuple[MlpParams, np.ndarray, np.ndarray, LossConfig]:
    cfg = LossConfig(rho=cfg_rho)
    while True:
        u = int(rng.integers(2, 9))
        n = int(rng.integers(4, 65))
        d = int(rng.integers(2, 9))
        hidden = int(rng.integers(2, 13))
        params = init_params(d, hidden, u, seed=rng, dropout_rate=0.0)
        params = params.with_arrays({**params.arrays(), "b2": rng.normal(0.0, 0.3, size=u)})
        x = rng.standard_normal((n, d))
        y = _labels(rng, n, u)

        yhat, cache = forward(params, x, training=False, epsilon=cfg.epsilon)
        if np.min(np.abs(cache.z1)) <= KINK_MARGIN:
            continue
        if np.any(cache.probs != cache.yhat) or np.min(yhat.std(axis=0)) < 0.01:
            continue
        if _min_corr_gap(y, yhat, cfg) > KINK_MARGIN:
            return params, x, y, cfg


def run_gradcheck(
    seed: int = 0,
    instances: int = GRADCHECK_INSTANCES,
    h: float = GRADCHECK_STEP,
    tolerance: float = GRADCHECK_RTOL,
) -> GradcheckReport:
    """
    Finite-difference suite: `instances` random cases at the loss level and as
    many through the model, cycling rho over 0, 0.45 and 1 with dropout off.
    """
    rng = np.random.default_rng(seed)
    cases: List[GradcheckCase] = []
    for i in range(instances):
        rho = CHECK_RHOS[i % len(CHECK_RHOS)]

        y, yhat, cfg = _draw_loss_case(rng, rho)
        err = check_loss_gradient(y, yhat, cfg, h)
        cases.append(GradcheckCase(i, "loss", y.shape[1], y.shape[0], rho, err))

        params, x, y, cfg = _draw_model_case(rng, rho)
        err = check_model_gradient(params, x, y, cfg, h)
        cases.append(GradcheckCase(i, "model", y.shape[1], y.shape[0], rho, err))

    report = GradcheckReport(cases=tuple(cases), tolerance=tolerance)
    log.info("gradient check: %d cases, max relative error %.3e", len(cases), report.max_error)
    return report
