from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from cooc.config import PRED_EPSILON
from cooc.errors import ConfigError, ContractError, ParseError, ShapeError

CHECKPOINT_FORMAT = "cooc-mlp"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("w1", "b1", "w2", "b2")

SeedLike = int | np.random.Generator | None


@dataclass(frozen=True)
class MlpParams:
    w1: np.ndarray  # D×H
    b1: np.ndarray  # H
    w2: np.ndarray  # H×U
    b2: np.ndarray  # U
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        d, h = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape[0] != h or self.b2.shape != (self.w2.shape[1],):
            raise ShapeError(
                f"inconsistent parameter shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_arrays(self, arrays: Dict[str, np.ndarray]) -> "MlpParams":
        return replace(self, **{name: arrays[name] for name in PARAM_NAMES})


@dataclass(frozen=True)
class ParamGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    mask: np.ndarray
    probs: np.ndarray
    yhat: np.ndarray


def init_params(D: int, H: int, U: int, seed: SeedLike = 0, dropout_rate: float = 0.5) -> MlpParams:
    """Uniform(-sqrt(3/fan_in), +sqrt(3/fan_in)) weights, zero biases."""
    if min(D, H, U) < 1:
        raise ConfigError(f"dimensions must be positive, got D={D}, H={H}, U={U}")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(3.0 / D)
    lim2 = np.sqrt(3.0 / H)
    return MlpParams(
        w1=rng.uniform(-lim1, lim1, size=(D, H)),
        b1=np.zeros(H),
        w2=rng.uniform(-lim2, lim2, size=(H, U)),
        b2=np.zeros(U),
        dropout_rate=dropout_rate,
    )


def forward(
    params: MlpParams,
    x: np.ndarray,
    training: bool = False,
    seed: SeedLike = None,
    epsilon: float = PRED_EPSILON,
) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.w1.shape[0]:
        raise ShapeError(f"features have shape {x.shape}, model expects D={params.w1.shape[0]}")

    z1 = x @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)

    rate = params.dropout_rate
    if training and rate > 0.0:
        rng = np.random.default_rng(seed)
        mask = (rng.random(a1.shape) >= rate) / (1.0 - rate)
    else:
        mask = np.ones_like(a1)

    probs = expit((a1 * mask) @ params.w2 + params.b2)
    yhat = np.clip(probs, epsilon, 1.0 - epsilon)
    return yhat, ForwardCache(x=x, z1=z1, a1=a1, mask=mask, probs=probs, yhat=yhat)


def backward(params: MlpParams, cache: ForwardCache, loss_grad: np.ndarray) -> ParamGrads:
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != cache.yhat.shape:
        raise ContractError(f"loss gradient {g.shape} does not match cached output {cache.yhat.shape}")
    if cache.a1.shape[1] != params.w1.shape[1] or cache.x.shape[1] != params.w1.shape[0]:
        raise ContractError("forward cache was produced by a model with different dimensions")

    # clamp passes gradient only where it did not bind
    passthrough = cache.probs == cache.yhat
    dz2 = g * cache.probs * (1.0 - cache.probs) * passthrough

    h = cache.a1 * cache.mask
    dw2 = h.T @ dz2
    db2 = dz2.sum(axis=0)

    dz1 = (dz2 @ params.w2.T) * cache.mask * (cache.z1 > 0.0)
    dw1 = cache.x.T @ dz1
    db1 = dz1.sum(axis=0)
    return ParamGrads(w1=dw1, b1=db1, w2=dw2, b2=db2)


@dataclass(frozen=True)
class MlpPredictor:
    params: MlpParams
    epsilon: float = PRED_EPSILON

    def predict(self, features: np.ndarray) -> np.ndarray:
        yhat, _ = forward(self.params, features, training=False, epsilon=self.epsilon)
        return yhat


def checkpoint_json(
    params: MlpParams,
    seed: Optional[int] = None,
    class_names: Optional[Tuple[str, ...]] = None,
) -> str:
    """Versioned JSON record: dims, dropout rate, training seed and the weight grids."""
    d, h, u = params.dims
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"D": d, "H": h, "U": u},
        "dropout_rate": params.dropout_rate,
        "seed": seed,
        "class_names": list(class_names) if class_names else None,
        "weights": {name: arr.tolist() for name, arr in params.arrays().items()},
    }
    return json.dumps(record, indent=1) + "\n"


def load_checkpoint(path: Path) -> tuple[MlpParams, dict]:
    """Returns (params, metadata) where metadata holds seed and class names."""
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"checkpoint is not valid JSON: {e.msg}", line=e.lineno) from e

    if record.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"not a model checkpoint: {path.name}")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {record.get('version')!r}")

    weights = record["weights"]
    params = MlpParams(
        w1=np.asarray(weights["w1"], dtype=np.float64),
        b1=np.asarray(weights["b1"], dtype=np.float64),
        w2=np.asarray(weights["w2"], dtype=np.float64),
        b2=np.asarray(weights["b2"], dtype=np.float64),
        dropout_rate=float(record["dropout_rate"]),
    )
    dims = record.get("dims", {})
    if params.dims != (dims.get("D"), dims.get("H"), dims.get("U")):
        raise ParseError(f"checkpoint dims {dims} do not match its weights {params.dims}")
    meta = {"seed": record.get("seed"), "class_names": record.get("class_names")}
    return params, meta
