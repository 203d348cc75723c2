from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from cooc.config import SIGMA_FLOOR
from cooc.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class LabelSpace:
    class_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.class_names)
        object.__setattr__(self, "class_names", names)
        if len(names) < 2:
            raise ConfigError(f"label space needs at least 2 classes, got {len(names)}")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError(f"duplicate class names: {', '.join(dupes)}")

    @property
    def U(self) -> int:
        return len(self.class_names)

    def index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown class '{name}'") from None

    def subset(self, names: Iterable[str]) -> "LabelSpace":
        wanted = set(names)
        return LabelSpace(tuple(n for n in self.class_names if n in wanted))


@dataclass(frozen=True)
class CorrelationMatrix:
    values: np.ndarray
    valid: np.ndarray
    class_names: Optional[Tuple[str, ...]] = None

    @property
    def U(self) -> int:
        return self.values.shape[0]


def _as_2d(m: np.ndarray) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected an N×U matrix, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ShapeError(f"correlation needs at least 2 rows, got {arr.shape[0]}")
    return arr


def pearson(a: Sequence[float], b: Sequence[float], sigma_floor: float = SIGMA_FLOOR) -> float:
    """
    Pearson correlation of two columns, each standard deviation floored at
    sigma_floor. Binary columns give the Phi coefficient.
    """
    x = np.asarray(a, dtype=np.float64).ravel()
    z = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ShapeError(f"column lengths differ ({x.size} vs {z.size})")
    if x.size < 2:
        raise ShapeError(f"pearson needs at least 2 samples, got {x.size}")

    centered, sigma = column_stats(np.column_stack([x, z]))
    sx, sz = np.maximum(sigma, sigma_floor)
    p = float(np.mean(centered[:, 0] * centered[:, 1])) / (sx * sz)
    return float(min(1.0, max(-1.0, p)))


def column_stats(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Returns (centered matrix, raw population std per column). Constant
    columns come back exactly zero with sigma 0, whatever value they hold.
    """
    arr = _as_2d(m)
    centered = arr - arr.mean(axis=0, keepdims=True)
    # mean() of a constant column is off by an ulp for most values
    centered[:, np.ptp(arr, axis=0) == 0.0] = 0.0
    sigma = np.sqrt(np.mean(centered * centered, axis=0))
    return centered, sigma


def correlation_from_centered(
    centered: np.ndarray, sigma: np.ndarray, sigma_floor: float = SIGMA_FLOOR
) -> tuple[np.ndarray, np.ndarray]:
    n, u = centered.shape
    floored = np.maximum(sigma, sigma_floor)
    cov = (centered.T @ centered) / n
    p = np.clip(cov / np.outer(floored, floored), -1.0, 1.0)

    ok = sigma > 0.0
    valid = np.outer(ok, ok)

    # mirror the upper triangle so symmetry is exact
    upper = np.triu(p, 1)
    p = upper + upper.T
    p[~valid] = 0.0
    np.fill_diagonal(p, np.where(ok, 1.0, 0.0))
    return p, valid


def correlation_matrix(
    m: np.ndarray,
    sigma_floor: float = SIGMA_FLOOR,
    class_names: Optional[Sequence[str]] = None,
) -> CorrelationMatrix:
    centered, sigma = column_stats(m)
    values, valid = correlation_from_centered(centered, sigma, sigma_floor)
    names = tuple(class_names) if class_names is not None else None
    if names is not None and len(names) != values.shape[0]:
        raise ShapeError(f"{len(names)} class names for {values.shape[0]} columns")
    return CorrelationMatrix(values=values, valid=valid, class_names=names)


def upper_triangle_mask(
    space: LabelSpace,
    excluded_pairs: Optional[Iterable[Tuple[str, str]]] = None,
) -> np.ndarray:
    mask = np.triu(np.ones((space.U, space.U), dtype=bool), 1)
    for a, b in excluded_pairs or ():
        i, j = space.index(a), space.index(b)
        if i == j:
            raise ConfigError(f"pair ({a}, {b}) is not a pair of distinct classes")
        i, j = min(i, j), max(i, j)
        mask[i, j] = False
    return mask


def pair_count(U: int) -> float:
    return 0.5 * (U * U - U)


def select_correlated_classes(
    gt: CorrelationMatrix,
    threshold: float,
    space: Optional[LabelSpace] = None,
    signed: bool = False,
) -> List[str]:
    """
    Classes whose strongest valid off-diagonal correlation reaches threshold.
    Magnitude is compared unless signed=True.
    """
    names = space.class_names if space is not None else gt.class_names
    if names is None:
        names = tuple(str(i) for i in range(gt.U))
    if len(names) != gt.U:
        raise ShapeError(f"{len(names)} class names for a {gt.U}×{gt.U} matrix")

    vals = gt.values if signed else np.abs(gt.values)
    off = gt.valid & ~np.eye(gt.U, dtype=bool)

    picked: List[str] = []
    for i, name in enumerate(names):
        row = vals[i][off[i]]
        if row.size and float(row.max()) >= threshold:
            picked.append(name)
    return picked
