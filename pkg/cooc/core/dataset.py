from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from cooc.config import SIGMA_FLOOR
from cooc.core.correlation import LabelSpace, correlation_matrix, select_correlated_classes
from cooc.errors import ConfigError, ShapeError


def _str_column(values: Iterable[object]) -> np.ndarray:
    return np.asarray([str(v) for v in values], dtype=object)


@dataclass(frozen=True)
class DatasetTable:
    features: np.ndarray  # M×D
    labels: np.ndarray  # M×U, 0/1
    subject_ids: np.ndarray
    task_ids: np.ndarray
    domain_ids: np.ndarray
    space: LabelSpace
    task_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        if features.ndim != 2 or labels.ndim != 2:
            raise ShapeError(f"features {features.shape} and labels {labels.shape} must be 2-D")
        m = features.shape[0]
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        for name in ("subject_ids", "task_ids", "domain_ids"):
            col = _str_column(getattr(self, name))
            if col.shape != (m,):
                raise ShapeError(f"{name} has {col.shape[0]} entries for {m} rows")
            object.__setattr__(self, name, col)
        if labels.shape != (m, self.space.U):
            raise ShapeError(f"labels {labels.shape} do not match {m} rows × U={self.space.U}")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ShapeError("labels must be 0/1")

        declared = tuple(self.task_names) or tuple(sorted(set(self.task_ids.tolist())))
        missing = set(self.task_ids.tolist()) - set(declared)
        if missing:
            raise ShapeError(f"rows reference undeclared tasks: {', '.join(sorted(missing))}")
        object.__setattr__(self, "task_names", declared)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_names(self) -> Tuple[str, ...]:
        return self.space.class_names

    def subjects(self) -> List[str]:
        return sorted(set(self.subject_ids.tolist()))

    def take(self, rows: Sequence[int] | np.ndarray) -> "DatasetTable":
        idx = np.asarray(rows)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        idx = idx.astype(np.intp)
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            subject_ids=self.subject_ids[idx],
            task_ids=self.task_ids[idx],
            domain_ids=self.domain_ids[idx],
        )

    def rows_for_subjects(self, subjects: Iterable[str]) -> np.ndarray:
        return np.isin(self.subject_ids, list(subjects))

    def restrict_classes(self, names: Sequence[str]) -> "DatasetTable":
        """Keep only the named label columns, in this table's class order."""
        for n in names:
            self.space.index(n)
        space = self.space.subset(names)
        cols = [self.space.index(n) for n in space.class_names]
        return replace(self, labels=self.labels[:, cols], space=space)

    def select_correlated(self, threshold: float, signed: bool = False) -> "DatasetTable":
        """Apply the co-occurrence selection rule to this table's own labels."""
        corr = correlation_matrix(self.labels, SIGMA_FLOOR, self.class_names)
        keep = select_correlated_classes(corr, threshold, self.space, signed=signed)
        if len(keep) < 2:
            raise ConfigError(
                f"only {len(keep)} classes reach correlation {threshold}; at least 2 are needed"
            )
        return self.restrict_classes(keep)


def intersect_classes(train: DatasetTable, test: DatasetTable) -> Optional[List[str]]:
    shared = [n for n in train.class_names if n in set(test.class_names)]
    return shared or None
