from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from cooc.core.dataset import DatasetTable
from cooc.errors import ConfigError


@dataclass(frozen=True)
class FoldPlan:
    folds: Tuple[Tuple[str, ...], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def subjects(self) -> List[str]:
        return sorted(s for fold in self.folds for s in fold)

    def split(self, table: DatasetTable, fold: int) -> tuple[DatasetTable, DatasetTable]:
        """Returns (train, validation) where validation holds the fold's subjects."""
        if not 0 <= fold < self.k:
            raise ConfigError(f"fold index {fold} out of range for k={self.k}")
        held_out = table.rows_for_subjects(self.folds[fold])
        return table.take(~held_out), table.take(held_out)


def subject_kfold(dataset: DatasetTable, k: int, seed: int) -> FoldPlan:
    """
    Subject-dependent k-fold plan: subjects are shuffled with the seed and
    dealt round-robin, so fold sizes differ by at most one subject.
    """
    subjects = dataset.subjects()
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    if len(subjects) < k:
        raise ConfigError(f"{len(subjects)} subjects cannot fill {k} folds")

    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    folds = tuple(tuple(order[i::k]) for i in range(k))
    return FoldPlan(folds=folds, seed=seed)


def split_subjects_in_half(table: DatasetTable, seed: int) -> tuple[DatasetTable, DatasetTable]:
    """Subject-dependent halves; the first half gets the extra subject when the count is odd."""
    subjects = table.subjects()
    if len(subjects) < 2:
        raise ConfigError(f"need at least 2 subjects to split in half, got {len(subjects)}")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    cut = (len(order) + 1) // 2
    first = table.rows_for_subjects(order[:cut])
    return table.take(first), table.take(~first)
