from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from cooc.config import BALANCE_ITERATIONS, BALANCE_LAMBDA, BALANCE_MAX_OCCURRENCE
from cooc.core.dataset import DatasetTable
from cooc.errors import ConfigError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BalancerConfig:
    lambda_weight: float = BALANCE_LAMBDA
    iterations: int = BALANCE_ITERATIONS
    max_occurrence: int = BALANCE_MAX_OCCURRENCE

    def __post_init__(self) -> None:
        if not self.lambda_weight > 0:
            raise ConfigError(f"lambda_weight must be positive, got {self.lambda_weight}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if self.max_occurrence < 1:
            raise ConfigError(f"max_occurrence must be positive, got {self.max_occurrence}")


@dataclass
class LabelSetGroup:
    key: str
    rows: List[int] = field(default_factory=list)


def build_label_groups(labels: np.ndarray) -> Dict[str, LabelSetGroup]:
    """
    Group row indices by their unique label set.
    Keys are the 0/1 string of the row, e.g. "0110100".
    """
    groups: Dict[str, LabelSetGroup] = {}
    for i, row in enumerate(np.asarray(labels, dtype=np.int8)):
        key = "".join("1" if v else "0" for v in row)
        grp = groups.get(key)
        if not grp:
            grp = LabelSetGroup(key=key)
            groups[key] = grp
        grp.rows.append(i)

    # stable ordering
    return {k: groups[k] for k in sorted(groups)}


def balance_resample(dataset: DatasetTable, cfg: BalancerConfig, seed: int) -> DatasetTable:
    """
    Greedy oversampling of unique label-set groups toward the size of the
    largest group. A row appears at most cfg.max_occurrence times in total;
    at most cfg.iterations rows are added. Priority of a group is its relative
    deficit minus lambda_weight times the duplicates it already received.
    """
    if dataset.n_rows == 0:
        raise ShapeError("cannot balance an empty dataset")

    groups = list(build_label_groups(dataset.labels).values())
    target = max(len(g.rows) for g in groups)
    members = [np.asarray(g.rows, dtype=np.intp) for g in groups]
    sizes = np.array([len(g.rows) for g in groups], dtype=np.int64)
    added = np.zeros(len(groups), dtype=np.int64)
    counts = np.ones(dataset.n_rows, dtype=np.int64)

    rng = np.random.default_rng(seed)
    extra: List[int] = []

    for _ in range(cfg.iterations):
        open_groups = [
            i
            for i in range(len(groups))
            if sizes[i] < target and counts[members[i]].min() < cfg.max_occurrence
        ]
        if not open_groups:
            break
        priority = [(target - sizes[i]) / target - cfg.lambda_weight * added[i] for i in open_groups]
        g = open_groups[int(np.argmax(priority))]

        rows = members[g]
        c = counts[rows]
        row = int(rng.choice(rows[c == c.min()]))
        counts[row] += 1
        sizes[g] += 1
        added[g] += 1
        extra.append(row)

    if extra:
        log.info("balancing added %d rows across %d label sets", len(extra), int(np.count_nonzero(added)))
    order = np.concatenate([np.arange(dataset.n_rows), np.asarray(extra, dtype=np.intp)])
    return dataset.take(order)
