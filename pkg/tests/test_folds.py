from __future__ import annotations

import numpy as np
import pytest

from cooc.core.correlation import LabelSpace
from cooc.core.dataset import DatasetTable, intersect_classes
from cooc.core.folds import split_subjects_in_half, subject_kfold
from cooc.errors import ConfigError


def make_table(subjects: int = 7, per_subject: int = 3, classes=("a", "b", "c")) -> DatasetTable:
    n = subjects * per_subject
    rng = np.random.default_rng(0)
    return DatasetTable(
        features=rng.standard_normal((n, 2)),
        labels=(rng.random((n, len(classes))) < 0.5).astype(np.int8),
        subject_ids=[f"s{i // per_subject}" for i in range(n)],
        task_ids=["t1" if i % 2 else "t2" for i in range(n)],
        domain_ids=["source"] * n,
        space=LabelSpace(tuple(classes)),
    )


def test_folds_partition_subjects() -> None:
    table = make_table()
    plan = subject_kfold(table, 3, seed=1)
    assert plan.subjects() == table.subjects()
    sizes = sorted(len(f) for f in plan.folds)
    assert sizes == [2, 2, 3]


def test_split_keeps_subjects_apart() -> None:
    table = make_table()
    plan = subject_kfold(table, 3, seed=2)
    for fold in range(plan.k):
        tr, va = plan.split(table, fold)
        assert not set(tr.subjects()) & set(va.subjects())
        assert tr.n_rows + va.n_rows == table.n_rows
        assert set(va.subjects()) == set(plan.folds[fold])


def test_kfold_is_seeded() -> None:
    table = make_table()
    assert subject_kfold(table, 3, 5) == subject_kfold(table, 3, 5)


def test_kfold_rejects_too_few_subjects() -> None:
    table = make_table(subjects=2)
    with pytest.raises(ConfigError):
        subject_kfold(table, 3, 0)
    with pytest.raises(ConfigError):
        subject_kfold(table, 1, 0)
    with pytest.raises(ConfigError):
        subject_kfold(make_table(), 3, 0).split(table, 3)


def test_halves_are_subject_disjoint() -> None:
    table = make_table()
    a, b = split_subjects_in_half(table, seed=0)
    assert len(a.subjects()) == 4 and len(b.subjects()) == 3
    assert not set(a.subjects()) & set(b.subjects())


def test_restrict_and_intersect_classes() -> None:
    table = make_table(classes=("a", "b", "c"))
    other = make_table(classes=("c", "a", "z"))
    assert intersect_classes(table, other) == ["a", "c"]
    narrowed = table.restrict_classes(["c", "a"])
    assert narrowed.class_names == ("a", "c")
    assert np.array_equal(narrowed.labels, table.labels[:, [0, 2]])
    assert intersect_classes(table, make_table(classes=("x", "y"))) is None
