from __future__ import annotations

from typing import Optional

import numpy as np
import pytest

from cooc.core.correlation import LabelSpace
from cooc.core.dataset import DatasetTable
from cooc.core.experiments import (
    ExperimentResult,
    FitOutcome,
    calibrate,
    calibration_frame,
    compare_rhos,
    cross_eval,
    fold_seeds,
    grid_search,
    sample_std,
    summary_frame,
    within_eval,
)
from cooc.core.metrics import MetricReport
from cooc.core.synthgen import generate
from cooc.core.trainer import TrainConfig
from cooc.errors import ConfigError
from cooc.profiles import get_profile


class Oracle:
    """Reads labels straight out of the features."""

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.where(features > 0.5, 0.9, 0.1)


def oracle_fitter(dataset: DatasetTable, val: Optional[DatasetTable], cfg: TrainConfig) -> FitOutcome:
    return FitOutcome(predictor=Oracle())


def labelled_table(classes=("a", "b", "c"), n: int = 40, subjects: int = 5, seed: int = 0) -> DatasetTable:
    rng = np.random.default_rng(seed)
    y = (rng.random((n, len(classes))) < 0.5).astype(np.int8)
    return DatasetTable(
        features=y.astype(float),
        labels=y,
        subject_ids=[f"s{i % subjects}" for i in range(n)],
        task_ids=["t1" if i < n // 2 else "t2" for i in range(n)],
        domain_ids=["source"] * n,
        space=LabelSpace(tuple(classes)),
    )


def report(f1: float, corr: float) -> MetricReport:
    return MetricReport(macro_f1=f1, per_class_f1=(f1,), corr_distance=corr, threshold=0.5)


def test_sample_std() -> None:
    assert sample_std([1.0]) == 0.0
    assert sample_std([1.0, 3.0]) == pytest.approx(np.sqrt(2.0))


def test_fold_seeds_are_stable() -> None:
    assert fold_seeds(7, 3) == fold_seeds(7, 3)
    assert len(set(fold_seeds(7, 3))) == 3


def test_within_eval_with_oracle() -> None:
    result = within_eval(labelled_table(), 5, TrainConfig(), fitter=oracle_fitter)
    assert len(result.reports) == 5
    assert result.f1_mean == 1.0
    assert result.f1_std == 0.0
    assert result.corr_mean == pytest.approx(0.0, abs=1e-9)
    assert result.config["k"] == 5


def test_grid_search_ties_go_to_smaller_rho() -> None:
    grid = grid_search(labelled_table(), (0.6, 0.3), TrainConfig(), k=5, fitter=oracle_fitter)
    assert [r.rho for r in grid.results] == [0.6, 0.3]
    assert grid.best_rho == 0.3
    with pytest.raises(ConfigError):
        grid_search(labelled_table(), (), TrainConfig(), k=5, fitter=oracle_fitter)


def test_cross_eval_scores_shared_classes() -> None:
    train_table = labelled_table()
    rng = np.random.default_rng(1)
    y = (rng.random((30, 3)) < 0.5).astype(np.int8)  # columns c, a, z
    features = np.stack([y[:, 1], np.zeros(30), y[:, 0]], axis=1).astype(float)
    test_table = DatasetTable(
        features=features,
        labels=y,
        subject_ids=["t0"] * 30,
        task_ids=["t1"] * 30,
        domain_ids=["shifted"] * 30,
        space=LabelSpace(("c", "a", "z")),
    )

    result = cross_eval(train_table, [test_table], 5, TrainConfig(), fitter=oracle_fitter)
    assert result.classes == {"shifted": ("a", "c")}
    shifted = result.per_test["shifted"]
    assert len(shifted.reports) == 5
    assert shifted.f1_mean == 1.0
    assert shifted.reports[0].class_names == ("a", "c")
    assert result.within.f1_mean == 1.0


def test_cross_eval_rejects_unusable_tests() -> None:
    train_table = labelled_table()
    with pytest.raises(ConfigError):
        cross_eval(train_table, {"x": labelled_table(classes=("a", "x", "y"))}, 5, TrainConfig(), fitter=oracle_fitter)
    with pytest.raises(ConfigError):
        cross_eval(train_table, {"x": labelled_table(classes=("p", "q"))}, 5, TrainConfig(), fitter=oracle_fitter)
    with pytest.raises(ConfigError):
        cross_eval(train_table, [], 5, TrainConfig(), fitter=oracle_fitter)


def test_calibrate_without_finetuning_changes_nothing() -> None:
    table = generate(get_profile("tiny").spec(seed=0))
    cfg = TrainConfig(learning_rate=1e-2, epochs=2, batch_size=32, hidden=8, seed=0)
    result = calibrate(table, "t2", cfg, finetune_epochs=0)
    assert result.after == result.before
    assert result.finetune_history == ()
    assert len(result.base_history) == 2


def test_calibrate_unknown_task() -> None:
    table = generate(get_profile("tiny").spec(seed=0))
    with pytest.raises(ConfigError):
        calibrate(table, "nope", TrainConfig(epochs=1))


def test_compare_rhos_marks_best_and_tightest() -> None:
    results = [
        ExperimentResult("g", 0.0, (report(0.70, 3.0), report(0.60, 2.0))),
        ExperimentResult("g", 0.45, (report(0.66, 1.5), report(0.64, 1.4))),
    ]
    rows = compare_rhos(results)
    assert [r.f1_bold for r in rows] == [False, True]
    assert [r.f1_underline for r in rows] == [False, True]
    assert [r.corr_bold for r in rows] == [False, True]
    assert [r.corr_underline for r in rows] == [False, True]
    assert rows[1].as_cells()["macro F1"]["bold"] is True


def test_frames() -> None:
    results = [ExperimentResult("g", 0.0, (report(0.5, 1.0), report(0.7, 1.2)))]
    frame = summary_frame(results)
    assert list(frame.columns[:4]) == ["name", "rho", "balanced", "folds"]
    assert frame.loc[0, "f1_mean"] == pytest.approx(0.6)
    assert calibration_frame([]).empty
