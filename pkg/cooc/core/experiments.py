from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from cooc.config import DECISION_THRESHOLD, DEFAULT_FOLDS, FINETUNE_EPOCHS
from cooc.core.balancing import BalancerConfig, balance_resample
from cooc.core.dataset import DatasetTable, intersect_classes
from cooc.core.folds import FoldPlan, split_subjects_in_half, subject_kfold
from cooc.core.jobs import Job, run_jobs
from cooc.core.metrics import MetricReport, evaluate
from cooc.core.model import MlpPredictor, MlpParams
from cooc.core.synthgen import split_by_task
from cooc.core.trainer import EpochRecord, TrainConfig, train
from cooc.errors import ConfigError

log = logging.getLogger(__name__)


class Predictor(Protocol):
    def predict(self, features: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FitOutcome:
    predictor: Predictor
    history: Tuple[EpochRecord, ...] = ()
    best_epoch: Optional[int] = None


Fitter = Callable[[DatasetTable, Optional[DatasetTable], TrainConfig], FitOutcome]


def mlp_fitter(dataset: DatasetTable, val: Optional[DatasetTable], cfg: TrainConfig) -> FitOutcome:
    result = train(dataset, val, cfg)
    return FitOutcome(
        predictor=MlpPredictor(result.params, epsilon=cfg.loss.epsilon),
        history=tuple(result.history),
        best_epoch=result.best_epoch,
    )


def sample_std(values: Sequence[float]) -> float:
    """Sample standard deviation (n - 1); 0 for fewer than two values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(np.std(arr, ddof=1))


@dataclass(frozen=True)
class ExperimentResult:
    name: str
    rho: float
    reports: Tuple[MetricReport, ...]
    config: dict = field(default_factory=dict)
    histories: Tuple[Tuple[EpochRecord, ...], ...] = ()
    balanced: bool = False

    @property
    def f1_values(self) -> np.ndarray:
        return np.asarray([r.macro_f1 for r in self.reports], dtype=np.float64)

    @property
    def corr_values(self) -> np.ndarray:
        return np.asarray([r.corr_distance for r in self.reports], dtype=np.float64)

    @property
    def f1_mean(self) -> float:
        return float(self.f1_values.mean())

    @property
    def f1_std(self) -> float:
        return sample_std(self.f1_values)

    @property
    def corr_mean(self) -> float:
        return float(self.corr_values.mean())

    @property
    def corr_std(self) -> float:
        return sample_std(self.corr_values)

    def summary_row(self) -> dict:
        return {
            "name": self.name,
            "rho": self.rho,
            "balanced": self.balanced,
            "folds": len(self.reports),
            "f1_mean": self.f1_mean,
            "f1_std": self.f1_std,
            "corr_mean": self.corr_mean,
            "corr_std": self.corr_std,
        }

    def fold_rows(self) -> List[dict]:
        return [
            {"name": self.name, "rho": self.rho, "balanced": self.balanced, "fold": i, **r.to_row()}
            for i, r in enumerate(self.reports)
        ]

    def to_dict(self) -> dict:
        return {
            **self.summary_row(),
            "std_kind": "sample (n-1)",
            "reports": [r.to_dict() for r in self.reports],
            "config": self.config,
        }


@dataclass(frozen=True)
class GridSearchResult:
    results: Tuple[ExperimentResult, ...]
    best_rho: float

    def to_dict(self) -> dict:
        return {"best_rho": self.best_rho, "results": [r.to_dict() for r in self.results]}


@dataclass(frozen=True)
class CrossEvalResult:
    within: ExperimentResult
    per_test: Dict[str, ExperimentResult]
    classes: Dict[str, Tuple[str, ...]]

    def to_dict(self) -> dict:
        return {
            "within": self.within.to_dict(),
            "tests": {
                name: {"classes": list(self.classes[name]), **r.to_dict()} for name, r in self.per_test.items()
            },
        }


@dataclass(frozen=True)
class CalibrationResult:
    task: str
    rho: float
    before: MetricReport
    after: MetricReport
    config: dict = field(default_factory=dict)
    base_history: Tuple[EpochRecord, ...] = ()
    finetune_history: Tuple[EpochRecord, ...] = ()
    params: Optional[MlpParams] = None

    def to_row(self) -> dict:
        return {
            "task": self.task,
            "rho": self.rho,
            "f1_before": self.before.macro_f1,
            "f1_after": self.after.macro_f1,
            "corr_before": self.before.corr_distance,
            "corr_after": self.after.corr_distance,
        }

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "rho": self.rho,
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "config": self.config,
        }


@dataclass(frozen=True)
class _FoldOutcome:
    report: MetricReport
    fit: FitOutcome


def fold_seeds(seed: int, k: int) -> List[int]:
    """Per-fold training seeds; identical for every rho so runs stay paired."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def _metric_mask(cfg: TrainConfig, names: Sequence[str], full: Sequence[str]) -> Optional[np.ndarray]:
    if cfg.loss.mask is None:
        return None
    idx = [list(full).index(n) for n in names]
    return cfg.loss.mask[np.ix_(idx, idx)]


def _score(
    predictor: Predictor,
    table: DatasetTable,
    cfg: TrainConfig,
    threshold: float,
    binarize_corr: bool,
    columns: Optional[Sequence[str]] = None,
    model_classes: Optional[Sequence[str]] = None,
) -> MetricReport:
    yhat = predictor.predict(table.features)
    names = tuple(columns or table.class_names)
    full = tuple(model_classes or table.class_names)
    if names != full:
        yhat = yhat[:, [full.index(n) for n in names]]
    return evaluate(
        table.labels[:, [table.space.index(n) for n in names]],
        yhat,
        mask=_metric_mask(cfg, names, full),
        threshold=threshold,
        sigma_floor=cfg.loss.sigma_floor,
        class_names=names,
        binarize_corr=binarize_corr,
    )


def _fit_fold(
    dataset: DatasetTable,
    plan: FoldPlan,
    fold: int,
    cfg: TrainConfig,
    fitter: Fitter,
    balancer: Optional[BalancerConfig],
    threshold: float,
    binarize_corr: bool,
) -> _FoldOutcome:
    fit_set, val = plan.split(dataset, fold)
    if balancer is not None:
        fit_set = balance_resample(fit_set, balancer, seed=cfg.seed)
    log.debug(
        "fold %d/%d rho=%.2f: %d train rows, %d val rows", fold + 1, plan.k, cfg.loss.rho, fit_set.n_rows, val.n_rows
    )
    fit = fitter(fit_set, val, cfg)
    report = _score(fit.predictor, val, cfg, threshold, binarize_corr)
    log.info(
        "fold %d/%d rho=%.2f: macro F1 %.4f, corr distance %.4f",
        fold + 1,
        plan.k,
        cfg.loss.rho,
        report.macro_f1,
        report.corr_distance,
    )
    return _FoldOutcome(report=report, fit=fit)


def _fold_jobs(
    name: str,
    dataset: DatasetTable,
    plan: FoldPlan,
    cfg: TrainConfig,
    fitter: Fitter,
    balancer: Optional[BalancerConfig],
    threshold: float,
    binarize_corr: bool,
) -> List[Job[_FoldOutcome]]:
    jobs = []
    for fold, seed in enumerate(fold_seeds(cfg.seed, plan.k)):
        fold_cfg = replace(cfg, seed=seed)
        jobs.append(
            Job(
                name=f"{name}/fold{fold}",
                fn=lambda fold=fold, fold_cfg=fold_cfg: _fit_fold(
                    dataset, plan, fold, fold_cfg, fitter, balancer, threshold, binarize_corr
                ),
            )
        )
    return jobs


def _result(
    name: str,
    cfg: TrainConfig,
    plan: FoldPlan,
    outcomes: Sequence[_FoldOutcome],
    balancer: Optional[BalancerConfig],
) -> ExperimentResult:
    config = {**cfg.snapshot(), "k": plan.k, "balancer": None if balancer is None else asdict(balancer)}
    return ExperimentResult(
        name=name,
        rho=cfg.loss.rho,
        reports=tuple(o.report for o in outcomes),
        config=config,
        histories=tuple(o.fit.history for o in outcomes),
        balanced=balancer is not None,
    )


def within_eval(
    dataset: DatasetTable,
    k: int,
    cfg: TrainConfig,
    fitter: Optional[Fitter] = None,
    balancer: Optional[BalancerConfig] = None,
    threshold: float = DECISION_THRESHOLD,
    binarize_corr: bool = False,
) -> ExperimentResult:
    """Subject-dependent k-fold evaluation on the held-out fold of each split."""
    plan = subject_kfold(dataset, k, cfg.seed)
    jobs = _fold_jobs("within", dataset, plan, cfg, fitter or mlp_fitter, balancer, threshold, binarize_corr)
    return _result("within", cfg, plan, run_jobs(jobs), balancer)


def grid_search(
    dataset: DatasetTable,
    rhos: Sequence[float],
    cfg: TrainConfig,
    k: int = DEFAULT_FOLDS,
    fitter: Optional[Fitter] = None,
    balancer: Optional[BalancerConfig] = None,
    threshold: float = DECISION_THRESHOLD,
) -> GridSearchResult:
    """
    One k-fold run per rho, sharing the fold plan and the per-fold seeds.
    The best rho maximizes mean validation macro F1; ties go to the smaller rho.
    """
    if not rhos:
        raise ConfigError("grid search needs at least one rho value")
    for r in rhos:
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"rho value {r} outside [0, 1]")

    plan = subject_kfold(dataset, k, cfg.seed)
    cfgs = [replace(cfg, loss=replace(cfg.loss, rho=float(r))) for r in rhos]
    jobs: List[Job[_FoldOutcome]] = []
    for c in cfgs:
        jobs.extend(
            _fold_jobs(f"rho={c.loss.rho:g}", dataset, plan, c, fitter or mlp_fitter, balancer, threshold, False)
        )
    outcomes = run_jobs(jobs)

    results = []
    for i, c in enumerate(cfgs):
        chunk = outcomes[i * plan.k : (i + 1) * plan.k]
        results.append(_result("gridsearch", c, plan, chunk, balancer))

    best = min(results, key=lambda r: (-r.f1_mean, r.rho))
    log.info("grid search: best rho %.2f (macro F1 %.4f)", best.rho, best.f1_mean)
    return GridSearchResult(results=tuple(results), best_rho=best.rho)


def _named_tests(
    test_datasets: Union[Sequence[DatasetTable], Mapping[str, DatasetTable]],
) -> Dict[str, DatasetTable]:
    if isinstance(test_datasets, Mapping):
        return dict(test_datasets)
    out: Dict[str, DatasetTable] = {}
    for i, t in enumerate(test_datasets):
        name = str(t.domain_ids[0]) if t.n_rows else f"test{i}"
        if name in out:
            name = f"{name}-{i}"
        out[name] = t
    return out


def cross_eval(
    train_dataset: DatasetTable,
    test_datasets: Union[Sequence[DatasetTable], Mapping[str, DatasetTable]],
    k: int,
    cfg: TrainConfig,
    fitter: Optional[Fitter] = None,
    balancer: Optional[BalancerConfig] = None,
    threshold: float = DECISION_THRESHOLD,
    binarize_corr: bool = False,
) -> CrossEvalResult:
    """
    Every fold model is scored on every full test dataset, restricted to the
    classes shared with the training label space.
    """
    tests = _named_tests(test_datasets)
    if not tests:
        raise ConfigError("cross evaluation needs at least one test dataset")

    shared: Dict[str, Tuple[str, ...]] = {}
    for name, t in tests.items():
        if t.feature_dim != train_dataset.feature_dim:
            raise ConfigError(
                f"test dataset '{name}' has D={t.feature_dim}, training has D={train_dataset.feature_dim}"
            )
        names = intersect_classes(train_dataset, t)
        if names is None:
            raise ConfigError(f"test dataset '{name}' shares no class with the training label space")
        if len(names) < 2:
            raise ConfigError(f"test dataset '{name}' shares only one class ({names[0]}); 2 are needed")
        shared[name] = tuple(names)

    plan = subject_kfold(train_dataset, k, cfg.seed)
    jobs = _fold_jobs("cross", train_dataset, plan, cfg, fitter or mlp_fitter, balancer, threshold, binarize_corr)
    outcomes = run_jobs(jobs)
    within = _result("within", cfg, plan, outcomes, balancer)

    per_test: Dict[str, ExperimentResult] = {}
    for name, t in tests.items():
        reports = tuple(
            _score(o.fit.predictor, t, cfg, threshold, binarize_corr, shared[name], train_dataset.class_names)
            for o in outcomes
        )
        per_test[name] = replace(within, name=name, reports=reports)
        log.info(
            "cross %s: macro F1 %.4f ± %.4f, corr distance %.4f ± %.4f",
            name,
            per_test[name].f1_mean,
            per_test[name].f1_std,
            per_test[name].corr_mean,
            per_test[name].corr_std,
        )
    return CrossEvalResult(within=within, per_test=per_test, classes=shared)


def calibrate(
    base_dataset: DatasetTable,
    task_name: str,
    cfg: TrainConfig,
    finetune_epochs: int = FINETUNE_EPOCHS,
    balancer: Optional[BalancerConfig] = None,
    threshold: float = DECISION_THRESHOLD,
    binarize_corr: bool = False,
) -> CalibrationResult:
    """
    Train on every task but `task_name` (subject-dependent holdout picks the
    checkpoint), finetune on one half of the task's subjects, and score the
    other half before and after finetuning.
    """
    if finetune_epochs < 0:
        raise ConfigError(f"finetune_epochs must be non-negative, got {finetune_epochs}")
    rest, only = split_by_task(base_dataset, task_name)
    if rest.n_rows == 0:
        raise ConfigError(f"no rows outside task '{task_name}' to train the base model on")
    half_a, half_b = split_subjects_in_half(only, cfg.seed)

    n_subjects = len(rest.subjects())
    if n_subjects >= 2:
        plan = subject_kfold(rest, min(DEFAULT_FOLDS, n_subjects), cfg.seed)
        fit_set, val = plan.split(rest, 0)
    else:
        fit_set, val = rest, None
    if balancer is not None:
        fit_set = balance_resample(fit_set, balancer, seed=cfg.seed)

    base = train(fit_set, val, cfg)
    before = _score(MlpPredictor(base.params, cfg.loss.epsilon), half_b, cfg, threshold, binarize_corr)

    tuned = train(half_a, None, replace(cfg, epochs=finetune_epochs), init=base.params)
    after = _score(MlpPredictor(tuned.params, cfg.loss.epsilon), half_b, cfg, threshold, binarize_corr)
    log.info(
        "calibrate %s rho=%.2f: corr distance %.4f -> %.4f, macro F1 %.4f -> %.4f",
        task_name,
        cfg.loss.rho,
        before.corr_distance,
        after.corr_distance,
        before.macro_f1,
        after.macro_f1,
    )
    return CalibrationResult(
        task=task_name,
        rho=cfg.loss.rho,
        before=before,
        after=after,
        config={**cfg.snapshot(), "finetune_epochs": finetune_epochs},
        base_history=tuple(base.history),
        finetune_history=tuple(tuned.history),
        params=tuned.params,
    )


def calibrate_all_tasks(
    base_dataset: DatasetTable,
    cfg: TrainConfig,
    finetune_epochs: int = FINETUNE_EPOCHS,
    tasks: Optional[Sequence[str]] = None,
    balancer: Optional[BalancerConfig] = None,
    threshold: float = DECISION_THRESHOLD,
) -> List[CalibrationResult]:
    names = list(tasks or base_dataset.task_names)
    jobs = [
        Job(
            name=f"calibrate/{t}",
            fn=lambda t=t: calibrate(base_dataset, t, cfg, finetune_epochs, balancer, threshold),
        )
        for t in names
    ]
    return run_jobs(jobs)


@dataclass(frozen=True)
class ComparisonRow:
    rho: float
    balanced: bool
    f1_mean: float
    f1_std: float
    corr_mean: float
    corr_std: float
    f1_bold: bool = False
    f1_underline: bool = False
    corr_bold: bool = False
    corr_underline: bool = False

    def as_row(self) -> dict:
        return asdict(self)

    def as_cells(self) -> dict:
        return {
            "rho": self.rho,
            "balanced": "yes" if self.balanced else "no",
            "macro F1": {
                "text": f"{self.f1_mean:.4f} ± {self.f1_std:.4f}",
                "bold": self.f1_bold,
                "underline": self.f1_underline,
            },
            "corr distance": {
                "text": f"{self.corr_mean:.4f} ± {self.corr_std:.4f}",
                "bold": self.corr_bold,
                "underline": self.corr_underline,
            },
        }


def compare_rhos(results: Sequence[ExperimentResult]) -> List[ComparisonRow]:
    """
    Side-by-side table of paired runs. Bold marks the better mean once the
    spread is included (F1: highest mean - std; corr: lowest mean + std);
    underline marks the lowest spread per metric.
    """
    if not results:
        return []
    f1_bound = [r.f1_mean - r.f1_std for r in results]
    corr_bound = [r.corr_mean + r.corr_std for r in results]
    f1_std = [r.f1_std for r in results]
    corr_std = [r.corr_std for r in results]

    best_f1, best_corr = max(f1_bound), min(corr_bound)
    low_f1_std, low_corr_std = min(f1_std), min(corr_std)
    return [
        ComparisonRow(
            rho=r.rho,
            balanced=r.balanced,
            f1_mean=r.f1_mean,
            f1_std=r.f1_std,
            corr_mean=r.corr_mean,
            corr_std=r.corr_std,
            f1_bold=f1_bound[i] == best_f1,
            f1_underline=f1_std[i] == low_f1_std,
            corr_bold=corr_bound[i] == best_corr,
            corr_underline=corr_std[i] == low_corr_std,
        )
        for i, r in enumerate(results)
    ]


def summary_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    return pd.DataFrame([r.summary_row() for r in results])


def folds_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    return pd.DataFrame([row for r in results for row in r.fold_rows()])


def calibration_frame(results: Sequence[CalibrationResult]) -> pd.DataFrame:
    """One row per task, one before/after column pair per rho."""
    rows = pd.DataFrame([c.to_row() for c in results])
    if rows.empty:
        return rows
    wide = rows.pivot(index="task", columns="rho")
    wide.columns = [f"{metric}@rho={rho:g}" for metric, rho in wide.columns]
    order = list(dict.fromkeys(c.task for c in results))
    return wide.loc[order].reset_index()
