"""Command-line entry point: dataset generation, training and the evaluation protocols."""

from __future__ import annotations

import errno
import functools
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import numpy as np
import pandas as pd

from cooc import __version__
from cooc.app import configure_logging
from cooc.config import SIGMA_FLOOR
from cooc.core.balancing import BalancerConfig, balance_resample
from cooc.core.correlation import correlation_matrix
from cooc.core.dataset import DatasetTable
from cooc.core.experiments import (
    ExperimentResult,
    calibrate_all_tasks,
    calibration_frame,
    compare_rhos,
    cross_eval,
    folds_frame,
    grid_search,
    summary_frame,
    within_eval,
)
from cooc.core.folds import subject_kfold
from cooc.core.gradcheck import run_gradcheck
from cooc.core.metrics import evaluate
from cooc.core.model import MlpPredictor, checkpoint_json, load_checkpoint
from cooc.core.reporting import (
    RunWriter,
    build_report_dict,
    corr_csv_text,
    corr_json,
    ensure_run_dir,
)
from cooc.core.run_config import (
    RunConfig,
    ValidationResult,
    build_balancer,
    count_levels,
    build_domain,
    build_experiment,
    build_generator_spec,
    build_train_config,
    load_run_config,
    validate_run_config,
)
from cooc.core.synthgen import generate, generate_cross_domain
from cooc.core.trainer import TrainConfig, history_csv, train
from cooc.errors import CoocError, ConfigError
from cooc.profiles import get_domain, profile_names
from cooc.util.dataset_io import dataset_csv_text, predictions_csv_text, read_dataset, read_predictions
from cooc.util.heatmap import heatmap_png_bytes
from cooc.util.naming import parse_rho_list, rho_label

log = logging.getLogger(__name__)

CALIBRATION_RHOS = (0.0, 0.45)
INPUT_OPTIONS = ("data", "test", "predictions", "checkpoint")


@dataclass
class Session:
    command: str
    run: RunConfig
    seed: int
    writer: RunWriter
    notes: List[ValidationResult]


def _overrides(opts: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    pairs = opts.get("exclude_pair") or None
    rhos = opts.get("rhos")
    balance = opts.get("balance")
    return {
        "generator": {"profile": opts.get("profile")},
        "domain": {"name": opts.get("domain")},
        "train": {
            "epochs": opts.get("epochs"),
            "learning_rate": opts.get("lr"),
            "batch_size": opts.get("batch_size"),
            "hidden": opts.get("hidden"),
        },
        "loss": {
            "rho": opts.get("rho"),
            "target": opts.get("target"),
            "excluded_pairs": list(pairs) if pairs else None,
        },
        "balance": {"enabled": None if balance in (None, "both") else balance == "on"},
        "experiment": {
            "folds": opts.get("folds"),
            "rhos": list(parse_rho_list(rhos)) if rhos else None,
            "finetune_epochs": opts.get("finetune_epochs"),
            "select_threshold": opts.get("select_threshold"),
        },
    }


def _check_inputs(opts: Dict[str, Any]) -> None:
    """Input files must exist before a run directory is created."""
    for key in INPUT_OPTIONS:
        value = opts.get(key)
        for path in value if isinstance(value, tuple) else (value,):
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(errno.ENOENT, "no such file", str(path))


def _start(command: str, opts: Dict[str, Any]) -> Session:
    run = load_run_config(opts.get("config_path")).merged(_overrides(opts))
    notes = validate_run_config(run)
    for n in notes:
        level = {"ERROR": logging.ERROR, "WARNING": logging.WARNING}.get(n.level, logging.INFO)
        log.log(level, "config: %s", n.message)
    errors, warnings, _ = count_levels(notes)
    if errors:
        messages = "; ".join(n.message for n in notes if n.level == "ERROR")
        raise ConfigError(f"{errors} configuration error(s): {messages}")
    if warnings:
        log.info("config: %d warning(s)", warnings)
    _check_inputs(opts)

    writer = RunWriter(ensure_run_dir(opts["out"], command))
    seed = opts["seed"]
    inputs = {
        k: [str(p) for p in v] if isinstance(v, tuple) else str(v)
        for k, v in opts.items()
        if k in INPUT_OPTIONS and v
    }
    writer.write_json(
        "config.json",
        {"command": command, "version": __version__, "seed": seed, "inputs": inputs, "config": run.snapshot()},
    )
    log.info("%s: writing results to %s", command, writer.root)
    return Session(command=command, run=run, seed=seed, writer=writer, notes=notes)


def _dataset(s: Session, data: Optional[Path]) -> DatasetTable:
    table = read_dataset(data) if data is not None else generate(build_generator_spec(s.run, s.seed))
    exp = build_experiment(s.run)
    if exp.select_threshold is not None:
        table = table.select_correlated(exp.select_threshold, exp.signed_selection)
        log.info("class selection at %.2f kept %s", exp.select_threshold, ", ".join(table.class_names))
    return table


def _checkpoint_predictions(path: Path, table: DatasetTable) -> np.ndarray:
    params, meta = load_checkpoint(path)
    names = meta.get("class_names")
    if names and tuple(names) != table.class_names:
        raise ConfigError(
            f"checkpoint classes ({', '.join(names)}) differ from the dataset's ({', '.join(table.class_names)})"
        )
    log.info("predicting %d rows with %s", table.n_rows, path.name)
    return MlpPredictor(params).predict(table.features)


def _balancers(s: Session, mode: Optional[str]) -> List[Optional[BalancerConfig]]:
    if mode == "both":
        values = {k: v for k, v in s.run.sections.get("balance", {}).items() if k != "enabled"}
        return [None, BalancerConfig(**values)]
    return [build_balancer(s.run)]


def _write_histories(writer: RunWriter, prefix: str, results: Sequence[ExperimentResult]) -> None:
    for r in results:
        tag = f"{prefix}_{rho_label(r.rho)}" + ("_balanced" if r.balanced else "")
        for i, h in enumerate(r.histories):
            if h:
                writer.write_text(f"histories/{tag}_fold{i}.csv", history_csv(list(h)))


def _finish(s: Session, tables: Dict[str, List[dict]], summary: dict, highlights=None) -> None:
    report = build_report_dict(__version__, s.command, s.run.snapshot(), tables, summary, s.notes)
    s.writer.write_report(report, highlights)


def _with_rho(cfg: TrainConfig, rho: float) -> TrainConfig:
    return replace(cfg, loss=replace(cfg.loss, rho=float(rho)))


# -- option groups -----------------------------------------------------------


def _common(fn: Callable) -> Callable:
    fn = click.option(
        "--seed", type=int, default=0, show_default=True, help="Seed for data, folds and training."
    )(fn)
    fn = click.option(
        "--out",
        type=click.Path(file_okay=False, path_type=Path),
        default=Path("runs"),
        show_default=True,
        help="Parent folder for the run directory.",
    )(fn)
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="JSON run configuration; flags override it.",
    )(fn)
    return fn


def _data(fn: Callable) -> Callable:
    fn = click.option(
        "--data",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="Dataset CSV; generated from the profile when omitted.",
    )(fn)
    fn = click.option("--profile", type=click.Choice(profile_names(), case_sensitive=False), default=None)(fn)
    fn = click.option(
        "--select-threshold", type=float, default=None, help="Keep classes correlated at least this much."
    )(fn)
    return fn


def _training(fn: Callable) -> Callable:
    fn = click.option("--rho", type=click.FloatRange(0.0, 1.0), default=None, help="CorrLoss weight.")(fn)
    fn = click.option("--epochs", type=click.IntRange(min=0), default=None)(fn)
    fn = click.option("--lr", type=float, default=None, help="Adam learning rate.")(fn)
    fn = click.option("--batch-size", type=click.IntRange(min=2), default=None)(fn)
    fn = click.option("--hidden", type=click.IntRange(min=1), default=None)(fn)
    fn = click.option("--folds", type=click.IntRange(min=2), default=None)(fn)
    fn = click.option("--target", type=click.Choice(["batch", "dataset"]), default=None)(fn)
    fn = click.option(
        "--exclude-pair", multiple=True, help="Class pair A:B left out of CorrLoss (repeatable)."
    )(fn)
    fn = click.option("--balance", type=click.Choice(["off", "on", "both"]), default=None)(fn)
    return fn


def _command(fn: Callable) -> Callable:
    """Hands the options to the command as one dict."""

    @functools.wraps(fn)
    def wrapper(**opts: Any) -> Any:
        return fn(opts)

    return wrapper


# -- commands ----------------------------------------------------------------


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="cooc")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Co-occurrence-constrained multi-label training on synthetic data."""
    configure_logging(verbose)


@main.command()
@_common
@click.option("--profile", type=click.Choice(profile_names(), case_sensitive=False), default=None)
@click.option("--domain", default=None, help="Domain preset applied at generation time.")
@click.option("--test-domain", default=None, help="Also write disjoint subjects under this shifted domain.")
@click.option("--test-subjects", type=click.IntRange(min=1), default=10, show_default=True)
@_command
def gen(opts: Dict[str, Any]) -> None:
    """Synthesize a dataset CSV with a generator sidecar."""
    s = _start("gen", opts)
    spec = build_generator_spec(s.run, s.seed)

    tables = {"dataset.csv": None}
    if opts["test_domain"]:
        source, shifted = generate_cross_domain(spec, get_domain(opts["test_domain"]), opts["test_subjects"])
        tables = {"dataset.csv": source, f"test-{opts['test_domain']}.csv": shifted}
    else:
        tables["dataset.csv"] = generate(spec)

    rows = []
    for name, t in tables.items():
        s.writer.write_text(name, dataset_csv_text(t))
        corr = correlation_matrix(t.labels, SIGMA_FLOOR, t.class_names)
        stem = name[: -len(".csv")]
        s.writer.write_text(f"{stem}_corr.csv", corr_csv_text(corr))
        rows.append({"file": name, "rows": t.n_rows, "subjects": len(t.subjects()), "domain": str(t.domain_ids[0])})
    s.writer.write_json("generator.json", spec.to_dict())

    _finish(s, {"files": rows}, {"classes": ", ".join(spec.class_names), "tasks": len(spec.tasks)})
    click.echo(f"wrote {', '.join(tables)} to {s.writer.root}")


@main.command("train")
@_common
@_data
@_training
@_command
def train_cmd(opts: Dict[str, Any]) -> None:
    """Single training run; fold 0 of the subject split is the validation set."""
    s = _start("train", opts)
    table = _dataset(s, opts["data"])
    exp = build_experiment(s.run)
    cfg = build_train_config(s.run, s.seed, table.space)

    fit_set, val = subject_kfold(table, exp.folds, s.seed).split(table, 0)
    balancer = build_balancer(s.run)
    if balancer is not None:
        fit_set = balance_resample(fit_set, balancer, seed=s.seed)

    result = train(fit_set, val, cfg)
    yhat = MlpPredictor(result.params, cfg.loss.epsilon).predict(val.features)
    report = evaluate(
        val.labels,
        yhat,
        mask=cfg.loss.mask,
        threshold=exp.threshold,
        sigma_floor=cfg.loss.sigma_floor,
        class_names=table.class_names,
        binarize_corr=exp.binarize_corr,
    )

    s.writer.write_text("checkpoint.json", checkpoint_json(result.params, s.seed, table.class_names))
    s.writer.write_text("history.csv", history_csv(result.history))
    s.writer.write_text("predictions.csv", predictions_csv_text(yhat, table.class_names))
    s.writer.write_json("metrics.json", {"best_epoch": result.best_epoch, **report.to_dict()})

    per_class = [{"class": n, "f1": f} for n, f in zip(table.class_names, report.per_class_f1)]
    summary = {
        "rho": cfg.loss.rho,
        "best_epoch": result.best_epoch,
        "macro_f1": report.macro_f1,
        "corr_distance": report.corr_distance,
    }
    _finish(s, {"per-class F1": per_class, "history": [r.as_row() for r in result.history]}, summary)
    click.echo(
        f"rho={cfg.loss.rho:g} best epoch {result.best_epoch}: "
        f"macro F1 {report.macro_f1:.4f}, corr distance {report.corr_distance:.4f}"
    )


@main.command()
@_common
@_data
@_training
@click.option("--rhos", default=None, help="Comma-separated rho values (default 0,0.3,0.45,0.6,0.8).")
@_command
def gridsearch(opts: Dict[str, Any]) -> None:
    """k-fold run per rho on shared folds; picks the rho with the best mean macro F1."""
    s = _start("gridsearch", opts)
    table = _dataset(s, opts["data"])
    exp = build_experiment(s.run)
    cfg = build_train_config(s.run, s.seed, table.space)

    results: List[ExperimentResult] = []
    best: Dict[str, float] = {}
    for balancer in _balancers(s, opts["balance"]):
        grid = grid_search(table, exp.rhos, cfg, exp.folds, balancer=balancer, threshold=exp.threshold)
        results.extend(grid.results)
        best["balanced" if balancer else "not balanced"] = grid.best_rho

    s.writer.write_frame("summary.csv", summary_frame(results))
    s.writer.write_frame("folds.csv", folds_frame(results))
    s.writer.write_json("results.json", {"best_rho": best, "results": [r.to_dict() for r in results]})
    _write_histories(s.writer, "gridsearch", results)

    cells = [row.as_cells() for row in compare_rhos(results)]
    _finish(s, {}, {f"best rho ({k})": v for k, v in best.items()}, {"rho comparison": cells})
    click.echo("best rho: " + ", ".join(f"{v:g} ({k})" for k, v in best.items()))


def _paired_rhos(rho: float, baseline: bool) -> List[float]:
    return [0.0, rho] if baseline and rho > 0 else [rho]


@main.command()
@_common
@_data
@_training
@click.option("--baseline/--no-baseline", default=True, show_default=True, help="Add a paired rho=0 run.")
@_command
def within(opts: Dict[str, Any]) -> None:
    """Subject-dependent k-fold evaluation within one dataset."""
    s = _start("within", opts)
    table = _dataset(s, opts["data"])
    exp = build_experiment(s.run)
    cfg = build_train_config(s.run, s.seed, table.space)

    results = [
        within_eval(
            table,
            exp.folds,
            _with_rho(cfg, rho),
            balancer=balancer,
            threshold=exp.threshold,
            binarize_corr=exp.binarize_corr,
        )
        for balancer in _balancers(s, opts["balance"])
        for rho in _paired_rhos(cfg.loss.rho, opts["baseline"])
    ]

    s.writer.write_frame("summary.csv", summary_frame(results))
    s.writer.write_frame("folds.csv", folds_frame(results))
    s.writer.write_json("results.json", [r.to_dict() for r in results])
    _write_histories(s.writer, "within", results)

    cells = [row.as_cells() for row in compare_rhos(results)]
    _finish(s, {}, {"folds": exp.folds, "classes": ", ".join(table.class_names)}, {"within dataset": cells})
    for r in results:
        click.echo(f"rho={r.rho:g}: macro F1 {r.f1_mean:.4f} ± {r.f1_std:.4f}, corr {r.corr_mean:.4f} ± {r.corr_std:.4f}")


@main.command()
@_common
@_data
@_training
@click.option("--test", multiple=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--test-domain", default="shifted", show_default=True, help="Domain preset for the generated test set.")
@click.option("--test-subjects", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--baseline/--no-baseline", default=True, show_default=True, help="Add a paired rho=0 run.")
@_command
def crosseval(opts: Dict[str, Any]) -> None:
    """Fold models scored on other datasets, restricted to the shared classes."""
    if opts["data"] is not None and not opts["test"]:
        raise ConfigError("--test is required together with --data")
    s = _start("crosseval", opts)
    exp = build_experiment(s.run)

    if opts["test"]:
        table = _dataset(s, opts["data"])
        tests = {p.stem: read_dataset(p) for p in opts["test"]}
    else:
        spec = build_generator_spec(s.run, s.seed)
        domain = get_domain(opts["test_domain"]) if "domain" not in s.run.sections else build_domain(s.run)
        table, shifted = generate_cross_domain(spec, domain, opts["test_subjects"])
        if exp.select_threshold is not None:
            table = table.select_correlated(exp.select_threshold, exp.signed_selection)
        tests = {domain.name or "target": shifted}

    cfg = build_train_config(s.run, s.seed, table.space)
    rows: List[dict] = []
    payload: List[dict] = []
    per_test: Dict[str, List[ExperimentResult]] = {}
    for balancer in _balancers(s, opts["balance"]):
        for rho in _paired_rhos(cfg.loss.rho, opts["baseline"]):
            res = cross_eval(
                table,
                tests,
                exp.folds,
                _with_rho(cfg, rho),
                balancer=balancer,
                threshold=exp.threshold,
                binarize_corr=exp.binarize_corr,
            )
            payload.append(res.to_dict())
            for name, r in [("within", res.within), *res.per_test.items()]:
                rows.append({"dataset": name, **r.summary_row()})
                per_test.setdefault(name, []).append(r)
            _write_histories(s.writer, "crosseval", [res.within])

    s.writer.write_frame("cross.csv", pd.DataFrame(rows))
    s.writer.write_json("results.json", payload)

    highlights = {f"dataset: {name}": [row.as_cells() for row in compare_rhos(rs)] for name, rs in per_test.items()}
    _finish(s, {}, {"test sets": ", ".join(tests)}, highlights)
    for row in rows:
        click.echo(
            f"{row['dataset']} rho={row['rho']:g}: macro F1 {row['f1_mean']:.4f} ± {row['f1_std']:.4f}, "
            f"corr {row['corr_mean']:.4f} ± {row['corr_std']:.4f}"
        )


@main.command()
@_common
@_data
@_training
@click.option("--task", default=None, help="Task to calibrate on (all tasks when omitted).")
@click.option("--rhos", default=None, help="Comma-separated rho values (default 0,0.45).")
@click.option("--finetune-epochs", type=click.IntRange(min=0), default=None)
@_command
def calibrate(opts: Dict[str, Any]) -> None:
    """Leave-one-task-out training, then finetuning on half of the held-out task's subjects."""
    s = _start("calibrate", opts)
    table = _dataset(s, opts["data"])
    exp = build_experiment(s.run)
    cfg = build_train_config(s.run, s.seed, table.space)
    rhos = exp.rhos if s.run.get("experiment", "rhos") is not None else CALIBRATION_RHOS
    tasks = [opts["task"]] if opts["task"] else list(table.task_names)

    results = []
    for rho in rhos:
        results.extend(
            calibrate_all_tasks(
                table,
                _with_rho(cfg, rho),
                exp.finetune_epochs,
                tasks=tasks,
                balancer=build_balancer(s.run),
                threshold=exp.threshold,
            )
        )

    s.writer.write_frame("calibration.csv", calibration_frame(results))
    s.writer.write_frame("calibration_long.csv", pd.DataFrame([c.to_row() for c in results]))
    s.writer.write_json("results.json", [c.to_dict() for c in results])
    for c in results:
        if c.finetune_history:
            s.writer.write_text(f"histories/{c.task}_{rho_label(c.rho)}.csv", history_csv(list(c.finetune_history)))

    _finish(s, {"calibration": [c.to_row() for c in results]}, {"finetune epochs": exp.finetune_epochs})
    for c in results:
        click.echo(
            f"{c.task} rho={c.rho:g}: corr {c.before.corr_distance:.4f} -> {c.after.corr_distance:.4f}, "
            f"macro F1 {c.before.macro_f1:.4f} -> {c.after.macro_f1:.4f}"
        )


@main.command()
@_common
@click.option("--data", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--predictions", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option(
    "--checkpoint",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Saved model; the matrix is taken over its predictions on the dataset.",
)
@click.option("--profile", type=click.Choice(profile_names(), case_sensitive=False), default=None)
@click.option("--binarize", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True), default=None)
@click.option("--by-task", is_flag=True, help="Also write one matrix per task (datasets only).")
@_command
def corrmat(opts: Dict[str, Any]) -> None:
    """Label or prediction correlation matrix as CSV, JSON and a PNG heatmap."""
    if opts["predictions"] is not None and (opts["data"] is not None or opts["checkpoint"] is not None):
        raise click.UsageError("--predictions cannot be combined with --data or --checkpoint")
    s = _start("corrmat", opts)

    def binarized(m: np.ndarray) -> np.ndarray:
        return (m >= opts["binarize"]).astype(np.float64) if opts["binarize"] is not None else m

    matrices: Dict[str, tuple] = {}
    if opts["predictions"] is not None:
        yhat, names = read_predictions(opts["predictions"])
        matrices["corr"] = (binarized(yhat), names)
    else:
        table = read_dataset(opts["data"]) if opts["data"] is not None else generate(build_generator_spec(s.run, s.seed))
        m = table.labels
        if opts["checkpoint"] is not None:
            m = binarized(_checkpoint_predictions(opts["checkpoint"], table))
        matrices["corr"] = (m, table.class_names)
        if opts["by_task"]:
            for task in table.task_names:
                rows = table.task_ids == task
                if int(rows.sum()) >= 2:
                    matrices[f"corr_{task}"] = (m[rows], table.class_names)

    summary: Dict[str, Any] = {}
    for stem, (m, names) in matrices.items():
        corr = correlation_matrix(m, SIGMA_FLOOR, names)
        s.writer.write_text(f"{stem}.csv", corr_csv_text(corr))
        s.writer.write_json(f"{stem}.json", corr_json(corr))
        s.writer.write_bytes(f"{stem}.png", heatmap_png_bytes(corr, title=stem))
        off = corr.valid & ~np.eye(corr.U, dtype=bool)
        summary[f"{stem} max |off-diagonal|"] = float(np.abs(corr.values[off]).max()) if off.any() else 0.0

    _finish(s, {}, summary)
    click.echo(f"wrote {len(matrices)} matrices to {s.writer.root}")


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("runs"), show_default=True)
@click.option("--instances", type=click.IntRange(min=1), default=None, help="Random cases (default 100).")
@_command
def gradcheck(opts: Dict[str, Any]) -> int:
    """Finite-difference check of the analytic gradients."""
    s = _start("gradcheck", opts)
    kwargs = {"instances": opts["instances"]} if opts["instances"] else {}
    report = run_gradcheck(seed=s.seed, **kwargs)
    s.writer.write_json("gradcheck.json", report.to_dict())

    worst = report.worst
    summary = {"max relative error": report.max_error, "tolerance": report.tolerance, "passed": report.passed}
    _finish(s, {"worst case": [asdict(worst)] if worst else []}, summary)
    click.echo(f"max relative error {report.max_error:.3e} over {len(report.cases)} cases (tolerance {report.tolerance:g})")
    return 0 if report.passed else 1


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Runs the command line; returns the process exit code."""
    try:
        rv = main.main(args=list(argv) if argv is not None else None, prog_name="cooc", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 1
    except CoocError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except OSError as e:
        click.echo(f"error: {e.strerror or e}: {e.filename}" if e.filename else f"error: {e}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0
