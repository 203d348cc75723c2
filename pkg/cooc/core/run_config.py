from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from cooc.config import (
    DECISION_THRESHOLD,
    DEFAULT_FOLDS,
    DEFAULT_RHOS,
    FINETUNE_EPOCHS,
)
from cooc.core.balancing import BalancerConfig
from cooc.core.correlation import LabelSpace, upper_triangle_mask
from cooc.core.loss import LossConfig
from cooc.core.synthgen import DomainSpec, GeneratorSpec
from cooc.core.trainer import TrainConfig
from cooc.errors import CoocError, ConfigError
from cooc.profiles import Profile, get_domain, get_profile
from cooc.util.naming import parse_pairs


@dataclass(frozen=True)
class ValidationResult:
    level: str  # "INFO" | "WARNING" | "ERROR"
    message: str


def count_levels(results: Iterable[ValidationResult]) -> tuple[int, int, int]:
    """Returns (errors, warnings, infos)."""
    e = w = i = 0
    for r in results:
        if r.level == "ERROR":
            e += 1
        elif r.level == "WARNING":
            w += 1
        else:
            i += 1
    return e, w, i


_NUM = (int, float)

# section -> key -> accepted python types (None allowed where listed)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "generator": {
        "profile": (str,),
        "D": (int,),
        "S": (int,),
        "samples_per_subject_per_task": (int,),
        "feature_noise": _NUM,
        "subject_scale": _NUM,
        "prototype_scale": _NUM,
    },
    "domain": {
        "name": (str,),
        "feature_noise_scale": _NUM,
        "feature_rotation_seed": (int, type(None)),
        "rotation_strength": _NUM,
        "marginal_drift": (list,),
    },
    "train": {
        "learning_rate": _NUM,
        "clip_value": _NUM,
        "batch_size": (int,),
        "epochs": (int,),
        "hidden": (int,),
        "dropout": _NUM,
    },
    "loss": {
        "rho": _NUM,
        "epsilon": _NUM,
        "sigma_floor": _NUM,
        "target": (str,),
        "excluded_pairs": (list,),
    },
    "balance": {
        "enabled": (bool,),
        "lambda_weight": _NUM,
        "iterations": (int,),
        "max_occurrence": (int,),
    },
    "experiment": {
        "folds": (int,),
        "rhos": (list,),
        "finetune_epochs": (int,),
        "threshold": _NUM,
        "select_threshold": _NUM + (type(None),),
        "signed_selection": (bool,),
        "binarize_corr": (bool,),
    },
}


@dataclass(frozen=True)
class ExperimentSettings:
    folds: int = DEFAULT_FOLDS
    rhos: Tuple[float, ...] = DEFAULT_RHOS
    finetune_epochs: int = FINETUNE_EPOCHS
    threshold: float = DECISION_THRESHOLD
    select_threshold: Optional[float] = None
    signed_selection: bool = False
    binarize_corr: bool = False

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if not self.rhos:
            raise ConfigError("rhos must not be empty")
        for r in self.rhos:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"rho value {r} outside [0, 1]")
        if self.finetune_epochs < 0:
            raise ConfigError(f"finetune_epochs must be non-negative, got {self.finetune_epochs}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class RunConfig:
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.sections.get(section, {}).get(key, default)

    def merged(self, overrides: Dict[str, Dict[str, Any]]) -> "RunConfig":
        """Flag values win over file values; None means 'flag not given'."""
        out = {name: dict(values) for name, values in self.sections.items()}
        for section, values in overrides.items():
            for key, value in values.items():
                if value is not None:
                    out.setdefault(section, {})[key] = value
        return RunConfig(out)

    def snapshot(self) -> dict:
        return {name: dict(sorted(values.items())) for name, values in sorted(self.sections.items())}


def _type_ok(value: Any, accepted: tuple) -> bool:
    # bool is an int subclass; only accept it where bool is asked for
    if isinstance(value, bool) and bool not in accepted:
        return False
    return isinstance(value, accepted)


def check_schema(raw: Any) -> List[ValidationResult]:
    results: List[ValidationResult] = []
    if not isinstance(raw, dict):
        return [ValidationResult("ERROR", "config must be a JSON object of sections")]

    for section, values in raw.items():
        keys = SCHEMA.get(section)
        if keys is None:
            results.append(
                ValidationResult("ERROR", f"unknown section '{section}' (known: {', '.join(SCHEMA)})")
            )
            continue
        if not isinstance(values, dict):
            results.append(ValidationResult("ERROR", f"section '{section}' must be an object"))
            continue
        for key, value in values.items():
            accepted = keys.get(key)
            if accepted is None:
                results.append(ValidationResult("ERROR", f"unknown key '{section}.{key}'"))
            elif not _type_ok(value, accepted):
                results.append(
                    ValidationResult("ERROR", f"'{section}.{key}' has the wrong type ({type(value).__name__})")
                )
    return results


def read_config_file(path: Path) -> Tuple[Optional[dict], Optional[str]]:
    """Returns (raw dict, error message)."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        return None, f"cannot read config {path}: {e.strerror or e}"
    try:
        return json.loads(text), None
    except json.JSONDecodeError as e:
        return None, f"config {path.name} is not valid JSON (line {e.lineno}: {e.msg})"


def build_profile(run: RunConfig) -> Profile:
    return get_profile(run.get("generator", "profile", "desk"))


def build_domain(run: RunConfig) -> DomainSpec:
    values = dict(run.sections.get("domain", {}))
    name = values.pop("name", None)
    if "marginal_drift" in values:
        values["marginal_drift"] = tuple(values["marginal_drift"])
    if name is None:
        return DomainSpec(**values)
    try:
        base = get_domain(name)
    except ConfigError:
        base = DomainSpec(name=name)
    return replace(base, **values)


def build_generator_spec(run: RunConfig, seed: int) -> GeneratorSpec:
    profile = build_profile(run)
    values = {k: v for k, v in run.sections.get("generator", {}).items() if k != "profile"}
    spec = replace(profile.generator, **values) if values else profile.generator
    domain = build_domain(run) if "domain" in run.sections else spec.domain
    return replace(spec, seed=seed, domain=domain)


def build_loss_config(run: RunConfig, space: Optional[LabelSpace] = None) -> LossConfig:
    values = dict(run.sections.get("loss", {}))
    excluded = values.pop("excluded_pairs", None)
    mask = None
    if excluded:
        if space is None:
            raise ConfigError("excluded_pairs need a label space")
        mask = upper_triangle_mask(space, parse_pairs([str(t) for t in excluded], space))
    return LossConfig(mask=mask, **values)


def build_train_config(run: RunConfig, seed: int, space: Optional[LabelSpace] = None) -> TrainConfig:
    """Profile training defaults, then the train section, then flags (already merged)."""
    profile = build_profile(run)
    values = {
        "learning_rate": profile.learning_rate,
        "epochs": profile.epochs,
        "batch_size": profile.batch_size,
    }
    values.update(run.sections.get("train", {}))
    return TrainConfig(seed=seed, loss=build_loss_config(run, space), **values)


def build_balancer(run: RunConfig) -> Optional[BalancerConfig]:
    values = dict(run.sections.get("balance", {}))
    if not values.pop("enabled", False):
        return None
    return BalancerConfig(**values)


def build_experiment(run: RunConfig) -> ExperimentSettings:
    values = dict(run.sections.get("experiment", {}))
    if "rhos" in values:
        values["rhos"] = tuple(float(r) for r in values["rhos"])
    return ExperimentSettings(**values)


def _without(run: RunConfig, section: str, key: str) -> RunConfig:
    out = {
        name: {k: v for k, v in values.items() if (name, k) != (section, key)}
        for name, values in run.sections.items()
    }
    return RunConfig(out)


def validate_run_config(run: RunConfig) -> List[ValidationResult]:
    """Schema check plus a dry build of every section."""
    results = check_schema(run.sections)
    if any(r.level == "ERROR" for r in results):
        return results

    builders = (
        ("generator", lambda: build_generator_spec(run, seed=0)),
        # pair names are checked against the real label space at command time
        ("train", lambda: build_train_config(_without(run, "loss", "excluded_pairs"), seed=0)),
        ("balance", lambda: build_balancer(run)),
        ("experiment", lambda: build_experiment(run)),
    )
    for name, build in builders:
        try:
            build()
        except (CoocError, TypeError, ValueError) as e:
            results.append(ValidationResult("ERROR", f"{name}: {e}"))

    batch = run.get("train", "batch_size")
    if isinstance(batch, int) and 2 <= batch < 8:
        results.append(ValidationResult("WARNING", f"batch_size {batch}: batch correlations will be very noisy"))
    rho = run.get("loss", "rho")
    if rho == 1:
        results.append(ValidationResult("WARNING", "rho=1 removes the cross-entropy term entirely"))
    if run.get("loss", "target") == "dataset":
        results.append(ValidationResult("INFO", "CorrLoss target is the whole training split"))
    if not results:
        results.append(ValidationResult("INFO", "Configuration OK."))
    return results


def load_run_config(path: Optional[Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    raw, err = read_config_file(path)
    if err:
        raise ConfigError(err)
    schema = check_schema(raw)
    errors = [r.message for r in schema if r.level == "ERROR"]
    if errors:
        raise ConfigError("; ".join(errors))
    return RunConfig({k: dict(v) for k, v in raw.items()})
