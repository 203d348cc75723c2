from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import expm
from scipy.stats import norm

from cooc.core.correlation import LabelSpace, correlation_matrix
from cooc.core.dataset import DatasetTable
from cooc.errors import ConfigError, GenerationError

log = logging.getLogger(__name__)

# latent correlations are searched in [-LATENT_LIMIT, LATENT_LIMIT]
LATENT_LIMIT = 0.9999
FEASIBILITY_TOL = 1e-3
PSD_TOL = 1e-10

Coupling = Tuple[str, str, float]


@dataclass(frozen=True)
class TaskSpec:
    name: str
    base_activation: Tuple[float, ...]
    coupling: Tuple[Coupling, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_activation", tuple(float(p) for p in self.base_activation))
        object.__setattr__(self, "coupling", tuple((str(a), str(b), float(s)) for a, b, s in self.coupling))
        for p in self.base_activation:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"task '{self.name}': activation probability {p} outside [0, 1]")
        seen = set()
        for a, b, s in self.coupling:
            if a == b:
                raise ConfigError(f"task '{self.name}': class '{a}' coupled with itself")
            key = frozenset((a, b))
            if key in seen:
                raise ConfigError(f"task '{self.name}': pair ({a}, {b}) coupled twice")
            seen.add(key)
            if not -1.0 <= s <= 1.0:
                raise ConfigError(f"task '{self.name}': coupling strength {s} outside [-1, 1]")


@dataclass(frozen=True)
class DomainSpec:
    name: Optional[str] = None
    feature_noise_scale: float = 0.0
    feature_rotation_seed: Optional[int] = None
    marginal_drift: Tuple[float, ...] = ()
    rotation_strength: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "marginal_drift", tuple(float(d) for d in self.marginal_drift))
        if self.feature_noise_scale < 0:
            raise ConfigError(f"feature_noise_scale must be >= 0, got {self.feature_noise_scale}")
        if self.rotation_strength < 0:
            raise ConfigError(f"rotation_strength must be >= 0, got {self.rotation_strength}")
        for d in self.marginal_drift:
            if not -1.0 <= d <= 1.0:
                raise ConfigError(f"marginal drift {d} outside [-1, 1]")

    @property
    def is_identity(self) -> bool:
        return (
            self.feature_noise_scale == 0.0
            and (self.feature_rotation_seed is None or self.rotation_strength == 0.0)
            and not any(self.marginal_drift)
        )

    def drift_for(self, U: int) -> np.ndarray:
        if not self.marginal_drift:
            return np.zeros(U)
        if len(self.marginal_drift) != U:
            raise ConfigError(f"marginal_drift has {len(self.marginal_drift)} entries for U={U}")
        return np.asarray(self.marginal_drift)


@dataclass(frozen=True)
class GeneratorSpec:
    class_names: Tuple[str, ...]
    D: int
    S: int
    tasks: Tuple[TaskSpec, ...]
    samples_per_subject_per_task: int
    domain: DomainSpec = field(default_factory=DomainSpec)
    seed: int = 0
    feature_noise: float = 1.0
    subject_scale: float = 0.5
    prototype_scale: float = 1.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        LabelSpace(self.class_names)
        counts = {"D": self.D, "S": self.S, "samples_per_subject_per_task": self.samples_per_subject_per_task}
        for name, v in counts.items():
            if v < 1:
                raise ConfigError(f"{name} must be positive, got {v}")
        if not self.tasks:
            raise ConfigError("at least one task is required")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ConfigError("task names must be unique")
        for t in self.tasks:
            if len(t.base_activation) != self.U:
                raise ConfigError(f"task '{t.name}' has {len(t.base_activation)} activations for U={self.U}")
            for a, b, _ in t.coupling:
                for c in (a, b):
                    if c not in self.class_names:
                        raise ConfigError(f"task '{t.name}' couples unknown class '{c}'")
        if min(self.feature_noise, self.subject_scale, self.prototype_scale) < 0:
            raise ConfigError("noise and scale parameters must be non-negative")

    @property
    def U(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "GeneratorSpec":
        d = dict(d)
        d["tasks"] = tuple(
            TaskSpec(
                name=t["name"],
                base_activation=tuple(t["base_activation"]),
                coupling=tuple(tuple(c) for c in t.get("coupling", ())),
            )
            for t in d["tasks"]
        )
        d["domain"] = DomainSpec(**d.get("domain", {}))
        d["class_names"] = tuple(d["class_names"])
        return GeneratorSpec(**d)


def _orthant(h: float, k: float, r: float) -> float:
    """P(Z1 > h, Z2 > k) for standard normals with correlation r."""
    base = float(norm.sf(h) * norm.sf(k))
    if r == 0.0:
        return base

    def density(t: float) -> float:
        s = 1.0 - t * t
        return np.exp(-(h * h - 2.0 * t * h * k + k * k) / (2.0 * s)) / (2.0 * np.pi * np.sqrt(s))

    extra, _ = integrate.quad(density, 0.0, r, limit=200)
    return base + extra


def _phi_at(p: float, q: float, r: float) -> float:
    h, k = norm.isf(p), norm.isf(q)
    joint = _orthant(h, k, r)
    return (joint - p * q) / np.sqrt(p * (1 - p) * q * (1 - q))


@lru_cache(maxsize=4096)
def latent_correlation(p: float, q: float, target: float) -> Optional[float]:
    """
    Latent normal correlation whose thresholded indicators (marginals p, q)
    have Phi coefficient `target`. None when the target is not reachable.
    """
    if target == 0.0:
        return 0.0
    if p in (0.0, 1.0) or q in (0.0, 1.0):
        return None
    lo, hi = _phi_at(p, q, -LATENT_LIMIT), _phi_at(p, q, LATENT_LIMIT)
    if target < lo - FEASIBILITY_TOL or target > hi + FEASIBILITY_TOL:
        return None
    if target <= lo:
        return -LATENT_LIMIT
    if target >= hi:
        return LATENT_LIMIT
    root = optimize.brentq(lambda r: _phi_at(p, q, r) - target, -LATENT_LIMIT, LATENT_LIMIT, xtol=1e-10)
    return float(root)


def _latent_factor(task: TaskSpec, marginals: np.ndarray, space: LabelSpace) -> np.ndarray:
    """Returns L with L @ L.T equal to the task's latent correlation matrix."""
    R = np.eye(space.U)
    bad: List[Tuple[str, str]] = []
    for a, b, strength in task.coupling:
        i, j = space.index(a), space.index(b)
        r = latent_correlation(float(marginals[i]), float(marginals[j]), strength)
        if r is None:
            bad.append((a, b))
            continue
        R[i, j] = R[j, i] = r
    if bad:
        raise GenerationError(f"task '{task.name}': coupling targets not realizable for the marginals", bad)

    w, V = np.linalg.eigh(R)
    if w.min() < -PSD_TOL:
        pairs = [(a, b) for a, b, _ in task.coupling]
        raise GenerationError(f"task '{task.name}': couplings are jointly inconsistent", pairs)
    return V * np.sqrt(np.clip(w, 0.0, None))


def rotation_matrix(D: int, seed: int, strength: float = 1.0) -> np.ndarray:
    """Orthogonal matrix expm(strength * A) for a seeded random skew-symmetric A."""
    g = np.random.default_rng(seed).standard_normal((D, D))
    skew = (g - g.T) / np.sqrt(2.0)
    return expm(strength * skew)


def _transform_features(x: np.ndarray, domain: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    if domain.feature_rotation_seed is not None and domain.rotation_strength > 0:
        x = x @ rotation_matrix(x.shape[1], domain.feature_rotation_seed, domain.rotation_strength)
    if domain.feature_noise_scale > 0:
        x = x + domain.feature_noise_scale * rng.standard_normal(x.shape)
    return x


def generate(spec: GeneratorSpec) -> DatasetTable:
    space = LabelSpace(spec.class_names)
    U, D, T = spec.U, spec.D, len(spec.tasks)
    drift = spec.domain.drift_for(U)

    root = np.random.SeedSequence(spec.seed)
    proto_seq, subject_seq, domain_seq, *block_seqs = root.spawn(3 + spec.S * T)

    prototypes = spec.prototype_scale * np.random.default_rng(proto_seq).standard_normal((U, D))
    offsets = spec.subject_scale * np.random.default_rng(subject_seq).standard_normal((spec.S, D))

    factors: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for task in spec.tasks:
        marginals = np.asarray(task.base_activation) + drift
        if marginals.min() < 0.0 or marginals.max() > 1.0:
            raise GenerationError(f"task '{task.name}': drifted activation probabilities leave [0, 1]")
        factors[task.name] = (_latent_factor(task, marginals, space), norm.isf(marginals))

    n = spec.samples_per_subject_per_task
    xs, ys, subj, tasks = [], [], [], []
    for s in range(spec.S):
        for t, task in enumerate(spec.tasks):
            rng = np.random.default_rng(block_seqs[s * T + t])
            L, thresholds = factors[task.name]
            z = rng.standard_normal((n, U)) @ L.T
            labels = (z > thresholds).astype(np.int8)
            x = labels @ prototypes + offsets[s] + spec.feature_noise * rng.standard_normal((n, D))
            xs.append(x)
            ys.append(labels)
            subj.extend([f"s{s:02d}"] * n)
            tasks.extend([task.name] * n)

    features = _transform_features(np.concatenate(xs), spec.domain, np.random.default_rng(domain_seq))
    m = features.shape[0]
    log.info("generated %d rows (%d subjects, %d tasks, U=%d, D=%d)", m, spec.S, T, U, D)
    return DatasetTable(
        features=features,
        labels=np.concatenate(ys),
        subject_ids=subj,
        task_ids=tasks,
        domain_ids=[spec.domain.name or "source"] * m,
        space=space,
        task_names=tuple(t.name for t in spec.tasks),
    )


def _drift_labels(labels: np.ndarray, drift: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    draws = rng.random(labels.shape)
    for k, d in enumerate(drift):
        col = labels[:, k]
        p = float(col.mean()) if col.size else 0.0
        room = (1.0 - p) if d > 0 else p
        if d != 0 and abs(d) > room:
            log.warning("drift %+.3f on column %d exceeds the available mass %.3f; clipped", d, k, room)
        if d > 0 and p < 1.0:
            flip = (col == 0) & (draws[:, k] < min(1.0, d / (1.0 - p)))
            out[flip, k] = 1
        elif d < 0 and p > 0.0:
            flip = (col == 1) & (draws[:, k] < min(1.0, -d / p))
            out[flip, k] = 0
    return out


def shift_domain(table: DatasetTable, domain: DomainSpec, seed: int) -> DatasetTable:
    """
    Re-render a table under another recording domain: rotate and perturb
    features, and relabel per marginal drift. Zero drift keeps labels intact.
    """
    if domain.is_identity:
        return table
    rng = np.random.default_rng(seed)
    features = _transform_features(table.features, domain, rng)
    drift = domain.drift_for(table.space.U)
    labels = _drift_labels(table.labels, drift, rng) if np.any(drift) else table.labels
    domain_ids = [domain.name] * table.n_rows if domain.name else table.domain_ids
    return DatasetTable(
        features=features,
        labels=labels,
        subject_ids=table.subject_ids,
        task_ids=table.task_ids,
        domain_ids=domain_ids,
        space=table.space,
        task_names=table.task_names,
    )


def generate_cross_domain(
    spec: GeneratorSpec, domain: DomainSpec, test_subjects: int
) -> tuple[DatasetTable, DatasetTable]:
    """
    Source and target tables from one world: same prototypes and task structure,
    disjoint subjects. The extra `test_subjects` subjects are re-rendered under `domain`.
    """
    if test_subjects < 1:
        raise ConfigError(f"test_subjects must be positive, got {test_subjects}")
    full = generate(replace(spec, S=spec.S + test_subjects))
    held = [f"s{s:02d}" for s in range(spec.S, spec.S + test_subjects)]
    rows = full.rows_for_subjects(held)
    shift_seed = int(np.random.SeedSequence([spec.seed, 1]).generate_state(1)[0])
    return full.take(~rows), shift_domain(full.take(rows), domain, shift_seed)


def split_by_task(table: DatasetTable, task_name: str) -> tuple[DatasetTable, DatasetTable]:
    """Returns (without, only) for the named task, row order preserved."""
    if task_name not in table.task_names:
        raise ConfigError(f"unknown task '{task_name}' (known: {', '.join(table.task_names)})")
    only = table.task_ids == task_name
    return table.take(~only), table.take(only)


def empirical_couplings(table: DatasetTable, pairs: Sequence[Tuple[str, str]]) -> Dict[Tuple[str, str], float]:
    corr = correlation_matrix(table.labels)
    return {(a, b): float(corr.values[table.space.index(a), table.space.index(b)]) for a, b in pairs}
