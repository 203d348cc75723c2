from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

from cooc.core.synthgen import DomainSpec, GeneratorSpec, TaskSpec
from cooc.errors import ConfigError

DESK_CLASSES = ("AU01", "AU02", "AU04", "AU06", "AU07", "AU12", "AU17")


@dataclass(frozen=True)
class Profile:
    name: str
    description: str
    generator: GeneratorSpec
    learning_rate: float
    epochs: int
    batch_size: int = 64

    def spec(self, seed: int, domain: DomainSpec | None = None) -> GeneratorSpec:
        return replace(self.generator, seed=seed, domain=domain or self.generator.domain)


_DESK_TASKS = (
    TaskSpec(
        "happiness",
        (0.15, 0.10, 0.05, 0.60, 0.50, 0.65, 0.15),
        (("AU06", "AU12", 0.6), ("AU06", "AU07", 0.4), ("AU07", "AU12", 0.4), ("AU01", "AU02", 0.5)),
    ),
    TaskSpec(
        "sadness",
        (0.40, 0.30, 0.50, 0.10, 0.20, 0.05, 0.50),
        (("AU01", "AU04", 0.3), ("AU04", "AU17", 0.4), ("AU01", "AU02", 0.4)),
    ),
    TaskSpec(
        "surprise",
        (0.60, 0.55, 0.05, 0.10, 0.10, 0.15, 0.10),
        (("AU01", "AU02", 0.8),),
    ),
    TaskSpec(
        "pain",
        (0.10, 0.05, 0.50, 0.45, 0.55, 0.20, 0.30),
        (("AU04", "AU07", 0.6), ("AU06", "AU07", 0.6), ("AU04", "AU06", 0.4)),
    ),
)

# learning rates here override config.LEARNING_RATE for these world sizes
PROFILES = [
    Profile(
        name="desk",
        description="7 classes, 20 subjects, 4 expression-like tasks",
        generator=GeneratorSpec(
            class_names=DESK_CLASSES,
            D=16,
            S=20,
            tasks=_DESK_TASKS,
            samples_per_subject_per_task=100,
            feature_noise=2.0,
        ),
        learning_rate=1e-3,
        epochs=30,
    ),
    Profile(
        name="overfit",
        description="few subjects, wide and noisy features",
        generator=GeneratorSpec(
            class_names=DESK_CLASSES,
            D=48,
            S=10,
            tasks=_DESK_TASKS,
            samples_per_subject_per_task=20,
            feature_noise=2.5,
            prototype_scale=1.0,
        ),
        learning_rate=1e-3,
        epochs=40,
    ),
    Profile(
        name="tiny",
        description="test-scale: 4 classes, 6 subjects, 2 tasks",
        generator=GeneratorSpec(
            class_names=("c0", "c1", "c2", "c3"),
            D=6,
            S=6,
            tasks=(
                TaskSpec("t1", (0.5, 0.4, 0.3, 0.5), (("c0", "c1", 0.6),)),
                TaskSpec("t2", (0.3, 0.5, 0.5, 0.4), (("c2", "c3", 0.5),)),
            ),
            samples_per_subject_per_task=30,
        ),
        learning_rate=1e-2,
        epochs=5,
        batch_size=32,
    ),
    Profile(
        name="single-task",
        description="one coupled task, 20000 rows, for generator fidelity checks",
        generator=GeneratorSpec(
            class_names=("c0", "c1", "c2", "c3"),
            D=8,
            S=20,
            tasks=(TaskSpec("only", (0.5, 0.5, 0.4, 0.3), (("c0", "c1", 0.8),)),),
            samples_per_subject_per_task=1000,
        ),
        learning_rate=1e-3,
        epochs=10,
    ),
    Profile(
        name="uncoupled",
        description="one task with independent classes, 10000 rows",
        generator=GeneratorSpec(
            class_names=("c0", "c1", "c2", "c3"),
            D=8,
            S=20,
            tasks=(TaskSpec("only", (0.5, 0.4, 0.3, 0.5)),),
            samples_per_subject_per_task=500,
        ),
        learning_rate=1e-3,
        epochs=10,
    ),
]

DOMAINS = {
    "source": DomainSpec(name="source"),
    "shifted": DomainSpec(name="shifted", feature_noise_scale=1.5, feature_rotation_seed=1, rotation_strength=0.3),
    "far": DomainSpec(name="far", feature_noise_scale=2.5, feature_rotation_seed=2, rotation_strength=0.6),
}


def profile_names() -> Tuple[str, ...]:
    return tuple(p.name for p in PROFILES)


def get_profile(name: str) -> Profile:
    for p in PROFILES:
        if p.name.lower() == name.lower():
            return p
    raise ConfigError(f"unknown profile '{name}' (known: {', '.join(profile_names())})")


def get_domain(name: str) -> DomainSpec:
    try:
        return DOMAINS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown domain '{name}' (known: {', '.join(DOMAINS)})") from None
