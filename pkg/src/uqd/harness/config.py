"""Experiment configuration in INI form.

Grammar (all keys optional unless marked)::

    [experiment]
    generations = 500          ; steps after initialisation
    replications = 5
    niches = 1024              ; k, number of CVT centroids
    sampling_sizes = 256, 1024, 4096, 16384
    metric_cadence = 50        ; corrected metrics every this many generations
    m_reevals = 512            ; M for corrected archives
    correction_mode = in-cell-selector   ; or best-of-cell
    seed = 0
    cvt_samples = 50000
    cvt_iterations = 100

    [task]
    name = arm                 ; required: arm | het_sphere
    genotype_dim = 8
    fitness_std = 0.01         ; without any noise key the task keeps its default noise;
    descriptor_std = 0.01      ; once one is given, missing ones are 0
    heteroscedastic_gain = 0

    [algorithm LABEL]          ; one section per algorithm, at least one
    variant = ME               ; required, see uqd.algorithms.Variant
    samples = 32               ; N, sampling variants only
    depth = 2                  ; D, deep archives only
    sampling_sizes = 4096      ; overrides the experiment list
    sigma1 = 0.005
    sigma2 = 0.05
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..algorithms import AlgorithmConfig, Variant
from ..core import ConfigError
from ..metrics import DEFAULT_M, CorrectionMode
from ..tasks import NoiseModel, Task, make_task
from ..variation import VariationParams

__all__ = ["TaskConfig", "AlgorithmEntry", "ExperimentConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class TaskConfig:
    name: str
    genotype_dim: int | None = None
    noise: NoiseModel | None = None

    def build(self) -> Task:
        return make_task(self.name, self.genotype_dim, self.noise)


@dataclass(frozen=True)
class AlgorithmEntry:
    label: str
    variant: Variant
    samples_per_offspring: int | None = None
    depth: int | None = None
    sampling_sizes: tuple[int, ...] | None = None
    variation: VariationParams = field(default_factory=VariationParams)

    def config(self, sampling_size: int) -> AlgorithmConfig:
        return AlgorithmConfig(self.variant, sampling_size, self.samples_per_offspring, self.depth, self.variation)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig
    algorithms: tuple[AlgorithmEntry, ...]
    sampling_sizes: tuple[int, ...] = (256, 1024, 4096, 16384)
    generations: int = 500
    replications: int = 5
    niches: int = 1024
    metric_cadence: int = 50
    m_reevals: int = DEFAULT_M
    correction_mode: CorrectionMode = CorrectionMode.IN_CELL
    seed: int = 0
    cvt_samples: int = 50_000
    cvt_iterations: int = 100

    def __post_init__(self) -> None:
        for name in ("generations", "replications", "niches", "metric_cadence", "cvt_samples", "cvt_iterations"):
            if getattr(self, name) < 1:
                raise ConfigError(f"experiment.{name} must be positive, got {getattr(self, name)}")
        if self.m_reevals < 2:
            raise ConfigError(f"experiment.m_reevals must be >= 2, got {self.m_reevals}")
        if not self.sampling_sizes or min(self.sampling_sizes) < 1:
            raise ConfigError("experiment.sampling_sizes must be a non-empty list of positive integers")
        if self.seed < 0:
            raise ConfigError("experiment.seed must be nonnegative")
        if not self.algorithms:
            raise ConfigError("at least one [algorithm NAME] section is required")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate algorithm labels in {labels}")
        if self.niches > self.cvt_samples:
            raise ConfigError("experiment.niches cannot exceed experiment.cvt_samples")

    def sizes_for(self, entry: AlgorithmEntry) -> tuple[int, ...]:
        return entry.sampling_sizes if entry.sampling_sizes is not None else self.sampling_sizes


def _ints(raw: str, where: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected a list of integers, got {raw!r}") from None
    if not values:
        raise ConfigError(f"{where}: empty list")
    return values


def _get(section: configparser.SectionProxy, key: str, kind, where: str, default=None):
    if key not in section:
        return default
    raw = section[key]
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}.{key}: cannot read {raw!r} as {kind.__name__}") from None


_EXPERIMENT_KEYS = {
    "generations", "replications", "niches", "sampling_sizes", "metric_cadence", "m_reevals",
    "correction_mode", "seed", "cvt_samples", "cvt_iterations",
}
_TASK_KEYS = {"name", "genotype_dim", "fitness_std", "descriptor_std", "heteroscedastic_gain"}
_ALGO_KEYS = {"variant", "samples", "depth", "sampling_sizes", "sigma1", "sigma2"}


def _check_keys(section: configparser.SectionProxy, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"[{where}]: unknown key(s) {unknown}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config; errors name the offending field."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), default_section="__defaults__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    exp = parser["experiment"] if parser.has_section("experiment") else parser["__defaults__"]
    _check_keys(exp, _EXPERIMENT_KEYS, "experiment")
    if not parser.has_section("task") or "name" not in parser["task"]:
        raise ConfigError("task.name is required")
    task_sec = parser["task"]
    _check_keys(task_sec, _TASK_KEYS, "task")
    noise = None
    if any(k in task_sec for k in ("fitness_std", "descriptor_std", "heteroscedastic_gain")):
        noise = NoiseModel(
            _get(task_sec, "fitness_std", float, "task", 0.0),
            _get(task_sec, "descriptor_std", float, "task", 0.0),
            _get(task_sec, "heteroscedastic_gain", float, "task", 0.0),
        )
    task = TaskConfig(task_sec["name"].strip(), _get(task_sec, "genotype_dim", int, "task"), noise)
    task.build()  # surfaces unknown names and bad dimensions early

    algorithms = []
    for name in parser.sections():
        if not name.startswith("algorithm"):
            continue
        label = name[len("algorithm"):].strip()
        where = f"algorithm {label}"
        if not label:
            raise ConfigError("algorithm sections need a label, e.g. [algorithm ME]")
        sec = parser[name]
        _check_keys(sec, _ALGO_KEYS, where)
        if "variant" not in sec:
            raise ConfigError(f"{where}.variant is required")
        try:
            variant = Variant(sec["variant"].strip())
        except ValueError:
            raise ConfigError(f"{where}.variant: unknown {sec['variant']!r}; expected one of {[v.value for v in Variant]}") from None
        sizes = _ints(sec["sampling_sizes"], f"{where}.sampling_sizes") if "sampling_sizes" in sec else None
        variation = VariationParams(_get(sec, "sigma1", float, where, 0.005), _get(sec, "sigma2", float, where, 0.05))
        entry = AlgorithmEntry(label, variant, _get(sec, "samples", int, where), _get(sec, "depth", int, where), sizes, variation)
        try:
            entry.config(1 << 20)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        algorithms.append(entry)

    kwargs = {}
    for key, kind in (
        ("generations", int), ("replications", int), ("niches", int), ("metric_cadence", int),
        ("m_reevals", int), ("seed", int), ("cvt_samples", int), ("cvt_iterations", int),
    ):
        value = _get(exp, key, kind, "experiment")
        if value is not None:
            kwargs[key] = value
    if "sampling_sizes" in exp:
        kwargs["sampling_sizes"] = _ints(exp["sampling_sizes"], "experiment.sampling_sizes")
    if "correction_mode" in exp:
        try:
            kwargs["correction_mode"] = CorrectionMode(exp["correction_mode"].strip())
        except ValueError:
            raise ConfigError(f"experiment.correction_mode: unknown {exp['correction_mode']!r}") from None
    return ExperimentConfig(task=task, algorithms=tuple(algorithms), **kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())
