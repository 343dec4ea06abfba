"""Generation steps of the MAP-Elites variants under a per-generation sampling budget.

Every step takes the stream of its generation and derives named sub-streams for
selection, mutation, evaluation and archive reevaluation. Draws are keyed by
offspring index, so two variants that produce the same offspring count with the
same per-offspring sample count consume exactly the same randomness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .archive import AdditionRule, Archive, Selector
from .core import ConfigError, RecordBatch, RngStream, running_mean_step, sample_mean
from .tasks import Task, evaluate_batch
from .tessellation import Centroids
from .variation import VariationParams, iso_line_batch, normals_needed

__all__ = [
    "Variant",
    "AlgorithmConfig",
    "BudgetPlan",
    "GenerationReport",
    "plan_budget",
    "median_evals_number",
    "make_archive",
    "initialize",
    "step_map_elites",
    "step_me_random",
    "step_me_sampling",
    "step_deep_grid",
    "step_dg_sampling",
    "step_archive_sampling",
    "step_pas",
    "STEPS",
    "Optimizer",
]

# sub-stream tags
_SELECT, _MUTATE, _EVAL, _REEVAL, _RANDOM = 1, 2, 3, 4, 5
_ARCHIVE, _INIT, _STEP = 10, 11, 12


class Variant(str, enum.Enum):
    ME = "ME"
    ME_RANDOM = "ME-Random"
    ME_SAMPLING = "ME-Sampling"
    DEEP_GRID = "DeepGrid"
    DG_SAMPLING = "DeepGridSampling"
    ARCHIVE_SAMPLING = "ArchiveSampling"
    PAS = "ParallelAdaptiveSampling"

    @property
    def reevaluates_archive(self) -> bool:
        return self in (Variant.ARCHIVE_SAMPLING, Variant.PAS)


_DEFAULT_SAMPLES = {Variant.ME_SAMPLING: 32, Variant.DG_SAMPLING: 8}
_DEFAULT_DEPTH = {
    Variant.DEEP_GRID: 32,
    Variant.DG_SAMPLING: 32,
    Variant.ARCHIVE_SAMPLING: 2,
    Variant.PAS: 2,
}
_RULE = {
    Variant.ME: (AdditionRule.ELITIST_FLAT, Selector.BEST),
    Variant.ME_RANDOM: (AdditionRule.ELITIST_FLAT, Selector.BEST),
    Variant.ME_SAMPLING: (AdditionRule.ELITIST_FLAT, Selector.BEST),
    Variant.DEEP_GRID: (AdditionRule.DEEP_REPLACE_RANDOM, Selector.ROULETTE),
    Variant.DG_SAMPLING: (AdditionRule.DEEP_REPLACE_RANDOM, Selector.ROULETTE),
    Variant.ARCHIVE_SAMPLING: (AdditionRule.DEEP_ELITIST, Selector.BEST),
    Variant.PAS: (AdditionRule.DEEP_ELITIST, Selector.BEST),
}


@dataclass(frozen=True)
class AlgorithmConfig:
    """Variant plus its budget parameters.

    ``samples_per_offspring`` (N) only matters for the two fixed-sampling
    variants and ``depth`` (D) only for the deep archives; both default to the
    tuned values when left as ``None``.
    """

    variant: Variant
    sampling_size: int
    samples_per_offspring: int | None = None
    depth: int | None = None
    variation: VariationParams = field(default_factory=VariationParams)

    def __post_init__(self) -> None:
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if self.samples_per_offspring is None:
            object.__setattr__(self, "samples_per_offspring", _DEFAULT_SAMPLES.get(variant, 1))
        if self.depth is None:
            object.__setattr__(self, "depth", _DEFAULT_DEPTH.get(variant, 1))
        if variant not in _DEFAULT_SAMPLES and self.samples_per_offspring != 1:
            raise ConfigError(f"{variant.value} evaluates each offspring once; N must be 1")
        if variant not in _DEFAULT_DEPTH and self.depth != 1:
            raise ConfigError(f"{variant.value} uses a flat archive; D must be 1")
        for name in ("sampling_size", "samples_per_offspring", "depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def rule(self) -> AdditionRule:
        return _RULE[self.variant][0]

    @property
    def selector(self) -> Selector:
        return _RULE[self.variant][1]

    def capacity(self, k: int) -> int:
        return k * self.depth

    def check(self, k: int) -> None:
        """Raise if the variant is undefined for this sampling size and archive size."""
        if self.variant.reevaluates_archive and self.sampling_size <= self.capacity(k):
            raise ConfigError(
                f"{self.variant.value} needs sampling_size > k*D = {self.capacity(k)}, "
                f"got {self.sampling_size}"
            )
        plan_budget(self, k)


@dataclass(frozen=True)
class BudgetPlan:
    n_offspring: int
    evals_per_offspring: int
    reeval_budget_reserved: int

    @property
    def total(self) -> int:
        return self.n_offspring * self.evals_per_offspring + self.reeval_budget_reserved


def plan_budget(config: AlgorithmConfig, k: int, n_evals: int = 1) -> BudgetPlan:
    """Split the sampling size between offspring evaluations and archive reevaluation.

    ``n_evals`` is the per-offspring sample count chosen by adaptive sampling;
    other variants ignore it. Remainders of integer division are forfeited.
    """
    s = config.sampling_size
    variant = config.variant
    if variant in (Variant.ME, Variant.ME_RANDOM, Variant.DEEP_GRID):
        plan = BudgetPlan(s, 1, 0)
    elif variant in (Variant.ME_SAMPLING, Variant.DG_SAMPLING):
        n = config.samples_per_offspring
        plan = BudgetPlan(s // n, n, 0)
    elif variant is Variant.ARCHIVE_SAMPLING:
        reserved = config.capacity(k)
        plan = BudgetPlan(s - reserved, 1, reserved)
    else:
        reserved = config.capacity(k)
        if n_evals < 1:
            raise ConfigError(f"n_evals must be positive, got {n_evals}")
        plan = BudgetPlan((s - reserved) // n_evals, n_evals, reserved)
    if plan.n_offspring < 1:
        raise ConfigError(
            f"{variant.value} with sampling_size={s} leaves {plan.n_offspring} offspring per generation"
        )
    return plan


def median_evals_number(archive: Archive) -> int:
    """Lower median of the evaluation counts of all stored records; 1 when empty."""
    mask = np.arange(archive.depth)[None, :] < archive.sizes[:, None]
    counts = np.sort(archive.counts[mask])
    if counts.size == 0:
        return 1
    return int(counts[(counts.size - 1) // 2])


@dataclass
class GenerationReport:
    generation: int
    evaluations: int
    reevaluations: int
    n_offspring: int
    evals_per_offspring: int
    added: int
    rejected: int
    qd_score: float
    coverage: float
    max_fitness: float
    n_evals: int | None = None


def make_archive(config: AlgorithmConfig, centroids: Centroids, genotype_dim: int, rng: RngStream | None = None) -> Archive:
    return Archive(centroids, genotype_dim, config.depth, config.rule, config.selector, rng)


# -- building blocks -----------------------------------------------------------------


def _random_genotypes(n: int, dim: int, rng: RngStream) -> np.ndarray:
    return rng.stream(_RANDOM).uniform(np.arange(n), dim)


def _offspring(archive: Archive, n: int, config: AlgorithmConfig, dim: int, rng: RngStream) -> np.ndarray:
    if config.variant is Variant.ME_RANDOM:
        return _random_genotypes(n, dim, rng)
    ids = np.arange(n)
    u = rng.stream(_SELECT).uniform(ids, 4)
    cx, sx = archive.select(u[:, 0], u[:, 1])
    cy, sy = archive.select(u[:, 2], u[:, 3])
    normals = rng.stream(_MUTATE).normal(ids, normals_needed(dim, config.variation))
    return iso_line_batch(archive.genotypes[cx, sx], archive.genotypes[cy, sy], config.variation, normals)


def _evaluate_new(genotypes: np.ndarray, n_samples: int, task: Task, rng: RngStream, threads: int) -> RecordBatch:
    fitness, descriptors = evaluate_batch(task, genotypes, n_samples, rng.stream(_EVAL), threads=threads)
    return RecordBatch(
        genotypes,
        np.full(len(genotypes), n_samples),
        sample_mean(fitness),
        sample_mean(descriptors),
    )


def _reevaluate(archive: Archive, task: Task, rng: RngStream, threads: int) -> int:
    """Drain, reevaluate every record once, fold into its running means and re-add."""
    batch = archive.drain()
    if len(batch) == 0:
        return 0
    fitness, descriptors = evaluate_batch(task, batch.genotypes, 1, rng.stream(_REEVAL), threads=threads)
    counts = batch.eval_counts
    batch.fitness = running_mean_step(batch.fitness, counts, fitness[:, 0])
    batch.descriptors = running_mean_step(batch.descriptors, counts[:, None], descriptors[:, 0])
    batch.eval_counts = counts + 1
    archive.add_batch(batch)
    return len(batch)


def _report(archive, task, generation, evaluations, reevaluations, plan, added, rejected, n_evals=None):
    occupied = archive.sizes.any()
    return GenerationReport(
        generation=generation,
        evaluations=evaluations,
        reevaluations=reevaluations,
        n_offspring=plan.n_offspring,
        evals_per_offspring=plan.evals_per_offspring,
        added=added,
        rejected=rejected,
        qd_score=archive.qd_score(task.spec.qd_offset),
        coverage=archive.coverage(),
        max_fitness=archive.max_fitness() if occupied else float("nan"),
        n_evals=n_evals,
    )


def _offspring_step(archive, config, task, rng, generation, threads, plan, reevaluations=0, n_evals=None):
    dim = task.spec.genotype_dim
    genotypes = _offspring(archive, plan.n_offspring, config, dim, rng)
    batch = _evaluate_new(genotypes, plan.evals_per_offspring, task, rng, threads)
    added, rejected = archive.add_batch(batch)
    evaluations = reevaluations + plan.n_offspring * plan.evals_per_offspring
    return _report(archive, task, generation, evaluations, reevaluations, plan, added, rejected, n_evals)


# -- public steps ----------------------------------------------------------------------


def initialize(archive: Archive, config: AlgorithmConfig, task: Task, rng: RngStream, threads: int = 1) -> GenerationReport:
    """Fill an empty archive with one budget's worth of uniform random genotypes."""
    config.check(archive.k)
    plan = plan_budget(config, archive.k)
    genotypes = _random_genotypes(plan.n_offspring, task.spec.genotype_dim, rng)
    batch = _evaluate_new(genotypes, plan.evals_per_offspring, task, rng, threads)
    added, rejected = archive.add_batch(batch)
    return _report(
        archive, task, -1, plan.n_offspring * plan.evals_per_offspring, 0, plan, added, rejected,
        1 if config.variant is Variant.PAS else None,
    )


def step_map_elites(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    """Uniform parents, iso+line variation, one evaluation each, elitist addition."""
    return _offspring_step(archive, config, task, rng, generation, threads, plan_budget(config, archive.k))


def step_me_random(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    return _offspring_step(archive, config, task, rng, generation, threads, plan_budget(config, archive.k))


def step_me_sampling(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    """Each offspring is evaluated N times and competes with its sample means."""
    return _offspring_step(archive, config, task, rng, generation, threads, plan_budget(config, archive.k))


def step_deep_grid(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    """Roulette parents from a deep archive where any occupant can be overwritten."""
    return _offspring_step(archive, config, task, rng, generation, threads, plan_budget(config, archive.k))


def step_dg_sampling(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    return _offspring_step(archive, config, task, rng, generation, threads, plan_budget(config, archive.k))


def step_archive_sampling(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    """Reevaluate the whole archive once, then add single-evaluation offspring.

    The reevaluation is skipped on generation 0, right after initialisation.
    """
    config.check(archive.k)
    plan = plan_budget(config, archive.k)
    reevaluations = _reevaluate(archive, task, rng, threads) if generation > 0 else 0
    return _offspring_step(archive, config, task, rng, generation, threads, plan, reevaluations)


def step_pas(archive, config, task, rng, generation=0, threads=1) -> GenerationReport:
    """Archive reevaluation plus offspring sampled as often as the median archive record.

    The median is read before the reevaluation. It is capped so that at least
    one offspring fits in the remaining budget.
    """
    config.check(archive.k)
    spare = config.sampling_size - config.capacity(archive.k)
    n_evals = min(median_evals_number(archive), spare)
    reevaluations = _reevaluate(archive, task, rng, threads) if generation > 0 else 0
    plan = plan_budget(config, archive.k, n_evals)
    return _offspring_step(archive, config, task, rng, generation, threads, plan, reevaluations, n_evals)


STEPS = {
    Variant.ME: step_map_elites,
    Variant.ME_RANDOM: step_me_random,
    Variant.ME_SAMPLING: step_me_sampling,
    Variant.DEEP_GRID: step_deep_grid,
    Variant.DG_SAMPLING: step_dg_sampling,
    Variant.ARCHIVE_SAMPLING: step_archive_sampling,
    Variant.PAS: step_pas,
}


class Optimizer:
    """Owns one run: an archive, a root stream and a generation counter."""

    def __init__(self, config: AlgorithmConfig, task: Task, centroids: Centroids, seed: int, threads: int = 1):
        config.check(centroids.k)
        self.config = config
        self.task = task
        self.threads = threads
        self.rng = RngStream(seed)
        self.archive = make_archive(config, centroids, task.spec.genotype_dim, self.rng.stream(_ARCHIVE))
        self.generation = 0
        self.evaluations = 0
        self.initialized = False

    def initialize(self) -> GenerationReport:
        report = initialize(self.archive, self.config, self.task, self.rng.stream(_INIT), self.threads)
        self.evaluations += report.evaluations
        self.initialized = True
        return report

    def step(self) -> GenerationReport:
        if not self.initialized:
            raise ConfigError("initialize() must run before step()")
        step = STEPS[self.config.variant]
        report = step(
            self.archive, self.config, self.task, self.rng.stream(_STEP, self.generation),
            generation=self.generation, threads=self.threads,
        )
        self.evaluations += report.evaluations
        self.generation += 1
        return report

    def run(self, generations: int) -> list[GenerationReport]:
        reports = [self.initialize()] if not self.initialized else []
        reports += [self.step() for _ in range(generations)]
        return reports
