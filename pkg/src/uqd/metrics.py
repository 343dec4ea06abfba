"""Corrected-archive metrics for noisy QD.

Training-time fitness and descriptors are noisy estimates, so the reported
scores come from a *corrected archive*: each occupied cell is resampled ``M``
times, the per-cell medians are placed in a fresh flat archive, and scores are
read from that. Evaluations spent here never count towards an algorithm's
budget.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .archive import AdditionRule, Archive, Selector
from .core import ConfigError, ContractError, EmptyArchiveError, RngStream, SolutionRecord, sample_mean
from .tasks import Task

__all__ = [
    "CorrectionMode",
    "ReevalResult",
    "CorrectedArchive",
    "MetricsReport",
    "EstimatorRow",
    "median_per_dimension",
    "corrected_archive",
    "qd_score_loss",
    "reproducibility_score",
    "collect_max_variance",
    "time_to_convergence",
    "estimator_study",
    "DEFAULT_M",
]

DEFAULT_M = 512

_SELECT, _EVAL, _GROUND_TRUTH, _CANDIDATE = 1, 2, 3, 4

# Rows evaluated per vectorised chunk; bounds memory for large M.
_CHUNK_ROWS = 1 << 18


class CorrectionMode(str, enum.Enum):
    IN_CELL = "in-cell-selector"
    BEST = "best-of-cell"


@dataclass(frozen=True)
class ReevalResult:
    median_fitness: float
    median_descriptor: np.ndarray
    fitness_variance: float
    descriptor_variance: np.ndarray
    m: int

    @property
    def scalar_descriptor_variance(self) -> float:
        """Mean of the per-dimension descriptor variances."""
        return float(np.mean(self.descriptor_variance))


class CorrectedArchive(NamedTuple):
    archive: Archive
    results: dict[int, ReevalResult]
    evaluations: int


@dataclass
class MetricsReport:
    generation: int
    evals_consumed_cumulative: int
    metric_evals_cumulative: int
    qd_score: float
    coverage: float
    max_fitness: float
    corrected_qd_score: float
    corrected_coverage: float
    corrected_max_fitness: float
    qd_score_loss: float
    reproducibility_score: float = float("nan")
    fitness_reproducibility_score: float = float("nan")
    n_evals: int | None = None
    wall_clock_s: float = float("nan")


def median_per_dimension(samples) -> np.ndarray:
    """Component-wise median of equal-length vectors (mean of the middle pair for even counts)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ContractError("need a non-empty list of equal-length vectors")
    return np.median(samples, axis=0)


def _evaluate_rows(task: Task, genotypes: np.ndarray, rng: RngStream, ids: tuple[np.ndarray, np.ndarray]):
    """Evaluate ``genotypes`` of shape ``(c, m, n)``; draw ``(i, j)`` keyed by ``(ids[0][i], ids[1][j])``."""
    c, m, n = genotypes.shape
    dd = task.spec.descriptor_dim
    flat = genotypes.reshape(c * m, n)
    if task.spec.noise.is_zero:
        normals = np.zeros((c * m, 1 + dd))
    else:
        normals = rng.normal((ids[0][:, None], ids[1][None, :]), 1 + dd).reshape(c * m, 1 + dd)
    fitness, descriptors = task.evaluate_with(flat, normals)
    return fitness.reshape(c, m), descriptors.reshape(c, m, dd)


def corrected_archive(
    archive: Archive,
    task: Task,
    m: int = DEFAULT_M,
    mode: CorrectionMode | str = CorrectionMode.IN_CELL,
    rng: RngStream | None = None,
) -> CorrectedArchive:
    """Resample every occupied cell ``m`` times and rebuild a flat archive from the medians.

    In ``in-cell-selector`` mode each of the ``m`` draws first picks a record
    with the archive's own in-cell selector; ``best-of-cell`` always resamples
    the best record. Phantoms are added in cell order with the elitist rule, so
    medians that drift into the same cell keep the fitter one.
    """
    if m < 2:
        raise ConfigError(f"M must be >= 2 to estimate variances, got {m}")
    mode = CorrectionMode(mode)
    rng = rng if rng is not None else RngStream(0)
    occupied = archive.occupied_cells()
    if occupied.size == 0:
        raise EmptyArchiveError("cannot correct an empty archive")
    draws = np.arange(m)
    best = archive.best_slots()[occupied]
    if mode is CorrectionMode.BEST:
        slots = np.repeat(best[:, None], m, axis=1)
    else:
        u = rng.stream(_SELECT).uniform((occupied[:, None], draws[None, :]))[..., 0]
        slots = archive.pick_in_cells(np.repeat(occupied, m), u.ravel()).reshape(len(occupied), m)

    dd = archive.descriptor_dim
    fitness = np.empty((len(occupied), m))
    descriptors = np.empty((len(occupied), m, dd))
    step = max(1, _CHUNK_ROWS // m)
    for a in range(0, len(occupied), step):
        cells = occupied[a:a + step]
        genotypes = archive.genotypes[cells[:, None], slots[a:a + step]]
        fitness[a:a + step], descriptors[a:a + step] = _evaluate_rows(
            task, genotypes, rng.stream(_EVAL), (cells, draws)
        )

    med_f = np.median(fitness, axis=1)
    med_d = np.median(descriptors, axis=1)
    var_f = np.var(fitness, axis=1, ddof=1)
    var_d = np.var(descriptors, axis=1, ddof=1)

    corrected = Archive(archive.centroids, archive.genotype_dim, 1, AdditionRule.ELITIST_FLAT, Selector.BEST)
    results: dict[int, ReevalResult] = {}
    for i, cell in enumerate(occupied.tolist()):
        phantom = SolutionRecord(archive.genotypes[cell, best[i]], m, med_f[i], med_d[i])
        outcome = corrected.try_add(phantom)
        if outcome.status != "rejected":
            results[outcome.cell] = ReevalResult(float(med_f[i]), med_d[i].copy(), float(var_f[i]), var_d[i].copy(), m)
    return CorrectedArchive(corrected, dict(sorted(results.items())), len(occupied) * m)


def qd_score_loss(training_qd: float, corrected_qd: float) -> float:
    """Relative drop from training to corrected QD-Score; NaN when the training score is 0."""
    if training_qd == 0:
        return float("nan")
    return (training_qd - corrected_qd) / training_qd


def _variance(result: ReevalResult, fitness: bool) -> float:
    return result.fitness_variance if fitness else result.scalar_descriptor_variance


def reproducibility_score(results: Mapping[int, ReevalResult], normalizer, fitness: bool = False) -> float:
    """Sum over cells of ``1 - variance / max observed variance in that cell``.

    ``normalizer`` is indexable by cell. A cell whose normalizer is 0 must have
    zero variance and then counts fully. ``fitness=True`` gives the
    fitness-variance flavour.
    """
    score = 0.0
    for cell, result in results.items():
        v = _variance(result, fitness)
        top = float(normalizer[cell])
        if top > 0:
            score += 1.0 - v / top
        elif v == 0:
            score += 1.0
        else:
            raise ContractError(f"cell {cell} has variance {v} but normalizer {top}")
    return score


def collect_max_variance(result_sets: Iterable[Mapping[int, ReevalResult]], k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell maximum (descriptor variance, fitness variance) across every result set.

    Cells never observed get 0.
    """
    desc = np.zeros(k)
    fit = np.zeros(k)
    for results in result_sets:
        for cell, result in results.items():
            desc[cell] = max(desc[cell], result.scalar_descriptor_variance)
            fit[cell] = max(fit[cell], result.fitness_variance)
    return desc, fit


def time_to_convergence(xs: Sequence[float], values: Sequence[float], fraction: float = 0.95):
    """First ``x`` whose value is within ``fraction`` of the final value, measured from 0."""
    if len(xs) == 0 or len(xs) != len(values):
        raise ContractError("need a non-empty series with one value per x")
    target = fraction * values[-1]
    for x, v in zip(xs, values):
        if (values[-1] >= 0 and v >= target) or (values[-1] < 0 and v <= target):
            return x
    return xs[-1]


@dataclass(frozen=True)
class EstimatorRow:
    m: int
    quantity: str  # "fitness" or "descriptor"
    estimator: str  # "mean" or "median"
    median_error: float
    q1_error: float
    q3_error: float


def _draw(task, genotypes, rng, ids, m):
    fitness = np.empty((len(genotypes), m))
    descriptors = np.empty((len(genotypes), m, task.spec.descriptor_dim))
    step = max(1, _CHUNK_ROWS // m)
    for a in range(0, len(genotypes), step):
        g = np.repeat(genotypes[a:a + step, None, :], m, axis=1)
        fitness[a:a + step], descriptors[a:a + step] = _evaluate_rows(task, g, rng, (ids[a:a + step], np.arange(m)))
    return fitness, descriptors


def _estimates(fitness, descriptors):
    return {
        ("fitness", "mean"): sample_mean(fitness),
        ("fitness", "median"): np.median(fitness, axis=1),
        ("descriptor", "mean"): sample_mean(descriptors),
        ("descriptor", "median"): np.median(descriptors, axis=1),
    }


def estimator_study(
    archive: Archive,
    task: Task,
    m_max: int,
    candidate_ms: Sequence[int],
    rng: RngStream | None = None,
) -> list[EstimatorRow]:
    """Error of mean and median estimators against an ``m_max``-sample ground truth.

    Every stored record is resampled ``m_max`` times for the reference values
    and ``M`` fresh times for each candidate ``M``. Errors are absolute for
    fitness and Euclidean for descriptors; each row summarises them over
    records by median and quartiles.
    """
    if not candidate_ms or max(candidate_ms) > m_max:
        raise ConfigError("candidate Ms must be non-empty and not exceed m_max")
    rng = rng if rng is not None else RngStream(0)
    records = archive.records()
    if len(records) == 0:
        raise EmptyArchiveError("estimator study needs a non-empty archive")
    ids = np.arange(len(records))
    truth = _estimates(*_draw(task, records.genotypes, rng.stream(_GROUND_TRUTH), ids, m_max))
    rows = []
    for m in candidate_ms:
        estimate = _estimates(*_draw(task, records.genotypes, rng.stream(_CANDIDATE, m), ids, m))
        for key in truth:
            diff = estimate[key] - truth[key]
            err = np.abs(diff) if diff.ndim == 1 else np.linalg.norm(diff, axis=1)
            q1, med, q3 = np.quantile(err, [0.25, 0.5, 0.75])
            rows.append(EstimatorRow(int(m), key[0], key[1], float(med), float(q1), float(q3)))
    return rows
