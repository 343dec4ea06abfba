"""Experiment runner: replications, seeds, metric checkpoints and output files.

Layout of an output directory::

    tessellations/<task>_r<rep>.csv   centroids shared by every run of that replication
    runs/<key>/metrics.csv            one row per metric checkpoint
    runs/<key>/reeval.csv             per-cell corrected-archive statistics per checkpoint
    runs/<key>/archive.csv            final training archive
    runs/<key>/timing.csv             wall-clock per generation (not reproducible)
    runs/<key>/*.svg                  heatmaps of the final archives
    summary.csv                       one row per run
    timing.csv                        wall-clock summary per run (not reproducible)
    significance.csv, pareto.svg

All CSVs except the two ``timing.csv`` kinds depend only on the config and
the master seed; ``pareto.svg`` plots wall-clock time and so does not.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path

import numpy as np

from ..algorithms import AlgorithmConfig, Optimizer, Variant
from ..core import RngStream
from ..metrics import (
    MetricsReport,
    ReevalResult,
    collect_max_variance,
    corrected_archive,
    estimator_study,
    qd_score_loss,
    reproducibility_score,
    time_to_convergence,
)
from ..tasks import NoiseModel, make_task
from ..tessellation import Centroids, generate_cvt
from .config import AlgorithmEntry, ExperimentConfig
from .plots import render_archive_heatmap, render_pareto_plot
from .stats import bonferroni, rank_sum_test

__all__ = [
    "RunSpec",
    "RunRecord",
    "ExperimentResult",
    "run_experiment",
    "run_single",
    "tessellation_for",
    "run_seed",
    "run_key",
    "records_from_summary",
    "converge_and_study",
    "write_comparison",
    "write_csv",
    "fmt",
    "METRIC_COLUMNS",
    "SUMMARY_COLUMNS",
]

log = logging.getLogger("uqd")

_TESS, _RUN, _METRIC = 1, 2, 3

METRIC_COLUMNS = [f.name for f in fields(MetricsReport) if f.name != "wall_clock_s"]
SUMMARY_COLUMNS = [
    "key", "task", "algorithm", "variant", "sampling_size", "replication", "status",
    "final_generation", "evals_consumed", "qd_score", "coverage", "corrected_qd_score",
    "corrected_coverage", "corrected_max_fitness", "qd_score_loss", "reproducibility_score",
    "fitness_reproducibility_score", "ttc_evaluations", "error",
]


def fmt(value) -> str:
    """CSV cell: 17 significant digits for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _crc(text: str) -> int:
    return zlib.crc32(text.encode())


def tessellation_for(config: ExperimentConfig, replication: int) -> Centroids:
    """Centroids for one replication, shared across algorithms and sampling sizes."""
    rng = RngStream(config.seed).stream(_TESS, _crc(config.task.name), replication)
    task = config.task.build()
    return generate_cvt(
        config.niches, task.spec.descriptor_dim, config.cvt_samples, config.cvt_iterations, rng=rng
    )


def run_seed(master: int, task: str, replication: int, label: str, sampling_size: int) -> int:
    rng = RngStream(master).stream(_RUN, _crc(task), replication, _crc(label), sampling_size)
    return int(rng.integers(np.zeros(1, dtype=np.int64), 2**62)[0, 0])


def run_key(task: str, label: str, sampling_size: int, replication: int) -> str:
    return f"{task}_{label}_S{sampling_size}_r{replication}"


@dataclass
class RunSpec:
    key: str
    task_name: str
    entry: AlgorithmEntry
    sampling_size: int
    replication: int
    seed: int
    centroid_points: np.ndarray
    config: ExperimentConfig
    out_dir: Path
    threads: int = 1


@dataclass
class RunRecord:
    key: str
    task: str
    algorithm: str
    variant: str
    sampling_size: int
    replication: int
    status: str  # "ok" or "failed"
    reports: list[MetricsReport] = field(default_factory=list)
    results: dict[int, dict[int, ReevalResult]] = field(default_factory=dict)  # generation -> cell -> result
    error: str = ""
    ttc_seconds: float = float("nan")
    ttc_evaluations: float = float("nan")
    metrics_path: Path | None = None

    @property
    def final(self) -> MetricsReport | None:
        return self.reports[-1] if self.reports else None


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    skipped: list[str]
    out_dir: Path


def _metric_row(report: MetricsReport) -> list:
    return [getattr(report, name) for name in METRIC_COLUMNS]


def _reeval_rows(generation: int, results: dict[int, ReevalResult]):
    for cell, r in results.items():
        yield [generation, cell, r.m, r.median_fitness, *r.median_descriptor, r.fitness_variance, *r.descriptor_variance]


def _reeval_header(dd: int) -> list[str]:
    return (
        ["generation", "cell", "m", "median_fitness"]
        + [f"median_descriptor_{j}" for j in range(dd)]
        + ["fitness_variance"]
        + [f"descriptor_variance_{j}" for j in range(dd)]
    )


def _checkpoints(generations: int, cadence: int) -> set[int]:
    return {0, generations, *range(cadence, generations + 1, cadence)}


def run_single(spec: RunSpec) -> RunRecord:
    """Run one (task, algorithm, S, replication) combination.

    Metric files are written as checkpoints happen, so a failure leaves the
    completed rows on disk and the record marked failed.
    """
    cfg = spec.config
    task = cfg.task.build()
    run_dir = spec.out_dir / "runs" / spec.key
    run_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(
        spec.key, spec.task_name, spec.entry.label, spec.entry.variant.value, spec.sampling_size,
        spec.replication, "ok", metrics_path=run_dir / "metrics.csv",
    )
    centroids = Centroids(spec.centroid_points)
    metric_rng = RngStream(spec.seed).stream(_METRIC)
    checkpoints = _checkpoints(cfg.generations, cfg.metric_cadence)
    dd = task.spec.descriptor_dim
    offset = task.spec.qd_offset
    evals = metric_evals = 0
    wall = 0.0
    timing = []
    try:
        with open(record.metrics_path, "w", newline="") as mfh, open(run_dir / "reeval.csv", "w", newline="") as rfh:
            metrics_out = csv.writer(mfh, lineterminator="\n")
            reeval_out = csv.writer(rfh, lineterminator="\n")
            metrics_out.writerow(METRIC_COLUMNS)
            reeval_out.writerow(_reeval_header(dd))
            opt = Optimizer(spec.entry.config(spec.sampling_size), task, centroids, spec.seed, spec.threads)
            for generation in range(cfg.generations + 1):
                start = time.monotonic()
                report = opt.initialize() if generation == 0 else opt.step()
                wall += time.monotonic() - start
                timing.append((generation, wall))
                evals += report.evaluations
                if generation not in checkpoints:
                    continue
                corrected = corrected_archive(
                    opt.archive, task, cfg.m_reevals, cfg.correction_mode, metric_rng.stream(generation)
                )
                metric_evals += corrected.evaluations
                c = corrected.archive
                metrics = MetricsReport(
                    generation=generation,
                    evals_consumed_cumulative=evals,
                    metric_evals_cumulative=metric_evals,
                    qd_score=report.qd_score,
                    coverage=report.coverage,
                    max_fitness=report.max_fitness,
                    corrected_qd_score=c.qd_score(offset),
                    corrected_coverage=c.coverage(),
                    corrected_max_fitness=c.max_fitness(),
                    qd_score_loss=qd_score_loss(report.qd_score, c.qd_score(offset)),
                    n_evals=report.n_evals,
                    wall_clock_s=wall,
                )
                record.reports.append(metrics)
                record.results[generation] = corrected.results
                metrics_out.writerow([fmt(v) for v in _metric_row(metrics)])
                reeval_out.writerows([fmt(v) for v in row] for row in _reeval_rows(generation, corrected.results))
                mfh.flush()
                rfh.flush()
            opt.archive.to_csv(run_dir / "archive.csv")
    except Exception as exc:  # keep partial output, report the failure
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        log.error("run %s failed:\n%s", spec.key, traceback.format_exc())
    write_csv(run_dir / "timing.csv", ["generation", "wall_clock_s"], timing)
    if record.status == "ok":
        _final_heatmaps(opt.archive, record, task, run_dir)
    series = [(r.corrected_qd_score, r.wall_clock_s, r.evals_consumed_cumulative) for r in record.reports]
    if series:
        values = [s[0] for s in series]
        record.ttc_seconds = time_to_convergence([s[1] for s in series], values)
        record.ttc_evaluations = time_to_convergence([s[2] for s in series], values)
    return record


def _final_heatmaps(archive, record: RunRecord, task, run_dir: Path) -> None:
    if archive.descriptor_dim != 2:
        return
    lo, hi = task.spec.fitness_range
    render_archive_heatmap(archive.centroids, archive.fitness.max(axis=1), lo, hi, run_dir / "archive.svg", f"{record.key} training")
    values = np.full(archive.k, np.nan)
    for cell, r in record.results[max(record.results)].items():
        values[cell] = r.median_fitness
    render_archive_heatmap(archive.centroids, values, lo, hi, run_dir / "corrected.svg", f"{record.key} corrected")


def _plan(config: ExperimentConfig, out_dir: Path, threads: int) -> tuple[list[RunSpec], list[str]]:
    specs, skipped = [], []
    tess_dir = out_dir / "tessellations"
    tess_dir.mkdir(parents=True, exist_ok=True)
    k = config.niches
    for rep in range(config.replications):
        centroids = None
        for entry in config.algorithms:
            for s in config.sizes_for(entry):
                key = run_key(config.task.name, entry.label, s, rep)
                algo = entry.config(s)
                if algo.variant.reevaluates_archive and s <= algo.capacity(k):
                    notice = f"skipping {key}: {algo.variant.value} is undefined for S={s} <= k*D={algo.capacity(k)}"
                    log.warning(notice)
                    if rep == 0:
                        skipped.append(notice)
                    continue
                algo.check(k)
                if centroids is None:
                    centroids = tessellation_for(config, rep)
                    centroids.to_csv(tess_dir / f"{config.task.name}_r{rep}.csv")
                seed = run_seed(config.seed, config.task.name, rep, entry.label, s)
                specs.append(RunSpec(key, config.task.name, entry, s, rep, seed, centroids.points, config, out_dir, threads))
    return specs, skipped


def _fill_reproducibility(records: list[RunRecord], k: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalise every checkpoint against the whole comparison set and fill the report columns."""
    desc_max, fit_max = collect_max_variance(
        (results for r in records for results in r.results.values()), k
    )
    for r in records:
        for report in r.reports:
            results = r.results[report.generation]
            report.reproducibility_score = reproducibility_score(results, desc_max)
            report.fitness_reproducibility_score = reproducibility_score(results, fit_max, fitness=True)
    return desc_max, fit_max


def _write_run_files(record: RunRecord, desc_max: np.ndarray, centroids: Centroids | None) -> None:
    write_csv(record.metrics_path, METRIC_COLUMNS, (_metric_row(rep) for rep in record.reports))
    if centroids is None or centroids.dim != 2 or not record.results:
        return
    values = np.full(centroids.k, np.nan)
    for cell, res in record.results[max(record.results)].items():
        top = desc_max[cell]
        values[cell] = 1.0 - res.scalar_descriptor_variance / top if top > 0 else 1.0
    render_archive_heatmap(centroids, values, 0.0, 1.0, record.metrics_path.parent / "reproducibility.svg", f"{record.key} 1 - normalised variance")


_FINAL_COLUMNS = (
    "generation", "evals_consumed_cumulative", "qd_score", "coverage", "corrected_qd_score",
    "corrected_coverage", "corrected_max_fitness", "qd_score_loss", "reproducibility_score",
    "fitness_reproducibility_score",
)


def summary_row(r: RunRecord) -> list:
    final = [getattr(r.final, name) if r.final is not None else None for name in _FINAL_COLUMNS]
    return [r.key, r.task, r.algorithm, r.variant, r.sampling_size, r.replication, r.status, *final, r.ttc_evaluations, r.error]


_COMPARED = ("corrected_qd_score", "qd_score_loss", "reproducibility_score")


def significance_rows(records: list[RunRecord]):
    """Pairwise rank-sum tests per (task, S, metric), Bonferroni-adjusted within each family."""
    groups: dict[tuple[str, int], dict[str, list[RunRecord]]] = {}
    for r in records:
        if r.status == "ok" and r.final is not None:
            groups.setdefault((r.task, r.sampling_size), {}).setdefault(r.algorithm, []).append(r)
    rows = []
    for (task, s), by_algo in sorted(groups.items()):
        pairs = [(a, b) for a, b in combinations(sorted(by_algo), 2) if len(by_algo[a]) >= 3 and len(by_algo[b]) >= 3]
        for metric in _COMPARED:
            for a, b in pairs:
                xa = [getattr(r.final, metric) for r in by_algo[a]]
                xb = [getattr(r.final, metric) for r in by_algo[b]]
                if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(xb))):
                    continue
                p = rank_sum_test(xa, xb)
                rows.append([task, s, metric, a, b, float(np.median(xa)), float(np.median(xb)), p, bonferroni(p, len(pairs))])
    return rows


SIGNIFICANCE_COLUMNS = ["task", "sampling_size", "metric", "algorithm_a", "algorithm_b", "median_a", "median_b", "p_value", "p_bonferroni"]


def write_comparison(records: list[RunRecord], out_dir: Path) -> None:
    write_csv(out_dir / "significance.csv", SIGNIFICANCE_COLUMNS, significance_rows(records))
    points = [
        (r.algorithm, r.sampling_size, r.final.corrected_qd_score, r.ttc_seconds)
        for r in records
        if r.status == "ok" and r.final is not None
    ]
    render_pareto_plot(points, out_dir / "pareto.svg")


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path,
    threads: int = 1,
    jobs: int = 1,
) -> ExperimentResult:
    """Run every (algorithm, S, replication) of ``config`` and write all artefacts under ``out_dir``.

    ``threads`` parallelises evaluation batches inside a run and ``jobs``
    runs that many runs in separate processes; neither changes any result.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs, skipped = _plan(config, out_dir, threads)
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_single, specs))
    else:
        records = [run_single(spec) for spec in specs]

    desc_max, _ = _fill_reproducibility(records, config.niches)
    centroids = {spec.replication: Centroids(spec.centroid_points) for spec in specs}
    for spec, record in zip(specs, records):
        _write_run_files(record, desc_max, centroids[spec.replication])
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, (summary_row(r) for r in records))
    write_csv(
        out_dir / "timing.csv",
        ["key", "wall_clock_s", "ttc_seconds"],
        ((r.key, r.final.wall_clock_s if r.final else math.nan, r.ttc_seconds) for r in records),
    )
    write_comparison(records, out_dir)
    failed = [r.key for r in records if r.status != "ok"]
    if failed:
        log.error("%d run(s) failed: %s", len(failed), ", ".join(failed))
    return ExperimentResult(records, skipped, out_dir)


def config_summary(config: ExperimentConfig) -> dict:
    """Plain-dict view of a config, used by ``--validate``."""
    out = asdict(config)
    out["correction_mode"] = config.correction_mode.value
    return out


def records_from_summary(out_dir: str | Path) -> list[RunRecord]:
    """Rebuild final-metric run records from ``summary.csv`` (and ``timing.csv`` when present)."""
    out_dir = Path(out_dir)
    ttc_seconds = {}
    if (out_dir / "timing.csv").is_file():
        with open(out_dir / "timing.csv", newline="") as fh:
            ttc_seconds = {row["key"]: float(row["ttc_seconds"]) for row in csv.DictReader(fh)}
    records = []
    with open(out_dir / "summary.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            record = RunRecord(
                row["key"], row["task"], row["algorithm"], row["variant"], int(row["sampling_size"]),
                int(row["replication"]), row["status"], error=row["error"],
                ttc_seconds=ttc_seconds.get(row["key"], math.nan),
                ttc_evaluations=float(row["ttc_evaluations"] or "nan"),
                metrics_path=out_dir / "runs" / row["key"] / "metrics.csv",
            )
            if row["final_generation"]:
                num = {name: float(row[name] or "nan") for name in _FINAL_COLUMNS if name in row}
                record.reports.append(
                    MetricsReport(
                        generation=int(row["final_generation"]),
                        evals_consumed_cumulative=int(row["evals_consumed"]),
                        metric_evals_cumulative=0,
                        qd_score=num["qd_score"],
                        coverage=num["coverage"],
                        max_fitness=math.nan,
                        corrected_qd_score=num["corrected_qd_score"],
                        corrected_coverage=num["corrected_coverage"],
                        corrected_max_fitness=num["corrected_max_fitness"],
                        qd_score_loss=num["qd_score_loss"],
                        reproducibility_score=num["reproducibility_score"],
                        fitness_reproducibility_score=num["fitness_reproducibility_score"],
                    )
                )
            records.append(record)
    return records


def converge_and_study(
    task_name: str,
    niches: int,
    generations: int,
    noise_std: float,
    m_max: int,
    candidate_ms,
    seed: int = 0,
    sampling_size: int = 1024,
    cvt_samples: int = 50_000,
    cvt_iterations: int = 100,
    threads: int = 1,
):
    """Converge MAP-Elites on the noiseless task, then run the estimator study with ``noise_std``.

    The noise level is applied to fitness and every descriptor dimension.
    Returns the estimator rows.
    """
    root = RngStream(seed)
    clean = make_task(task_name, noise=NoiseModel())
    centroids = generate_cvt(niches, clean.spec.descriptor_dim, cvt_samples, cvt_iterations, rng=root.stream(_TESS))
    opt = Optimizer(AlgorithmConfig(Variant.ME, sampling_size), clean, centroids, seed, threads)
    opt.run(generations)
    noisy = clean.with_noise(NoiseModel(noise_std, noise_std))
    return estimator_study(opt.archive, noisy, m_max, list(candidate_ms), root.stream(_METRIC))


ESTIMATOR_COLUMNS = ["m", "quantity", "estimator", "median_error", "q1_error", "q3_error"]
