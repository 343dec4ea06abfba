"""Command-line entry point: ``uqd run|metrics|estimator-study|plot|compare``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..archive import Archive
from ..core import ConfigError, RngStream
from ..metrics import corrected_archive, qd_score_loss
from ..tessellation import Centroids
from .config import ExperimentConfig, load_config
from .plots import render_archive_heatmap
from .runner import (
    ESTIMATOR_COLUMNS,
    config_summary,
    converge_and_study,
    records_from_summary,
    run_experiment,
    write_comparison,
    write_csv,
)

log = logging.getLogger("uqd")


def _with_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "m_reevals", None) is not None:
        changes["m_reevals"] = args.m_reevals
    return replace(config, **changes) if changes else config


def _cmd_run(args) -> int:
    config = _with_overrides(load_config(args.config), args)
    if args.validate:
        print(json.dumps(config_summary(config), indent=2, default=str))
        print("config OK")
        return 0
    result = run_experiment(config, args.out, threads=args.threads, jobs=args.jobs)
    for notice in result.skipped:
        print(notice)
    failed = [r for r in result.records if r.status != "ok"]
    print(f"{len(result.records)} run(s), {len(failed)} failed; results in {result.out_dir}")
    return 1 if failed else 0


def _cmd_metrics(args) -> int:
    config = _with_overrides(load_config(args.config), args)
    entry = next((a for a in config.algorithms if a.label == args.algorithm), None)
    if entry is None:
        raise ConfigError(f"--algorithm {args.algorithm!r} is not in the config")
    algo = entry.config(config.sizes_for(entry)[0])
    task = config.task.build()
    centroids = Centroids.from_csv(args.centroids)
    archive = Archive.from_csv(args.archive, centroids, algo.depth, algo.rule, algo.selector)
    corrected = corrected_archive(archive, task, config.m_reevals, args.mode or config.correction_mode, RngStream(config.seed))
    offset = task.spec.qd_offset
    row = {
        "qd_score": archive.qd_score(offset),
        "coverage": archive.coverage(),
        "corrected_qd_score": corrected.archive.qd_score(offset),
        "corrected_coverage": corrected.archive.coverage(),
        "corrected_max_fitness": corrected.archive.max_fitness(),
        "qd_score_loss": qd_score_loss(archive.qd_score(offset), corrected.archive.qd_score(offset)),
        "metric_evaluations": corrected.evaluations,
    }
    if args.out:
        write_csv(Path(args.out), list(row), [list(row.values())])
    for name, value in row.items():
        print(f"{name}: {value:.17g}" if isinstance(value, float) else f"{name}: {value}")
    return 0


def _cmd_estimator_study(args) -> int:
    config = load_config(args.config)
    ms = [int(m) for m in args.ms.split(",")]
    rows = converge_and_study(
        config.task.name, config.niches, args.generations, args.noise_std, args.m_max, ms,
        seed=config.seed if args.seed is None else args.seed, cvt_samples=config.cvt_samples,
        cvt_iterations=config.cvt_iterations, threads=args.threads,
    )
    table = [[r.m, r.quantity, r.estimator, r.median_error, r.q1_error, r.q3_error] for r in rows]
    write_csv(Path(args.out), ESTIMATOR_COLUMNS, table)
    for r in rows:
        print(f"M={r.m:<6d} {r.quantity:<10s} {r.estimator:<6s} median={r.median_error:.3e} IQR=[{r.q1_error:.3e}, {r.q3_error:.3e}]")
    return 0


def _best_per_cell(path: Path, k: int) -> np.ndarray:
    best = np.full(k, np.nan)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cell, f = int(row["cell"]), float(row["mean_fitness"])
            if not f <= best[cell]:
                best[cell] = f
    return best


def _cmd_plot(args) -> int:
    out = Path(args.out)
    lo_hi = None
    if args.config:
        lo_hi = load_config(args.config).task.build().spec.fitness_range
    for run_dir in sorted((out / "runs").glob("*")):
        archive_csv = run_dir / "archive.csv"
        if not archive_csv.is_file():
            continue
        # one task per experiment, so the replication suffix identifies the tessellation
        rep = run_dir.name.rsplit("_r", 1)[1]
        matches = sorted((out / "tessellations").glob(f"*_r{rep}.csv"))
        if not matches:
            continue
        centroids = Centroids.from_csv(matches[0])
        values = _best_per_cell(archive_csv, centroids.k)
        finite = values[np.isfinite(values)]
        lo, hi = lo_hi or ((finite.min(), finite.max()) if finite.size else (0.0, 1.0))
        render_archive_heatmap(centroids, values, lo, hi, run_dir / "archive.svg", f"{run_dir.name} training")
    write_comparison(records_from_summary(out), out)
    print(f"plots written under {out}")
    return 0


def _cmd_compare(args) -> int:
    out = Path(args.out)
    write_comparison(records_from_summary(out), out)
    print(f"wrote {out / 'significance.csv'} and {out / 'pareto.svg'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqd", description="Quality-Diversity under uncertainty: runs, metrics and plots.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="uqd-out")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, default=1, help="evaluation threads per run")
    run.add_argument("--jobs", type=int, default=1, help="runs executed in parallel processes")
    run.add_argument("--m-reevals", type=int)
    run.add_argument("--validate", action="store_true", help="parse and check the config, then exit")
    run.set_defaults(func=_cmd_run)

    metrics = sub.add_parser("metrics", help="corrected metrics of a saved archive")
    metrics.add_argument("--config", required=True)
    metrics.add_argument("--archive", required=True)
    metrics.add_argument("--centroids", required=True)
    metrics.add_argument("--algorithm", required=True, help="label of the [algorithm ...] section that produced it")
    metrics.add_argument("--mode", choices=["in-cell-selector", "best-of-cell"])
    metrics.add_argument("--seed", type=int)
    metrics.add_argument("--m-reevals", type=int)
    metrics.add_argument("--out", help="optional CSV path")
    metrics.set_defaults(func=_cmd_metrics)

    study = sub.add_parser("estimator-study", help="mean vs median estimator errors on a converged archive")
    study.add_argument("--config", required=True)
    study.add_argument("--out", default="estimator.csv")
    study.add_argument("--m-max", type=int, default=16384)
    study.add_argument("--ms", default="16,64,256,1024")
    study.add_argument("--generations", type=int, default=500)
    study.add_argument("--noise-std", type=float, default=0.05)
    study.add_argument("--seed", type=int)
    study.add_argument("--threads", type=int, default=1)
    study.set_defaults(func=_cmd_estimator_study)

    plot = sub.add_parser("plot", help="redraw heatmaps and the Pareto plot of an output directory")
    plot.add_argument("--out", required=True)
    plot.add_argument("--config", help="supplies the fitness colour range")
    plot.set_defaults(func=_cmd_plot)

    compare = sub.add_parser("compare", help="Pareto plot and rank-sum table from summary.csv")
    compare.add_argument("--out", required=True)
    compare.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
