"""Experiment harness: config, runner, statistics, plots and CLI."""

from .config import AlgorithmEntry, ExperimentConfig, TaskConfig, load_config, parse_config
from .plots import render_archive_heatmap, render_pareto_plot
from .runner import ExperimentResult, RunRecord, converge_and_study, run_experiment
from .stats import bonferroni, pareto_front, rank_sum_test

__all__ = [
    "AlgorithmEntry",
    "ExperimentConfig",
    "TaskConfig",
    "load_config",
    "parse_config",
    "render_archive_heatmap",
    "render_pareto_plot",
    "ExperimentResult",
    "RunRecord",
    "converge_and_study",
    "run_experiment",
    "bonferroni",
    "pareto_front",
    "rank_sum_test",
]
