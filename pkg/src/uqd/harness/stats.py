"""Pareto filtering and rank-sum significance tests."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import stats

from ..core import ContractError

__all__ = ["pareto_front", "pareto_mask", "rank_sum_test", "rank_sum_statistic", "bonferroni"]


def pareto_mask(qd: Sequence[float], time: Sequence[float]) -> np.ndarray:
    """Boolean mask of points not dominated in (maximise ``qd``, minimise ``time``)."""
    qd = np.asarray(qd, dtype=float)
    time = np.asarray(time, dtype=float)
    if qd.size == 0 or qd.shape != time.shape:
        raise ContractError("need a non-empty list of (qd, time) points")
    # p dominates q: p.qd >= q.qd, p.time <= q.time, one of them strict.
    no_worse = (qd[:, None] >= qd[None, :]) & (time[:, None] <= time[None, :])
    strict = (qd[:, None] > qd[None, :]) | (time[:, None] < time[None, :])
    return ~np.any(no_worse & strict, axis=0)


def pareto_front(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated ``(qd, time)`` points, in input order."""
    points = list(points)
    if not points:
        raise ContractError("pareto_front needs at least one point")
    qd, time = zip(*points)
    mask = pareto_mask(qd, time)
    return [p for p, keep in zip(points, mask) if keep]


def rank_sum_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """``(U_a, p)`` for a two-sided Mann-Whitney test.

    Normal approximation with tie correction and no continuity correction.
    Samples with no spread at all give ``p = 1``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 3 or b.size < 3:
        raise ContractError("rank-sum test needs at least 3 samples per group")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return a.size * b.size / 2.0, 1.0
    res = stats.mannwhitneyu(a, b, use_continuity=False, alternative="two-sided", method="asymptotic")
    return float(res.statistic), float(min(1.0, res.pvalue))


def rank_sum_test(a: Sequence[float], b: Sequence[float]) -> float:
    return rank_sum_statistic(a, b)[1]


def bonferroni(p: float, m: int) -> float:
    if m < 1:
        raise ContractError("number of comparisons must be >= 1")
    return min(1.0, m * p)
