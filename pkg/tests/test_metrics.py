import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uqd.algorithms import AlgorithmConfig, Optimizer
from uqd.archive import AdditionRule, Archive, Selector
from uqd.core import ConfigError, ContractError, EmptyArchiveError, RngStream, SolutionRecord
from uqd.metrics import (
    CorrectionMode,
    ReevalResult,
    collect_max_variance,
    corrected_archive,
    estimator_study,
    median_per_dimension,
    qd_score_loss,
    reproducibility_score,
    time_to_convergence,
)
from uqd.tasks import ArmTask, NoiseModel, Task, TaskSpec
from uqd.tessellation import Centroids

from .oracles import median_standard_error, per_dimension_median


class LookupTask(Task):
    """Clean fitness is gene 0 and the clean descriptor genes 1 and 2."""

    name = "lookup"

    def __init__(self, noise=NoiseModel()):
        self.spec = TaskSpec(3, 2, (-1.0, 1.0), noise)

    def clean(self, genotypes):
        return genotypes[:, 0].copy(), genotypes[:, 1:3].copy()


def result(v_desc, v_fit=0.0):
    return ReevalResult(0.0, np.zeros(2), v_fit, np.full(2, v_desc), 8)


def test_median_per_dimension_examples():
    np.testing.assert_array_equal(median_per_dimension([(1, 2)]), [1, 2])
    np.testing.assert_array_equal(median_per_dimension([(0, 0), (2, 4), (4, 0)]), [2, 0])
    np.testing.assert_array_equal(median_per_dimension([(0, 1), (2, 3)]), [1, 2])
    with pytest.raises(ContractError):
        median_per_dimension([])


def test_median_per_dimension_vs_sort_oracle():
    v = np.random.default_rng(0).normal(size=(101, 3))
    assert median_per_dimension(v).tolist() == per_dimension_median(v.tolist())


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=40))
def test_median_per_dimension_property(vectors):
    np.testing.assert_allclose(median_per_dimension(vectors), per_dimension_median(vectors), rtol=1e-12, atol=1e-6)


@pytest.mark.parametrize("variant", ["ME", "DeepGrid", "ArchiveSampling"])
def test_zero_noise_corrected_equals_best_of_cell(variant, cvt64):
    task = ArmTask(noise=NoiseModel())
    s = 512 if variant == "ArchiveSampling" else 128
    opt = Optimizer(AlgorithmConfig(variant, s, depth=None if variant == "ME" else 4), task, cvt64, seed=1)
    opt.run(10)
    a = opt.archive
    c = corrected_archive(a, task, 16, CorrectionMode.BEST, RngStream(2))
    np.testing.assert_array_equal(np.max(a.fitness, axis=1), c.archive.fitness[:, 0])
    assert c.archive.qd_score() == a.qd_score()
    assert qd_score_loss(a.qd_score(-0.25), c.archive.qd_score(-0.25)) == 0
    assert c.evaluations == 16 * np.count_nonzero(a.sizes)


def test_one_cell_median_of_normals():
    task = LookupTask(NoiseModel(1.0, 0.0))
    c = Centroids(np.array([[0.5, 0.5]]))
    a = Archive(c, 3)
    a.try_add(SolutionRecord([0.0, 0.5, 0.5], 1, 0.3, [0.5, 0.5]))
    out = corrected_archive(a, task, 512, rng=RngStream(3))
    assert abs(out.archive.max_fitness()) <= 0.15
    r = out.results[0]
    assert r.m == 512 and r.fitness_variance == pytest.approx(1.0, rel=0.15)
    np.testing.assert_array_equal(r.descriptor_variance, [0.0, 0.0])


def test_drift_to_another_cell():
    task = LookupTask()
    grid = Centroids(np.array([[0.25, 0.5], [0.75, 0.5]]))
    a = Archive(grid, 3, 2, AdditionRule.DEEP_ELITIST, Selector.BEST)
    # Both records are stored in cell 0, but the fitter one truly lives in cell 1.
    a.try_add(SolutionRecord([0.0, 0.2, 0.5], 1, 0.0, [0.2, 0.5]))
    a.try_add(SolutionRecord([10.0, 0.9, 0.5], 1, 10.0, [0.2, 0.5]))
    out = corrected_archive(a, task, 8, CorrectionMode.BEST, RngStream(0))
    assert out.archive.sizes.tolist() == [0, 1]
    assert out.archive.max_fitness() == 10.0
    assert list(out.results) == [1]


def test_collisions_keep_the_fitter_phantom():
    task = LookupTask()
    grid = Centroids(np.array([[0.25, 0.5], [0.75, 0.5]]))
    a = Archive(grid, 3)
    a.try_add(SolutionRecord([0.4, 0.9, 0.5], 1, 0.4, [0.2, 0.5]))
    a.try_add(SolutionRecord([0.7, 0.8, 0.5], 1, 0.7, [0.8, 0.5]))
    out = corrected_archive(a, task, 4, rng=RngStream(0))
    assert out.archive.sizes.tolist() == [0, 1]
    assert out.results[1].median_fitness == 0.7
    assert out.archive.coverage() <= a.coverage()


def test_in_cell_mode_uses_roulette(grid4):
    task = LookupTask()
    a = Archive(grid4, 3, 3, AdditionRule.DEEP_REPLACE_RANDOM, Selector.ROULETTE)
    for f in (0.0, 0.5, 1.0):
        a.try_add(SolutionRecord([f, 0.2, 0.2], 1, f, [0.2, 0.2]))
    r = corrected_archive(a, task, 600, CorrectionMode.IN_CELL, RngStream(1)).results[0]
    # Weights are roughly (0, 1/3, 2/3): the median lands on the best record,
    # while the mix of picks shows up as fitness variance near 2/9 * 0.25.
    assert r.median_fitness == 1.0
    assert r.fitness_variance == pytest.approx(0.25 * 2 / 9, rel=0.2)


def test_corrected_archive_errors_and_purity(grid4):
    task = LookupTask(NoiseModel(0.1, 0.1))
    a = Archive(grid4, 3)
    with pytest.raises(EmptyArchiveError):
        corrected_archive(a, task, 8)
    a.try_add(SolutionRecord([0.0, 0.2, 0.2], 1, 0.0, [0.2, 0.2]))
    with pytest.raises(ConfigError):
        corrected_archive(a, task, 1)
    before = a.snapshot()
    x = corrected_archive(a, task, 32, rng=RngStream(5))
    y = corrected_archive(a, task, 32, rng=RngStream(5))
    assert a.same_content(before)
    assert x.archive.same_content(y.archive)


def test_qd_score_loss():
    assert qd_score_loss(100, 80) == pytest.approx(0.2)
    assert qd_score_loss(5.5, 5.5) == 0
    assert qd_score_loss(100, 120) == pytest.approx(-0.2)
    assert math.isnan(qd_score_loss(0.0, 3.0))


def test_reproducibility_examples():
    assert reproducibility_score({0: result(2.0)}, [2.0]) == 0.0
    assert reproducibility_score({0: result(0.0)}, [0.0]) == 1.0
    three = {0: result(1.0), 1: result(0.0), 2: result(3.0)}
    assert reproducibility_score(three, [2.0, 5.0, 3.0]) == pytest.approx(1.5)
    fit = {0: result(0.0, 1.0), 1: result(0.0, 4.0)}
    assert reproducibility_score(fit, [2.0, 4.0], fitness=True) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        reproducibility_score({0: result(1.0)}, [0.0])


def test_scalar_descriptor_variance_is_mean_of_dimensions():
    r = ReevalResult(0.0, np.zeros(2), 0.0, np.array([1.0, 3.0]), 4)
    assert r.scalar_descriptor_variance == 2.0


def test_collect_max_variance():
    runs = [{0: result(2.0), 3: result(1.0, 4.0)}, {0: result(5.0)}]
    d, f = collect_max_variance(runs, 5)
    assert d.tolist() == [5.0, 0.0, 0.0, 1.0, 0.0]
    assert f.tolist() == [0.0, 0.0, 0.0, 4.0, 0.0]
    d2, f2 = collect_max_variance(runs[::-1], 5)
    assert d2.tolist() == d.tolist() and f2.tolist() == f.tolist()
    # a single run normalised by itself
    own, _ = collect_max_variance([runs[0]], 5)
    assert reproducibility_score(runs[0], own) == 0.0


@given(st.lists(st.dictionaries(st.integers(0, 9), st.floats(0, 10), max_size=10), min_size=1, max_size=5))
def test_reproducibility_bounds(variance_maps):
    runs = [{c: result(v) for c, v in m.items()} for m in variance_maps]
    norm, _ = collect_max_variance(runs, 10)
    for run in runs:
        assert 0.0 <= reproducibility_score(run, norm) <= len(run)


def test_time_to_convergence_examples():
    assert time_to_convergence([1, 2, 3, 4, 5], [0, 50, 95, 99, 100]) == 3
    assert time_to_convergence([4, 5, 6], [7.0, 7.0, 7.0]) == 4
    assert time_to_convergence([1, 2, 3], [0.0, -10.0, -20.0]) == 3
    assert time_to_convergence([1, 2, 3], [-19.5, -19.0, -20.0]) == 1
    with pytest.raises(ContractError):
        time_to_convergence([], [])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50))
def test_time_to_convergence_vs_scan(increments):
    values = np.cumsum(increments).tolist()
    xs = list(range(10, 10 + len(values)))
    target = 0.95 * values[-1]
    expected = next(x for x, v in zip(xs, values) if v >= target)
    assert time_to_convergence(xs, values) == expected


def _cell_of_clones(n, genotype=(0.0, 0.5, 0.5)):
    c = Centroids(np.array([[0.5, 0.5]]))
    a = Archive(c, 3, n, AdditionRule.DEEP_REPLACE_RANDOM, Selector.ROULETTE)
    for i in range(n):
        a.try_add(SolutionRecord([genotype[0] + 0.001 * i, *genotype[1:]], 1, 0.0, [0.5, 0.5]))
    return a


def test_estimator_zero_noise_exact():
    rows = estimator_study(_cell_of_clones(20), LookupTask(), 1024, [16, 64, 1024], RngStream(1))
    assert len(rows) == 12
    assert all(r.median_error == 0 and r.q3_error == 0 for r in rows)


def test_estimator_clt_scaling_and_monotonicity():
    task = LookupTask(NoiseModel(1.0, 0.05))
    rows = estimator_study(_cell_of_clones(300), task, 4096, [16, 64, 256, 4096], RngStream(2))
    err = {(r.m, r.quantity, r.estimator): r.median_error for r in rows}
    ratio = err[(16, "fitness", "mean")] / err[(256, "fitness", "mean")]
    assert 4 * 0.7 <= ratio <= 4 * 1.3
    for q in ("fitness", "descriptor"):
        for e in ("mean", "median"):
            series = [err[(m, q, e)] for m in (16, 64, 256, 4096)]
            inversions = sum(b > a for a, b in zip(series, series[1:]))
            assert inversions <= 1
            assert err[(4096, q, e)] / err[(16, q, e)] < 0.2
    with pytest.raises(ConfigError):
        estimator_study(_cell_of_clones(2), task, 8, [16])
