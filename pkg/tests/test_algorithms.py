import numpy as np
import pytest
from scipy import stats

from uqd import algorithms as alg
from uqd.algorithms import (
    AlgorithmConfig,
    BudgetPlan,
    Optimizer,
    Variant,
    initialize,
    make_archive,
    median_evals_number,
    plan_budget,
    step_archive_sampling,
    step_map_elites,
    step_pas,
)
from uqd.archive import AdditionRule, Archive
from uqd.core import ConfigError, RngStream, SolutionRecord
from uqd.tasks import ArmTask, NoiseModel, evaluate_batch
from uqd.tessellation import Centroids
from uqd.variation import VariationParams, iso_line_batch

from .oracles import summation_mean

CLEAN = ArmTask(noise=NoiseModel())


def test_plan_budget_examples():
    assert plan_budget(AlgorithmConfig("ME", 1024), 1024) == BudgetPlan(1024, 1, 0)
    assert plan_budget(AlgorithmConfig("ME-Random", 77), 10) == BudgetPlan(77, 1, 0)
    assert plan_budget(AlgorithmConfig("DeepGrid", 100), 10) == BudgetPlan(100, 1, 0)
    assert plan_budget(AlgorithmConfig("ME-Sampling", 1024, samples_per_offspring=8), 1024) == BudgetPlan(128, 8, 0)
    assert plan_budget(AlgorithmConfig("ME-Sampling", 64), 1024) == BudgetPlan(2, 32, 0)
    assert plan_budget(AlgorithmConfig("DeepGridSampling", 100), 4) == BudgetPlan(12, 8, 0)
    assert plan_budget(AlgorithmConfig("ArchiveSampling", 4096), 1024) == BudgetPlan(2048, 1, 2048)
    assert plan_budget(AlgorithmConfig("ParallelAdaptiveSampling", 4096), 1024, 5) == BudgetPlan(409, 5, 2048)


def test_default_parameters():
    assert AlgorithmConfig("ME-Sampling", 64).samples_per_offspring == 32
    assert AlgorithmConfig("DeepGridSampling", 64).samples_per_offspring == 8
    assert AlgorithmConfig("DeepGrid", 64).depth == 32
    assert AlgorithmConfig("DeepGridSampling", 64).depth == 32
    assert AlgorithmConfig("ArchiveSampling", 64).depth == 2
    assert AlgorithmConfig("ParallelAdaptiveSampling", 64).depth == 2


def test_config_errors():
    with pytest.raises(ConfigError):
        AlgorithmConfig("ME", 10, samples_per_offspring=4)
    with pytest.raises(ConfigError):
        AlgorithmConfig("ME", 10, depth=2)
    with pytest.raises(ConfigError):
        AlgorithmConfig("ME", 0)
    with pytest.raises(ConfigError):
        AlgorithmConfig("ArchiveSampling", 2048).check(1024)
    with pytest.raises(ConfigError):
        plan_budget(AlgorithmConfig("ME-Sampling", 16), 4)  # 16 // 32 == 0 offspring
    with pytest.raises(ValueError):
        AlgorithmConfig("NSGA", 10)


def _archive_with_counts(counts):
    c = Centroids(np.array([[0.5, 0.5]]))
    a = Archive(c, 1, max(1, len(counts)), AdditionRule.DEEP_ELITIST)
    for i, n in enumerate(counts):
        a.try_add(SolutionRecord([0.0], n, -i, [0.5, 0.5]))
    return a


def test_median_evals_number():
    assert median_evals_number(_archive_with_counts([2, 4, 6])) == 4
    assert median_evals_number(_archive_with_counts([])) == 1
    assert median_evals_number(_archive_with_counts([9, 1, 3, 1])) == 1
    assert median_evals_number(_archive_with_counts([5, 5, 5, 5])) == 5


def test_me_budget_and_monotone_qd(grid4):
    cfg = AlgorithmConfig("ME", 4)
    a = make_archive(cfg, grid4, 8)
    initialize(a, cfg, CLEAN, RngStream(1))
    last = a.qd_score()
    for g in range(30):
        rep = step_map_elites(a, cfg, CLEAN, RngStream(1).stream(g), g)
        assert rep.evaluations == 4 and rep.added + rep.rejected == 4
        assert a.qd_score() >= last
        last = a.qd_score()


def test_me_step_matches_sequential_loop(grid4):
    """One vectorised step against a plain per-offspring loop drawing the same keyed values."""
    task = ArmTask()
    cfg = AlgorithmConfig("ME", 16)
    a = make_archive(cfg, grid4, 8)
    initialize(a, cfg, task, RngStream(2))
    oracle = a.snapshot()
    rng = RngStream(3)
    step_map_elites(a, cfg, task, rng, 0)

    parents = oracle.snapshot()  # selection reads the archive as it was before the step
    for i in range(16):
        u = rng.stream(alg._SELECT).uniform(np.array([i]), 4)[0]
        occupied = [c for c in range(4) if parents.sizes[c] > 0]
        cx = occupied[min(int(u[0] * len(occupied)), len(occupied) - 1)]
        cy = occupied[min(int(u[2] * len(occupied)), len(occupied) - 1)]
        z = rng.stream(alg._MUTATE).normal(np.array([i]), 9)
        child = iso_line_batch(parents.genotypes[cx, :1], parents.genotypes[cy, :1], VariationParams(), z)
        f, d = evaluate_batch(task, child, 1, rng.stream(alg._EVAL), ids=np.array([i]))
        oracle.try_add(SolutionRecord(child[0], 1, f[0, 0], d[0, 0]))
    assert a.same_content(oracle)


def test_me_random_genotypes_uniform(grid4):
    g = alg._offspring(None, 20_000, AlgorithmConfig("ME-Random", 20_000), 3, RngStream(4))
    for j in range(3):
        assert stats.kstest(g[:, j], "uniform").pvalue > 1e-3


def test_me_sampling_means_match_oracle(grid4):
    task = ArmTask()
    rng = RngStream(5)
    g = np.random.default_rng(0).uniform(size=(6, 8))
    batch = alg._evaluate_new(g, 32, task, rng, 1)
    f, d = evaluate_batch(task, g, 32, rng.stream(alg._EVAL))
    for i in range(6):
        assert batch.eval_counts[i] == 32
        assert batch.fitness[i] == pytest.approx(summation_mean(f[i]), abs=1e-12)
        assert batch.descriptors[i, 1] == pytest.approx(summation_mean(d[i, :, 1]), abs=1e-12)


def test_deep_grid_single_cell_always_overwrites():
    c = Centroids(np.array([[0.5, 0.5]]))
    opt = Optimizer(AlgorithmConfig("DeepGrid", 8, depth=1), ArmTask(), c, seed=1)
    opt.initialize()
    for _ in range(5):
        rep = opt.step()
        assert rep.added == 8 and rep.rejected == 0
        assert opt.archive.sizes[0] == 1


def test_deep_grid_depth_bound(cvt64):
    opt = Optimizer(AlgorithmConfig("DeepGrid", 256, depth=4), ArmTask(), cvt64, seed=2)
    opt.run(20)
    assert opt.archive.sizes.max() <= 4


def test_archive_sampling_counts_and_budget(grid4):
    task = ArmTask()
    cfg = AlgorithmConfig("ArchiveSampling", 20, depth=2)
    opt = Optimizer(cfg, task, grid4, seed=3)
    opt.initialize()
    for g in range(12):
        occupied = int(opt.archive.sizes.sum())
        rep = opt.step()
        expected_reevals = 0 if g == 0 else occupied
        assert rep.reevaluations == expected_reevals
        assert rep.evaluations == expected_reevals + 12 <= 20
        assert opt.archive.counts.max() <= g + 2


def test_archive_sampling_zero_noise_reeval_is_noop(cvt64):
    cfg = AlgorithmConfig("ArchiveSampling", 256)
    a = make_archive(cfg, cvt64, 8)
    initialize(a, cfg, CLEAN, RngStream(0))
    step_archive_sampling(a, cfg, CLEAN, RngStream(1), 0)
    before = a.snapshot()
    reevals = alg._reevaluate(a, CLEAN, RngStream(2), 1)
    assert reevals == before.sizes.sum()
    assert a.qd_score() == before.qd_score()
    np.testing.assert_array_equal(a.sizes, before.sizes)


def test_pas_first_generation_matches_archive_sampling_plan(grid4):
    task = ArmTask()
    cfg = AlgorithmConfig("ParallelAdaptiveSampling", 20)
    a = make_archive(cfg, grid4, 8)
    initialize(a, cfg, task, RngStream(0))
    rep = step_pas(a, cfg, task, RngStream(1), 0)
    assert rep.n_evals == 1
    assert (rep.n_offspring, rep.evals_per_offspring) == (12, 1)


def test_pas_constant_median(grid4):
    cfg = AlgorithmConfig("ParallelAdaptiveSampling", 8 + 20)
    a = make_archive(cfg, grid4, 8)
    for c in range(4):
        x = grid4.points[c]
        a.try_add(SolutionRecord(np.full(8, 0.5), 5, -1.0, x))
    rep = step_pas(a, cfg, ArmTask(), RngStream(1), 1)
    assert rep.n_evals == 5 and rep.evals_per_offspring == 5 and rep.n_offspring == 4
    assert rep.evaluations == 4 + 20 <= 28


def test_pas_n_evals_non_decreasing_without_evictions(grid4):
    cfg = AlgorithmConfig("ParallelAdaptiveSampling", 4 * 500 + 16, depth=500)
    opt = Optimizer(cfg, ArmTask(), grid4, seed=4)
    opt.initialize()
    seen = []
    for _ in range(15):
        rep = opt.step()
        assert opt.archive.sizes.max() < 500  # nothing evicted
        seen.append(rep.n_evals)
    assert seen == sorted(seen) and seen[-1] > 1


@pytest.mark.parametrize("variant", list(Variant))
def test_budget_never_exceeded(variant, cvt64):
    s = 512
    opt = Optimizer(AlgorithmConfig(variant, s), ArmTask(), cvt64, seed=5)
    for rep in opt.run(15):
        assert rep.evaluations <= s
        if variant in (Variant.ME, Variant.ME_RANDOM, Variant.DEEP_GRID):
            assert rep.evaluations == s


@pytest.mark.parametrize("variant", list(Variant))
def test_thread_count_independence(variant, cvt64):
    archives = []
    for threads in (1, 8):
        opt = Optimizer(AlgorithmConfig(variant, 512), ArmTask(), cvt64, seed=6, threads=threads)
        opt.run(10)
        archives.append(opt.archive)
    assert archives[0].same_content(archives[1])


@pytest.mark.parametrize("sampled,plain", [("ME-Sampling", "ME"), ("DeepGridSampling", "DeepGrid")])
def test_n_equal_one_reduction(sampled, plain, cvt64):
    a = Optimizer(AlgorithmConfig(sampled, 128, samples_per_offspring=1), ArmTask(), cvt64, seed=7)
    b = Optimizer(AlgorithmConfig(plain, 128), ArmTask(), cvt64, seed=7)
    a.run(10)
    b.run(10)
    assert a.archive.same_content(b.archive)


def test_optimizer_determinism_and_order(cvt64):
    runs = []
    for _ in range(2):
        opt = Optimizer(AlgorithmConfig("DeepGridSampling", 256), ArmTask(), cvt64, seed=8)
        runs.append([r.qd_score for r in opt.run(5)])
        runs.append(opt.archive)
    assert runs[0] == runs[2] and runs[1].same_content(runs[3])
    opt = Optimizer(AlgorithmConfig("ME", 16), ArmTask(), cvt64, seed=8)
    with pytest.raises(ConfigError):
        opt.step()
