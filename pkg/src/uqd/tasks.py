"""Noisy analytic tasks.

A task maps genotypes in ``[0, 1]^n`` to a clean (fitness, descriptor) pair and
then adds Gaussian noise. Noise is drawn from keyed streams, one per
``(genotype id, sample index)``, so a batch evaluates to the same values no
matter how it is split across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import ConfigError, ContractError, Evaluation, RngStream

__all__ = [
    "NoiseModel",
    "TaskSpec",
    "Task",
    "ArmTask",
    "HetSphereTask",
    "arm_evaluate",
    "het_sphere_evaluate",
    "evaluate_batch",
    "make_task",
]


@dataclass(frozen=True)
class NoiseModel:
    fitness_std: float = 0.0
    descriptor_std: float = 0.0
    # Extra solution-dependent std: gain * (last gene).
    heteroscedastic_gain: float = 0.0

    def __post_init__(self) -> None:
        if min(self.fitness_std, self.descriptor_std, self.heteroscedastic_gain) < 0:
            raise ConfigError("noise parameters must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.fitness_std == 0 and self.descriptor_std == 0 and self.heteroscedastic_gain == 0


@dataclass(frozen=True)
class TaskSpec:
    genotype_dim: int
    descriptor_dim: int
    fitness_range: tuple[float, float]
    noise: NoiseModel
    # Subtracted from every cell's fitness when summing a QD-Score.
    qd_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.genotype_dim < 1 or self.descriptor_dim < 1:
            raise ConfigError("task dimensions must be >= 1")
        if not self.fitness_range[0] < self.fitness_range[1]:
            raise ConfigError(f"fitness_range must be increasing, got {self.fitness_range}")


class Task:
    """Base class: subclasses provide :meth:`clean` and a :attr:`spec`."""

    name = "task"
    spec: TaskSpec

    def clean(self, genotypes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def noise_std(self, genotypes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-genotype (fitness std, descriptor std)."""
        noise = self.spec.noise
        het = noise.heteroscedastic_gain * genotypes[:, -1]
        return np.hypot(noise.fitness_std, het), np.hypot(noise.descriptor_std, het)

    def with_noise(self, noise: NoiseModel) -> Task:
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.spec = replace(self.spec, noise=noise)
        return clone

    def evaluate_with(self, genotypes: np.ndarray, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noisy evaluation of ``(m, n)`` genotypes given ``(m, 1 + dd)`` standard normals."""
        genotypes = np.asarray(genotypes, dtype=float)
        if genotypes.ndim != 2 or genotypes.shape[1] != self.spec.genotype_dim:
            raise ContractError(f"genotypes must have shape (m, {self.spec.genotype_dim})")
        fitness, descriptors = self.clean(genotypes)
        if self.spec.noise.is_zero:
            return fitness, descriptors
        fit_std, desc_std = self.noise_std(genotypes)
        fitness = fitness + fit_std * normals[:, 0]
        descriptors = np.clip(descriptors + desc_std[:, None] * normals[:, 1:], 0.0, 1.0)
        return fitness, descriptors


class ArmTask(Task):
    """Redundant planar arm: genes are joint angles, the end effector is the descriptor.

    Fitness is minus the population variance of the genes. The arm has ``n``
    links of length ``0.5 / n`` anchored at ``(0.5, 0.5)``, so the clean
    descriptor stays inside the unit square.
    """

    name = "arm"

    def __init__(self, genotype_dim: int = 8, noise: NoiseModel = NoiseModel(0.01, 0.01)):
        if genotype_dim < 1:
            raise ConfigError("arm needs at least one joint")
        self.spec = TaskSpec(genotype_dim, 2, (-0.24, 0.00027), noise, qd_offset=-0.25)

    def clean(self, genotypes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = genotypes.shape[1]
        fitness = -np.var(genotypes, axis=1)
        angles = np.cumsum(np.pi * (2.0 * genotypes - 1.0), axis=1)
        link = 0.5 / n
        x = 0.5 + link * np.sum(np.cos(angles), axis=1)
        y = 0.5 + link * np.sum(np.sin(angles), axis=1)
        return fitness, np.stack([x, y], axis=1)


class HetSphereTask(Task):
    """Sphere whose noise level is set by the last gene.

    Fitness is ``-sum((g_i - 0.5)^2)`` over all genes but the last, the
    descriptor is the first two genes, and the last gene scales the noise on
    both, so equally fit solutions differ in how reproducible they are.
    """

    name = "het_sphere"

    def __init__(self, genotype_dim: int = 8, noise: NoiseModel = NoiseModel(0.0, 0.0, 0.1)):
        if genotype_dim < 3:
            raise ConfigError("het_sphere needs at least 3 genes")
        lowest = -0.25 * (genotype_dim - 1)
        self.spec = TaskSpec(genotype_dim, 2, (lowest, 0.0), noise, qd_offset=lowest)

    def clean(self, genotypes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fitness = -np.sum((genotypes[:, :-1] - 0.5) ** 2, axis=1)
        return fitness, genotypes[:, :2].copy()


def _single(task: Task, genotype, rng: RngStream | None, draw_id: int) -> Evaluation:
    genotype = np.asarray(genotype, dtype=float).reshape(1, -1)
    rng = rng if rng is not None else RngStream(0)
    fitness, descriptor = _evaluate_chunk(task, genotype, np.array([draw_id]), 1, rng)
    return Evaluation(fitness[0, 0], descriptor[0, 0])


def arm_evaluate(genotype, noise: NoiseModel = NoiseModel(0.01, 0.01), rng: RngStream | None = None, draw_id: int = 0) -> Evaluation:
    genotype = np.asarray(genotype, dtype=float).reshape(-1)
    return _single(ArmTask(genotype.size, noise), genotype, rng, draw_id)


def het_sphere_evaluate(genotype, noise: NoiseModel = NoiseModel(0.0, 0.0, 0.1), rng: RngStream | None = None, draw_id: int = 0) -> Evaluation:
    genotype = np.asarray(genotype, dtype=float).reshape(-1)
    return _single(HetSphereTask(genotype.size, noise), genotype, rng, draw_id)


@lru_cache(maxsize=None)
def _pool(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=threads, thread_name_prefix="uqd-eval")


def _evaluate_chunk(task: Task, genotypes, ids, n_samples, rng):
    m = len(genotypes)
    dd = task.spec.descriptor_dim
    if task.spec.noise.is_zero:
        normals = np.zeros((m, n_samples, 1 + dd))
    else:
        normals = rng.normal((ids[:, None], np.arange(n_samples)[None, :]), 1 + dd)
    reps = np.repeat(genotypes, n_samples, axis=0)
    fitness, descriptors = task.evaluate_with(reps, normals.reshape(m * n_samples, 1 + dd))
    return fitness.reshape(m, n_samples), descriptors.reshape(m, n_samples, dd)


def evaluate_batch(
    task: Task,
    genotypes: np.ndarray,
    n_samples: int,
    rng: RngStream,
    ids: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every genotype ``n_samples`` times.

    Draw ``s`` of genotype ``i`` uses the stream ids ``(ids[i], s)``; ``ids``
    defaults to ``arange(m)``. Returns fitness ``(m, n_samples)`` and
    descriptors ``(m, n_samples, dd)``.
    """
    genotypes = np.asarray(genotypes, dtype=float).reshape(-1, task.spec.genotype_dim)
    if n_samples < 1:
        raise ContractError(f"n_samples must be >= 1, got {n_samples}")
    m = len(genotypes)
    ids = np.arange(m, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(ids) != m:
        raise ContractError("ids and genotypes differ in length")
    if m == 0:
        return np.empty((0, n_samples)), np.empty((0, n_samples, task.spec.descriptor_dim))
    if threads <= 1 or m < 2 * threads:
        return _evaluate_chunk(task, genotypes, ids, n_samples, rng)
    bounds = np.linspace(0, m, threads + 1).astype(int)
    futures = [
        _pool(threads).submit(_evaluate_chunk, task, genotypes[a:b], ids[a:b], n_samples, rng)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    parts = [f.result() for f in futures]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def make_task(name: str, genotype_dim: int | None = None, noise: NoiseModel | None = None) -> Task:
    """Task by name (``arm`` or ``het_sphere``) with optional overrides."""
    registry = {"arm": ArmTask, "het_sphere": HetSphereTask}
    if name not in registry:
        raise ConfigError(f"unknown task {name!r}; expected one of {sorted(registry)}")
    kwargs = {}
    if genotype_dim is not None:
        kwargs["genotype_dim"] = genotype_dim
    if noise is not None:
        kwargs["noise"] = noise
    return registry[name](**kwargs)
