"""Shared domain types, running statistics and the keyed random-number contract.

Every random draw in the library comes from an :class:`RngStream`. A stream is a
counter-based generator: a draw is a pure function of ``(seed, stream path, ids,
draw index)``, so the value used for, say, sample 3 of offspring 17 in
generation 42 does not depend on how a batch was chunked or on which thread
computed it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "ContractError",
    "ConfigError",
    "EmptyArchiveError",
    "Evaluation",
    "SolutionRecord",
    "RecordBatch",
    "RngStream",
    "fresh_record",
    "sample_mean",
    "update_running_mean",
    "running_mean_step",
]


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class EmptyArchiveError(LookupError):
    """The operation needs at least one occupied cell."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Evaluation:
    """One noisy draw of (fitness, descriptor) for a genotype."""

    fitness: float
    descriptor: np.ndarray

    def __post_init__(self) -> None:
        descriptor = _frozen(np.array(self.descriptor, dtype=float).reshape(-1))
        object.__setattr__(self, "fitness", float(self.fitness))
        object.__setattr__(self, "descriptor", descriptor)
        if not np.isfinite(self.fitness) or not np.all(np.isfinite(descriptor)):
            raise ContractError("evaluation values must be finite")


@dataclass(frozen=True)
class SolutionRecord:
    """A genotype together with the running means of its evaluations.

    ``mean_fitness`` and ``mean_descriptor`` are the estimates of the expected
    fitness and descriptor; ``eval_count`` is how many evaluations they average.
    """

    genotype: np.ndarray
    eval_count: int
    mean_fitness: float
    mean_descriptor: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "genotype", _frozen(np.array(self.genotype, dtype=float).reshape(-1)))
        object.__setattr__(
            self, "mean_descriptor", _frozen(np.array(self.mean_descriptor, dtype=float).reshape(-1))
        )
        object.__setattr__(self, "mean_fitness", float(self.mean_fitness))
        object.__setattr__(self, "eval_count", int(self.eval_count))
        if self.eval_count < 1:
            raise ContractError(f"eval_count must be >= 1, got {self.eval_count}")

    def same_as(self, other: SolutionRecord) -> bool:
        """Bitwise equality of every field."""
        return (
            self.eval_count == other.eval_count
            and self.mean_fitness == other.mean_fitness
            and np.array_equal(self.genotype, other.genotype)
            and np.array_equal(self.mean_descriptor, other.mean_descriptor)
        )


def fresh_record(genotype: Sequence[float] | np.ndarray, evaluation: Evaluation) -> SolutionRecord:
    """Record holding a single evaluation."""
    return SolutionRecord(
        genotype=genotype,
        eval_count=1,
        mean_fitness=evaluation.fitness,
        mean_descriptor=evaluation.descriptor,
    )


def running_mean_step(mean, count, value):
    """``mean + (value - mean) / (count + 1)``; works on scalars and arrays alike."""
    return mean + (value - mean) / (count + 1)


def sample_mean(x: np.ndarray, axis: int = 1) -> np.ndarray:
    """Mean along ``axis`` taken relative to the first sample.

    Exact when all samples are equal, which a plain float sum is not.
    """
    x = np.asarray(x, dtype=float)
    first = np.take(x, [0], axis=axis)
    return np.squeeze(first, axis=axis) + np.mean(x - first, axis=axis)


def update_running_mean(record: SolutionRecord, evaluation: Evaluation) -> SolutionRecord:
    """Fold one more evaluation into the record's running means."""
    if evaluation.descriptor.shape != record.mean_descriptor.shape:
        raise ContractError(
            f"descriptor has {evaluation.descriptor.size} dims, record has {record.mean_descriptor.size}"
        )
    k = record.eval_count
    return SolutionRecord(
        genotype=record.genotype,
        eval_count=k + 1,
        mean_fitness=running_mean_step(record.mean_fitness, k, evaluation.fitness),
        mean_descriptor=running_mean_step(record.mean_descriptor, k, evaluation.descriptor),
    )


@dataclass
class RecordBatch:
    """Struct-of-arrays view of many records (the hot-path representation)."""

    genotypes: np.ndarray
    eval_counts: np.ndarray
    fitness: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self) -> None:
        self.genotypes = np.asarray(self.genotypes, dtype=float)
        self.eval_counts = np.asarray(self.eval_counts, dtype=np.int64)
        self.fitness = np.asarray(self.fitness, dtype=float)
        self.descriptors = np.asarray(self.descriptors, dtype=float)
        m = len(self.fitness)
        if not (len(self.genotypes) == len(self.eval_counts) == len(self.descriptors) == m):
            raise ContractError("record batch fields have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.fitness)

    def __iter__(self) -> Iterator[SolutionRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> SolutionRecord:
        return SolutionRecord(
            self.genotypes[i], int(self.eval_counts[i]), self.fitness[i], self.descriptors[i]
        )

    @classmethod
    def from_records(cls, records: Sequence[SolutionRecord], genotype_dim: int, descriptor_dim: int) -> RecordBatch:
        if not records:
            return cls.empty(genotype_dim, descriptor_dim)
        return cls(
            genotypes=np.stack([r.genotype for r in records]),
            eval_counts=np.array([r.eval_count for r in records]),
            fitness=np.array([r.mean_fitness for r in records]),
            descriptors=np.stack([r.mean_descriptor for r in records]),
        )

    @classmethod
    def empty(cls, genotype_dim: int, descriptor_dim: int) -> RecordBatch:
        return cls(
            np.empty((0, genotype_dim)), np.empty(0, dtype=np.int64), np.empty(0), np.empty((0, descriptor_dim))
        )


# -- counter-based random streams ---------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


def _absorb(state: np.ndarray, value) -> np.ndarray:
    value = np.asarray(value).astype(np.uint64)
    return _mix(state + _GOLDEN * (value + np.uint64(1)))


@dataclass(frozen=True)
class RngStream:
    """Keyed, splittable source of randomness.

    ``RngStream(seed).stream(a, b)`` names an independent sub-stream. Draw
    methods take an ``ids`` argument: an integer array (or a tuple of arrays
    broadcast together) naming *which* draws are wanted, so identical
    ``(seed, path, ids)`` always give identical values.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def stream(self, *ids: int) -> RngStream:
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    @cached_property
    def _key(self) -> np.uint64:
        with np.errstate(over="ignore"):
            state = _mix(np.uint64(self.seed))
            for part in self.path:
                state = _absorb(state, np.uint64(part & _MASK64))
        return np.uint64(state)

    def _bits(self, ids, size: int) -> np.ndarray:
        if not isinstance(ids, tuple):
            ids = (ids,)
        with np.errstate(over="ignore"):
            state = np.asarray(self._key)
            for part in ids:
                state = _absorb(state, np.asarray(part, dtype=np.int64))
            counters = np.arange(size, dtype=np.uint64)
            return _absorb(state[..., None], counters)

    def uniform(self, ids, size: int = 1) -> np.ndarray:
        """Uniform draws in the open interval (0, 1), shape ``ids.shape + (size,)``."""
        bits = self._bits(ids, size)
        return ((bits >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53

    def normal(self, ids, size: int = 1) -> np.ndarray:
        """Standard normal draws (Box-Muller), shape ``ids.shape + (size,)``."""
        u = self.uniform(ids, 2 * size)
        radius = np.sqrt(-2.0 * np.log(u[..., 0::2]))
        return radius * np.cos(2.0 * np.pi * u[..., 1::2])

    def integers(self, ids, high, size: int = 1) -> np.ndarray:
        """Integers uniform in ``[0, high)``; ``high`` may be an array broadcast against ``ids``."""
        high = np.asarray(high)
        u = self.uniform(ids, size)
        idx = np.floor(u * high[..., None]).astype(np.int64)
        return np.minimum(idx, high[..., None] - 1)

    def generator(self) -> np.random.Generator:
        """A conventional numpy generator seeded from this stream, for bulk draws."""
        return np.random.default_rng(int(self._key))
