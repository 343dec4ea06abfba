"""Flat and deep CVT archives.

Cells are stored as dense ``(k, D, ...)`` arrays. Slots ``0..size-1`` of a cell
are occupied; under the elitist rules they are kept sorted by mean fitness,
best first, with earlier arrivals ahead of later ones on equal fitness.
"""

from __future__ import annotations

import copy
import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, ContractError, EmptyArchiveError, RecordBatch, RngStream, SolutionRecord
from .tessellation import Centroids

__all__ = [
    "AdditionRule",
    "Selector",
    "AddOutcome",
    "Archive",
    "in_cell_index",
    "roulette_weights",
    "ROULETTE_EPS",
    "ROULETTE_DELTA",
]

ROULETTE_EPS = 1e-3
ROULETTE_DELTA = 1e-12

_REJECTED, _ADDED, _REPLACED = 0, 1, 2
_STATUS = {_REJECTED: "rejected", _ADDED: "added", _REPLACED: "replaced"}


class AdditionRule(str, enum.Enum):
    ELITIST_FLAT = "elitist-flat"
    DEEP_REPLACE_RANDOM = "deep-replace-random"
    DEEP_ELITIST = "deep-elitist"


class Selector(str, enum.Enum):
    BEST = "best"
    ROULETTE = "roulette"


@dataclass(frozen=True)
class AddOutcome:
    status: str  # "added", "replaced" or "rejected"
    cell: int
    victim: SolutionRecord | None = None


def roulette_weights(fitness: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Fitness-proportional weights shifted by the cell minimum.

    Works row-wise on ``(m, D)`` arrays; slots outside ``mask`` get weight 0.
    """
    fitness = np.atleast_2d(np.asarray(fitness, dtype=float))
    if mask is None:
        mask = np.ones(fitness.shape, dtype=bool)
    lo = np.min(np.where(mask, fitness, np.inf), axis=1, keepdims=True)
    hi = np.max(np.where(mask, fitness, -np.inf), axis=1, keepdims=True)
    shifted = np.where(mask, fitness, lo) - lo
    weights = shifted + ROULETTE_EPS * (hi - lo + ROULETTE_DELTA)
    return np.where(mask, weights, 0.0)


def _pick(fitness: np.ndarray, sizes: np.ndarray, selector: Selector, u: np.ndarray) -> np.ndarray:
    depth = fitness.shape[1]
    mask = np.arange(depth)[None, :] < sizes[:, None]
    if selector is Selector.BEST:
        return np.argmax(np.where(mask, fitness, -np.inf), axis=1)
    cum = np.cumsum(roulette_weights(fitness, mask), axis=1)
    target = u * cum[:, -1]
    slots = np.sum(cum <= target[:, None], axis=1)
    return np.minimum(slots, sizes - 1)


def in_cell_index(fitness_values, selector: Selector | str, u: float) -> int:
    """Slot chosen inside one cell given its fitness values and a uniform draw ``u``."""
    values = np.asarray(fitness_values, dtype=float).reshape(1, -1)
    if values.size == 0:
        raise ContractError("cannot select from an empty cell")
    slot = _pick(values, np.array([values.shape[1]]), Selector(selector), np.array([u]))
    return int(slot[0])


class Archive:
    """CVT archive with ``depth`` slots per cell."""

    def __init__(
        self,
        centroids: Centroids,
        genotype_dim: int,
        depth: int = 1,
        rule: AdditionRule | str = AdditionRule.ELITIST_FLAT,
        selector: Selector | str = Selector.BEST,
        rng: RngStream | None = None,
    ):
        self.centroids = centroids
        self.depth = int(depth)
        self.rule = AdditionRule(rule)
        self.selector = Selector(selector)
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {depth}")
        if self.rule is AdditionRule.ELITIST_FLAT and self.depth != 1:
            raise ConfigError("elitist-flat archives have depth 1")
        k, dd = centroids.k, centroids.dim
        self.genotype_dim = int(genotype_dim)
        self.fitness = np.full((k, self.depth), -np.inf)
        self.descriptors = np.zeros((k, self.depth, dd))
        self.genotypes = np.zeros((k, self.depth, self.genotype_dim))
        self.counts = np.zeros((k, self.depth), dtype=np.int64)
        self.order = np.zeros((k, self.depth), dtype=np.int64)
        self.sizes = np.zeros(k, dtype=np.int64)
        self._seq = 0
        # Victim draws for deep-replace-random are keyed by attempt number.
        self._victim_rng = (rng if rng is not None else RngStream(0)).stream(0x76)
        self._attempts = 0

    # -- shape ---------------------------------------------------------------------

    @property
    def k(self) -> int:
        return self.centroids.k

    @property
    def descriptor_dim(self) -> int:
        return self.centroids.dim

    def __len__(self) -> int:
        return int(self.sizes.sum())

    def occupied_cells(self) -> np.ndarray:
        return np.flatnonzero(self.sizes)

    # -- insertion -------------------------------------------------------------------

    def _write(self, cell, slot, genotype, count, fitness, descriptor) -> None:
        self.genotypes[cell, slot] = genotype
        self.counts[cell, slot] = count
        self.fitness[cell, slot] = fitness
        self.descriptors[cell, slot] = descriptor
        self.order[cell, slot] = self._seq
        self._seq += 1

    def _insert(self, cell, genotype, count, fitness, descriptor, u, keep_victim=False):
        size = self.sizes[cell]
        depth = self.depth
        victim = None
        if self.rule is AdditionRule.DEEP_REPLACE_RANDOM:
            if size < depth:
                slot, status = size, _ADDED
                self.sizes[cell] = size + 1
            else:
                slot, status = min(int(u * depth), depth - 1), _REPLACED
                if keep_victim:
                    victim = self.record_at(cell, slot)
            self._write(cell, slot, genotype, count, fitness, descriptor)
            return status, victim

        row = self.fitness[cell]
        if size == depth:
            if not fitness > row[depth - 1]:
                return _REJECTED, None
            if keep_victim:
                victim = self.record_at(cell, depth - 1)
            last, status = depth - 1, _REPLACED
        else:
            last, status = size, _ADDED
            self.sizes[cell] = size + 1
        pos = last
        while pos > 0 and row[pos - 1] < fitness:
            pos -= 1
        if pos < last:
            for arr in (self.fitness, self.descriptors, self.genotypes, self.counts, self.order):
                arr[cell, pos + 1:last + 1] = arr[cell, pos:last]
        self._write(cell, pos, genotype, count, fitness, descriptor)
        return status, victim

    def _check(self, genotype_dim: int, descriptor_dim: int) -> None:
        if genotype_dim != self.genotype_dim or descriptor_dim != self.descriptor_dim:
            raise ContractError(
                f"record dims ({genotype_dim}, {descriptor_dim}) do not match archive "
                f"({self.genotype_dim}, {self.descriptor_dim})"
            )

    def try_add(self, record: SolutionRecord) -> AddOutcome:
        """Offer one record to the cell its mean descriptor falls in."""
        self._check(record.genotype.size, record.mean_descriptor.size)
        cell = int(self.centroids.lookup(record.mean_descriptor[None, :])[0])
        u = float(self._victim_rng.uniform(np.array([self._attempts]))[0, 0])
        self._attempts += 1
        status, victim = self._insert(
            cell, record.genotype, record.eval_count, record.mean_fitness, record.mean_descriptor, u, True
        )
        return AddOutcome(_STATUS[status], cell, victim)

    def add_batch(self, batch: RecordBatch) -> tuple[int, int]:
        """Offer records in order; same result as calling :meth:`try_add` on each.

        Returns ``(accepted, rejected)`` where replacements count as accepted.
        """
        m = len(batch)
        if m == 0:
            return 0, 0
        self._check(batch.genotypes.shape[1], batch.descriptors.shape[1])
        cells = self.centroids.lookup(batch.descriptors)
        u = self._victim_rng.uniform(np.arange(self._attempts, self._attempts + m))[:, 0]
        self._attempts += m
        accepted = 0
        insert = self._insert
        for i, cell in enumerate(cells.tolist()):
            status, _ = insert(
                cell, batch.genotypes[i], batch.eval_counts[i], batch.fitness[i], batch.descriptors[i], u[i]
            )
            accepted += status != _REJECTED
        return accepted, m - accepted

    # -- selection -------------------------------------------------------------------

    def select(self, u_cell: np.ndarray, u_slot: np.ndarray, selector: Selector | str | None = None):
        """Uniform occupied cell per ``u_cell`` draw, then an in-cell pick per ``u_slot``.

        Returns ``(cells, slots)`` index arrays.
        """
        occupied = self.occupied_cells()
        if occupied.size == 0:
            raise EmptyArchiveError("cannot select from an empty archive")
        u_cell = np.asarray(u_cell, dtype=float)
        idx = np.minimum((u_cell * occupied.size).astype(np.int64), occupied.size - 1)
        cells = occupied[idx]
        return cells, self.pick_in_cells(cells, u_slot, selector)

    def pick_in_cells(self, cells: np.ndarray, u: np.ndarray, selector: Selector | str | None = None) -> np.ndarray:
        selector = self.selector if selector is None else Selector(selector)
        cells = np.asarray(cells, dtype=np.int64)
        if np.any(self.sizes[cells] == 0):
            raise ContractError("cannot select from an empty cell")
        return _pick(self.fitness[cells], self.sizes[cells], selector, np.asarray(u, dtype=float))

    def in_cell_select(self, cell: int, rng: RngStream, draw_id: int = 0, selector=None) -> SolutionRecord:
        u = rng.uniform(np.array([draw_id]))[:, 0]
        slot = int(self.pick_in_cells(np.array([cell]), u, selector)[0])
        return self.record_at(cell, slot)

    def best_slots(self) -> np.ndarray:
        """Best slot of every cell (0 for empty cells)."""
        return _pick(self.fitness, self.sizes, Selector.BEST, np.zeros(self.k))

    # -- scores ----------------------------------------------------------------------

    def best_fitness(self) -> np.ndarray:
        """Best mean fitness per occupied cell, in cell order."""
        occupied = self.occupied_cells()
        return np.max(self.fitness[occupied], axis=1)

    def qd_score(self, offset: float = 0.0) -> float:
        """Sum over occupied cells of ``best fitness - offset``."""
        return float(np.sum(self.best_fitness() - offset))

    def coverage(self) -> float:
        return float(np.count_nonzero(self.sizes)) / self.k

    def max_fitness(self) -> float:
        if not self.sizes.any():
            raise EmptyArchiveError("max_fitness of an empty archive")
        return float(np.max(self.best_fitness()))

    # -- content ---------------------------------------------------------------------

    def record_at(self, cell: int, slot: int) -> SolutionRecord:
        if not 0 <= slot < self.sizes[cell]:
            raise ContractError(f"slot {slot} of cell {cell} is empty")
        return SolutionRecord(
            self.genotypes[cell, slot].copy(),
            int(self.counts[cell, slot]),
            float(self.fitness[cell, slot]),
            self.descriptors[cell, slot].copy(),
        )

    def cell_records(self, cell: int) -> list[SolutionRecord]:
        return [self.record_at(cell, s) for s in range(self.sizes[cell])]

    def _slots(self) -> tuple[np.ndarray, np.ndarray]:
        """(cell, slot) of every stored record, in insertion order."""
        mask = np.arange(self.depth)[None, :] < self.sizes[:, None]
        cells, slots = np.nonzero(mask)
        order = np.argsort(self.order[cells, slots], kind="stable")
        return cells[order], slots[order]

    def records(self) -> RecordBatch:
        cells, slots = self._slots()
        return RecordBatch(
            self.genotypes[cells, slots],
            self.counts[cells, slots],
            self.fitness[cells, slots],
            self.descriptors[cells, slots],
        )

    def clear(self) -> None:
        self.fitness.fill(-np.inf)
        self.sizes.fill(0)

    def drain(self) -> RecordBatch:
        """Remove and return every stored record, in insertion order."""
        batch = self.records()
        self.clear()
        return batch

    def snapshot(self) -> Archive:
        """Independent copy; mutating either one leaves the other untouched."""
        return copy.deepcopy(self)

    def empty_like(self) -> Archive:
        return Archive(self.centroids, self.genotype_dim, self.depth, self.rule, self.selector)

    def same_content(self, other: Archive) -> bool:
        """Cell-by-cell, slot-by-slot bitwise equality of stored records."""
        if not np.array_equal(self.sizes, other.sizes):
            return False
        mask = np.arange(self.depth)[None, :] < self.sizes[:, None]
        return (
            np.array_equal(self.fitness[mask], other.fitness[mask])
            and np.array_equal(self.descriptors[mask], other.descriptors[mask])
            and np.array_equal(self.genotypes[mask], other.genotypes[mask])
            and np.array_equal(self.counts[mask], other.counts[mask])
        )

    # -- serialisation ---------------------------------------------------------------

    def csv_header(self) -> list[str]:
        return (
            ["cell", "slot", "eval_count", "mean_fitness"]
            + [f"descriptor_{j}" for j in range(self.descriptor_dim)]
            + [f"genotype_{j}" for j in range(self.genotype_dim)]
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.csv_header())
            for cell in self.occupied_cells().tolist():
                for slot in range(self.sizes[cell]):
                    writer.writerow(
                        [cell, slot, int(self.counts[cell, slot]), f"{self.fitness[cell, slot]:.17g}"]
                        + [f"{v:.17g}" for v in self.descriptors[cell, slot]]
                        + [f"{v:.17g}" for v in self.genotypes[cell, slot]]
                    )

    @classmethod
    def from_csv(
        cls,
        path: str | Path,
        centroids: Centroids,
        depth: int = 1,
        rule: AdditionRule | str = AdditionRule.ELITIST_FLAT,
        selector: Selector | str = Selector.BEST,
    ) -> Archive:
        """Rebuild an archive written by :meth:`to_csv`, restoring cells and slot order verbatim."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        dd = sum(h.startswith("descriptor_") for h in header)
        n = sum(h.startswith("genotype_") for h in header)
        archive = cls(centroids, n, depth, rule, selector)
        archive._check(n, dd)
        for row in rows:
            cell, slot, count = int(row[0]), int(row[1]), int(row[2])
            values = [float(v) for v in row[3:]]
            if slot >= archive.depth:
                raise ContractError(f"slot {slot} exceeds archive depth {archive.depth}")
            archive._write(cell, slot, values[1 + dd:], count, values[0], values[1:1 + dd])
            archive.sizes[cell] = max(archive.sizes[cell], slot + 1)
        return archive
