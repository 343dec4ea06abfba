"""Centroidal Voronoi tessellation of the descriptor space."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import ConfigError, ContractError, RngStream

__all__ = ["Centroids", "generate_cvt", "nearest_centroid", "lloyd"]

# A KD-tree proposes this many candidates; the winner is then picked with the
# same arithmetic and tie rule as a linear scan.
_CANDIDATES = 8


@dataclass(frozen=True, eq=False)
class Centroids:
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or len(points) == 0:
            raise ContractError("centroids must be a non-empty (k, d) matrix")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.points)

    def lookup(self, descriptors: np.ndarray) -> np.ndarray:
        """Cell index of every row of ``descriptors`` (shape ``(m, d)``)."""
        descriptors = np.asarray(descriptors, dtype=float)
        if descriptors.ndim != 2 or descriptors.shape[1] != self.dim:
            raise ContractError(f"descriptors must have shape (m, {self.dim}), got {descriptors.shape}")
        if len(descriptors) == 0:
            return np.empty(0, dtype=np.int64)
        if not np.all(np.isfinite(descriptors)):
            raise ContractError("descriptors must be finite")
        n_cand = min(_CANDIDATES, self.k)
        _, cand = self._tree.query(descriptors, k=n_cand)
        cand = np.sort(np.asarray(cand, dtype=np.int64).reshape(len(descriptors), n_cand), axis=1)
        diff = descriptors[:, None, :] - self.points[cand]
        dist = np.sum(diff * diff, axis=2)
        return cand[np.arange(len(descriptors)), np.argmin(dist, axis=1)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"c{j}" for j in range(self.dim)])
            for row in self.points:
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> Centroids:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([[float(v) for v in row] for row in rows[1:]]))


def nearest_centroid(descriptor, centroids: Centroids) -> int:
    """Index of the centroid closest to ``descriptor``; ties go to the lowest index."""
    descriptor = np.asarray(descriptor, dtype=float).reshape(-1)
    if descriptor.size != centroids.dim:
        raise ContractError(f"descriptor has {descriptor.size} dims, centroids have {centroids.dim}")
    return int(centroids.lookup(descriptor[None, :])[0])


def lloyd(samples: np.ndarray, k: int, iters: int) -> np.ndarray:
    """Lloyd's k-means from the first ``k`` samples, exactly ``iters`` rounds.

    A centroid that loses all its samples keeps its previous position.
    """
    centers = samples[:k].copy()
    d = samples.shape[1]
    for _ in range(iters):
        _, labels = cKDTree(centers).query(samples, k=1)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, d))
        for j in range(d):
            sums[:, j] = np.bincount(labels, weights=samples[:, j], minlength=k)
        owned = counts > 0
        centers[owned] = sums[owned] / counts[owned, None]
    return centers


def generate_cvt(
    k: int,
    d: int,
    n_init_samples: int = 50_000,
    iters: int = 100,
    rng: RngStream | None = None,
) -> Centroids:
    """Approximate CVT of ``[0, 1]^d`` with ``k`` cells via k-means on uniform samples."""
    if k < 1 or d < 1:
        raise ConfigError(f"need k >= 1 and d >= 1, got k={k}, d={d}")
    if k > n_init_samples:
        raise ConfigError(f"k={k} exceeds n_init_samples={n_init_samples}")
    rng = rng if rng is not None else RngStream(0)
    samples = rng.generator().uniform(0.0, 1.0, size=(n_init_samples, d))
    return Centroids(lloyd(samples, k, iters))
