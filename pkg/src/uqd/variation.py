"""Parent selection and iso+line mutation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ContractError, RngStream, SolutionRecord

__all__ = ["VariationParams", "iso_line_mutation", "iso_line_batch", "select_parent_uniform"]


@dataclass(frozen=True)
class VariationParams:
    sigma1: float = 0.005  # isotropic scale
    sigma2: float = 0.05  # scale along the parent-to-parent line
    shared_line_draw: bool = True  # one line coefficient for all genes

    def __post_init__(self) -> None:
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ConfigError("mutation scales must be nonnegative")


def iso_line_batch(x: np.ndarray, y: np.ndarray, params: VariationParams, normals: np.ndarray) -> np.ndarray:
    """Vectorised iso+line mutation.

    ``normals`` has shape ``(m, n + 1)`` when the line draw is shared and
    ``(m, 2n)`` otherwise; the first ``n`` columns are the isotropic draws.
    """
    n = x.shape[1]
    iso = normals[:, :n]
    line = normals[:, n:n + 1] if params.shared_line_draw else normals[:, n:2 * n]
    child = x + params.sigma1 * iso + params.sigma2 * line * (y - x)
    return np.clip(child, 0.0, 1.0)


def normals_needed(genotype_dim: int, params: VariationParams) -> int:
    return genotype_dim + (1 if params.shared_line_draw else genotype_dim)


def iso_line_mutation(x, y, params: VariationParams, rng: RngStream, draw_id: int = 0) -> np.ndarray:
    """Child of ``x`` pulled along the line towards ``y``, clipped to the unit box."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if x.shape != y.shape:
        raise ContractError(f"parents differ in length: {x.shape[1]} vs {y.shape[1]}")
    normals = rng.normal(np.array([draw_id]), normals_needed(x.shape[1], params))
    return iso_line_batch(x, y, params, normals)[0]


def select_parent_uniform(archive, rng: RngStream, draw_id: int = 0) -> SolutionRecord:
    """Uniform occupied cell, then the archive's in-cell selector picks the record."""
    u = rng.uniform(np.array([draw_id]), 2)
    cells, slots = archive.select(u[:, 0], u[:, 1])
    return archive.record_at(int(cells[0]), int(slots[0]))
