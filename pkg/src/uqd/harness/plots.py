"""Plain SVG output: archive heatmaps over a rasterised Voronoi diagram and Pareto plots."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import ContractError
from ..tessellation import Centroids
from .stats import pareto_mask

__all__ = [
    "PlotError",
    "ParetoPoint",
    "raster_labels",
    "colormap",
    "render_archive_heatmap",
    "aggregate_points",
    "render_pareto_plot",
]

# Anchors of the viridis map, low to high.
_VIRIDIS = np.array(
    [
        [0x44, 0x01, 0x54], [0x47, 0x2D, 0x7B], [0x3B, 0x52, 0x8B], [0x2C, 0x72, 0x8E], [0x21, 0x91, 0x8C],
        [0x28, 0xAE, 0x80], [0x5E, 0xC9, 0x62], [0xAD, 0xDC, 0x30], [0xFD, 0xE7, 0x25],
    ],
    dtype=float,
)
_BACKGROUND = "#e6e6e6"
_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"]


class PlotError(ContractError):
    pass


def raster_labels(centroids: Centroids, resolution: int = 256) -> np.ndarray:
    """Nearest-centroid index of every pixel centre; row 0 is the top of the image (high y)."""
    if centroids.dim != 2:
        raise PlotError(f"heatmaps need a 2-D descriptor space, got {centroids.dim}-D")
    ticks = (np.arange(resolution) + 0.5) / resolution
    xs, ys = np.meshgrid(ticks, ticks[::-1])
    return centroids.lookup(np.column_stack([xs.ravel(), ys.ravel()])).reshape(resolution, resolution)


def colormap(values: np.ndarray, vmin: float, vmax: float) -> list[str]:
    t = np.clip((np.asarray(values, dtype=float) - vmin) / max(vmax - vmin, 1e-300), 0.0, 1.0)
    pos = t * (len(_VIRIDIS) - 1)
    lo = np.minimum(pos.astype(int), len(_VIRIDIS) - 2)
    frac = (pos - lo)[:, None]
    rgb = np.rint(_VIRIDIS[lo] * (1 - frac) + _VIRIDIS[lo + 1] * frac).astype(int)
    return ["#%02x%02x%02x" % tuple(c) for c in rgb]


def _cell_path(mask: np.ndarray) -> str:
    """Union of horizontal pixel runs as one SVG path."""
    parts = []
    for row in np.flatnonzero(mask.any(axis=1)):
        line = np.concatenate([[False], mask[row], [False]])
        edges = np.flatnonzero(line[1:] != line[:-1])
        for start, stop in zip(edges[::2], edges[1::2]):
            parts.append(f"M{start} {row}h{stop - start}v1h{start - stop}z")
    return "".join(parts)


def render_archive_heatmap(
    centroids: Centroids,
    values: np.ndarray,
    vmin: float,
    vmax: float,
    path: str | Path | None = None,
    title: str = "",
    resolution: int = 256,
) -> str:
    """SVG with one filled region per cell whose value is finite.

    ``values`` has one entry per centroid; NaN or -inf marks an empty cell.
    Returns the SVG text and writes it to ``path`` when given.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (centroids.k,):
        raise ContractError(f"expected {centroids.k} cell values, got shape {values.shape}")
    labels = raster_labels(centroids, resolution)
    cells = np.flatnonzero(np.isfinite(values))
    colors = colormap(values[cells], vmin, vmax) if cells.size else []
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {resolution} {resolution + 20}" '
        f'width="{2 * resolution}" height="{2 * (resolution + 20)}" shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="{resolution}" height="{resolution}" fill="{_BACKGROUND}"/>',
    ]
    for cell, color in zip(cells, colors):
        body.append(f'<path data-cell="{cell}" fill="{color}" d="{_cell_path(labels == cell)}"/>')
    body.append(
        f'<text x="2" y="{resolution + 14}" font-size="9" font-family="sans-serif">'
        f"{_escape(title)} [{vmin:.4g}, {vmax:.4g}]</text>"
    )
    body.append("</svg>")
    svg = "\n".join(body) + "\n"
    if path is not None:
        Path(path).write_text(svg)
    return svg


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


@dataclass(frozen=True)
class ParetoPoint:
    algorithm: str
    sampling_size: int
    qd: float
    time: float
    on_front: bool


def aggregate_points(records: Sequence[tuple[str, int, float, float]]) -> list[ParetoPoint]:
    """Coordinate-wise medians over replications per (algorithm, sampling size).

    ``records`` holds ``(algorithm, sampling_size, qd, time)`` tuples; points
    with a NaN coordinate are dropped.
    """
    groups: dict[tuple[str, int], list[tuple[float, float]]] = {}
    for algo, s, qd, t in records:
        if np.isfinite(qd) and np.isfinite(t):
            groups.setdefault((algo, int(s)), []).append((qd, t))
    if not groups:
        return []
    keys = sorted(groups)
    qd = np.array([np.median([p[0] for p in groups[k]]) for k in keys])
    time = np.array([np.median([p[1] for p in groups[k]]) for k in keys])
    front = pareto_mask(qd, time)
    return [ParetoPoint(k[0], k[1], float(q), float(t), bool(f)) for k, q, t, f in zip(keys, qd, time, front)]


def render_pareto_plot(
    records: Sequence[tuple[str, int, float, float]],
    path: str | Path | None = None,
    x_label: str = "time to convergence (s)",
    y_label: str = "corrected QD-Score",
) -> tuple[str, list[ParetoPoint]]:
    """Scatter of per-(algorithm, S) medians, marker radius growing with S, front dashed."""
    points = aggregate_points(records)
    width, height, pad = 480, 360, 50
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - 10}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="10" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" font-size="11" text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{height / 2}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2})">{y_label}</text>',
    ]
    if points:
        xs = np.array([p.time for p in points])
        ys = np.array([p.qd for p in points])
        x0, x1 = _span(xs)
        y0, y1 = _span(ys)

        def sx(v):
            return pad + (v - x0) / (x1 - x0) * (width - pad - 20)

        def sy(v):
            return height - pad - (v - y0) / (y1 - y0) * (height - pad - 20)

        sizes = sorted({p.sampling_size for p in points})
        algos = sorted({p.algorithm for p in points})
        body.append(f'<text x="{pad}" y="{height - pad + 14}" font-size="9" text-anchor="middle">{x0:.3g}</text>')
        body.append(f'<text x="{width - 20}" y="{height - pad + 14}" font-size="9" text-anchor="middle">{x1:.3g}</text>')
        body.append(f'<text x="{pad - 4}" y="{height - pad}" font-size="9" text-anchor="end">{y0:.3g}</text>')
        body.append(f'<text x="{pad - 4}" y="20" font-size="9" text-anchor="end">{y1:.3g}</text>')
        front = sorted((p for p in points if p.on_front), key=lambda p: (p.time, -p.qd))
        if len(front) > 1:
            coords = " ".join(f"{sx(p.time):.2f},{sy(p.qd):.2f}" for p in front)
            body.append(f'<polyline class="front" points="{coords}" fill="none" stroke="blue" stroke-dasharray="5,4"/>')
        for p in points:
            r = 3 + 2 * sizes.index(p.sampling_size)
            color = _PALETTE[algos.index(p.algorithm) % len(_PALETTE)]
            body.append(
                f'<circle class="marker" data-algorithm="{_escape(p.algorithm)}" data-s="{p.sampling_size}" '
                f'cx="{sx(p.time):.2f}" cy="{sy(p.qd):.2f}" r="{r}" fill="{color}" fill-opacity="0.8"/>'
            )
        for i, algo in enumerate(algos):
            color = _PALETTE[i % len(_PALETTE)]
            body.append(f'<circle cx="{width - 120}" cy="{20 + 14 * i}" r="4" fill="{color}"/>')
            body.append(f'<text x="{width - 112}" y="{24 + 14 * i}" font-size="10">{_escape(algo)}</text>')
    body.append("</svg>")
    svg = "\n".join(body) + "\n"
    if path is not None:
        Path(path).write_text(svg)
    return svg, points


def _span(v: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    margin = 0.05 * (hi - lo)
    return lo - margin, hi + margin
