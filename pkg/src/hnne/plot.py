"""Static SVG scatter plots of 2-D embeddings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

#: Categorical palette (matplotlib's tab20), cycled over label ranks.
PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7",
    "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)
UNLABELED_COLOR = "#1f77b4"
MAX_POINTS = 200_000


@dataclass(frozen=True)
class PlotStyle:
    size: int = 1000
    radius: float = 1.5
    margin: float = 0.02
    background: str = "#ffffff"
    max_points: int = MAX_POINTS
    seed: int = 0  # subsampling above max_points


def _viewport_coords(emb: np.ndarray, style: PlotStyle) -> np.ndarray:
    lo = emb.min(axis=0)
    hi = emb.max(axis=0)
    span = float((hi - lo).max())
    inner = style.size * (1.0 - 2.0 * style.margin)
    scale = inner / span if span > 0 else 0.0
    center = (lo + hi) / 2.0
    xy = (emb - center) * scale
    # SVG's y axis points down
    return np.column_stack([style.size / 2.0 + xy[:, 0], style.size / 2.0 - xy[:, 1]])


def svg_scatter(embedding, labels=None, style: PlotStyle | None = None) -> str:
    """Return the SVG document as a string."""
    style = style or PlotStyle()
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != 2:
        raise InvalidArgumentError(f"plots need a 2-D embedding, got shape {emb.shape}")
    if emb.shape[0] == 0:
        raise InvalidArgumentError("nothing to plot")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (emb.shape[0],):
            raise InvalidArgumentError(f"{labels.size} labels for {emb.shape[0]} points")
    if emb.shape[0] > style.max_points:
        keep = np.sort(np.random.default_rng(style.seed).choice(emb.shape[0], style.max_points, replace=False))
        emb = emb[keep]
        labels = labels[keep] if labels is not None else None
    xy = _viewport_coords(emb, style)
    if labels is None:
        colors = np.full(len(emb), UNLABELED_COLOR, dtype=object)
    else:
        _, rank = np.unique(labels, return_inverse=True)
        colors = np.asarray(PALETTE, dtype=object)[rank.ravel() % len(PALETTE)]
    s = style.size
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">',
        f'<rect width="{s}" height="{s}" fill="{style.background}"/>',
    ]
    r = f"{style.radius:g}"
    out.extend(
        f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{c}"/>' for (x, y), c in zip(xy.tolist(), colors)
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_scatter(embedding, labels=None, out_path=None, style: PlotStyle | None = None) -> str:
    """Write the scatter plot to ``out_path`` (if given) and return the SVG text."""
    text = svg_scatter(embedding, labels, style)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
