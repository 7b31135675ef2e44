"""End-to-end fitting and out-of-sample projection.

``fit`` runs hierarchy -> preliminary projection -> translation and
returns the embedding together with a :class:`ProjectionModel`. The model
projects unseen points by looking up their nearest centroid on a chosen
hierarchy level (the second centroid level by default), applying the
shared linear map, and replaying that centroid's similarity map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from . import linproj, nnsearch
from ._threads import thread_limit
from .errors import InvalidArgumentError
from .hierarchy import Hierarchy, build_hierarchy, partition_at_level
from .linproj import LinearMap, apply_linear, fit_linear, select_pca_level
from .translate import (
    AffineSet,
    TranslateParams,
    TranslationResult,
    _group_max,
    inflation_params,
    translate_down,
)

logger = logging.getLogger(__name__)

#: ``lookup_level`` value for a hierarchy without centroid levels: the
#: model then reduces to the linear map.
NO_LOOKUP = -1


@dataclass
class ProjectionModel:
    """Everything needed to project new points after a fit."""

    linear: LinearMap
    lookup_centroids: np.ndarray  # (n_lookup, D), original space
    affines: AffineSet  # one map per lookup centroid, prelim -> embedding
    params: TranslateParams
    lookup_level: int
    level_sizes: tuple[int, ...] = ()  # centroid levels, bottom first
    n_points: int = 0

    @property
    def in_dim(self) -> int:
        return self.linear.in_dim

    @property
    def out_dim(self) -> int:
        return self.linear.out_dim

    def transform(self, new_points) -> np.ndarray:
        return transform(self, new_points)

    def save(self, path) -> None:
        from .serialize import save_model

        save_model(self, path)

    @classmethod
    def load(cls, path) -> "ProjectionModel":
        from .serialize import load_model

        return load_model(path)


@dataclass
class FitResult:
    """Intermediate products of a fit, kept for inspection and tests."""

    embedding: np.ndarray
    model: ProjectionModel
    hierarchy: Hierarchy
    translation: TranslationResult
    prelim_points: np.ndarray
    prelim_levels: list[np.ndarray] = field(default_factory=list)
    pca_level: int | None = None


def _preliminary(x, h, d, mode, seed, pca_threshold):
    """Preliminary coordinates of the data and of every centroid level."""
    n, dim = x.shape
    if mode == "random-points":
        rng = np.random.default_rng(seed)
        prelim_x = rng.uniform(0.0, 1.0, size=(n, d))
        levels = []
        below = prelim_x
        for lvl in h.levels:
            # centroids sit at the mean of their children, as a linear map would give
            part = lvl.parent_of_child
            sums = np.zeros((part.n_groups, d))
            np.add.at(sums, part.labels, below)
            below = sums / part.sizes()[:, None]
            levels.append(below)
        return fit_linear(x, d, mode, seed), prelim_x, levels, None

    pca_level = None
    sample = x
    if mode == "pca-centroids":
        pca_level = select_pca_level(h, pca_threshold)
        if pca_level != linproj.USE_DATA:
            sample = h.levels[pca_level].centroids
            if d > min(sample.shape[0] - 1, dim):
                pca_level, sample = linproj.USE_DATA, x
    lmap = fit_linear(sample, d, mode, seed)
    prelim_x = apply_linear(lmap, x)
    levels = [apply_linear(lmap, lvl.centroids) for lvl in h.levels]
    return lmap, prelim_x, levels, pca_level


def _lookup_maps(x, h, lmap, tr, params, level):
    """Similarity map per lookup centroid, normalised on its descendants."""
    centroids = h.levels[level].centroids
    labels = partition_at_level(h, level).labels
    g = centroids.shape[0]
    prelim_c = apply_linear(lmap, centroids)
    u = apply_linear(lmap, x) - prelim_c[labels]
    d = u.shape[1]
    angle = np.zeros(g)
    stretch = np.ones((g, 2))
    if params.inflation and d == 2:
        _, angle, stretch = inflation_params(u, labels, g, params.inflation_ratio)
    shape = AffineSet(np.zeros((g, d)), np.ones(g), angle, stretch)
    v = shape.apply(u, labels) if params.inflation and d == 2 else u
    extent = _group_max(np.sqrt(np.einsum("ij,ij->i", v, v)), labels, g)
    ball = params.ball_factor * tr.radii[level]
    scale = np.ones(g)
    spread = extent > 0
    scale[spread] = ball[spread] / extent[spread]
    scale[~np.isfinite(scale) | (scale <= 0)] = 1.0
    mp = AffineSet(np.zeros((g, d)), scale, angle, stretch).apply(prelim_c, np.arange(g))
    translation = tr.positions[level] - mp
    return centroids.copy(), AffineSet(translation, scale, angle, stretch)


def fit_full(
    points,
    d: int = 2,
    params: TranslateParams | None = None,
    *,
    init: str = "pca-centroids",
    pca_threshold: int = linproj.DEFAULT_PCA_THRESHOLD,
    transform_level: int | None = None,
    threads: int | None = None,
) -> FitResult:
    """Like :func:`fit` but also returns the hierarchy and intermediate coordinates."""
    x = nnsearch.as_data_matrix(points)
    n, dim = x.shape
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 points, got {n}")
    if d < 1:
        raise InvalidArgumentError(f"target dimension must be positive, got {d}")
    mode = linproj.canonical_mode(init)
    if mode in linproj.PCA_MODES and d > min(n - 1, dim):
        raise InvalidArgumentError(f"d={d} needs d <= min(N-1, D) = {min(n - 1, dim)} for PCA init")
    if mode == "random-projection" and d > dim:
        raise InvalidArgumentError(f"d={d} exceeds input dimension {dim}")
    if params is None:
        params = TranslateParams.for_dim(d)

    with thread_limit(threads):
        h = build_hierarchy(x, params.ann_backend, params.seed)
        lmap, prelim_x, prelim_levels, pca_level = _preliminary(x, h, d, mode, params.seed, pca_threshold)
        tr = translate_down(h, prelim_x, prelim_levels, params)

        if not h.levels:
            level = NO_LOOKUP
            centroids = np.asarray(x, dtype=np.float64).mean(axis=0, keepdims=True)
            affines = AffineSet(np.zeros((1, d)), np.ones(1))
        else:
            if transform_level is None:
                level = 1 if len(h.levels) >= 2 else 0
            else:
                level = transform_level
            if not 0 <= level < len(h.levels):
                raise InvalidArgumentError(
                    f"transform level {level} out of range [0, {len(h.levels) - 1}]"
                )
            centroids, affines = _lookup_maps(x, h, lmap, tr, params, level)

    model = ProjectionModel(
        linear=lmap,
        lookup_centroids=centroids,
        affines=affines,
        params=params,
        lookup_level=level,
        level_sizes=tuple(h.level_sizes()),
        n_points=n,
    )
    logger.info("fit %d x %d -> %d; level sizes %s", n, dim, d, h.level_sizes())
    return FitResult(tr.embedding, model, h, tr, prelim_x, prelim_levels, pca_level)


def fit(points, d: int = 2, params: TranslateParams | None = None, **kwargs) -> tuple[np.ndarray, ProjectionModel]:
    """Embed ``points`` into ``d`` dimensions.

    Parameters
    ----------
    points : array of shape (N, D)
    d : int
        Target dimension.
    params : TranslateParams, optional
        Defaults to :meth:`TranslateParams.for_dim`.
    init : str
        ``pca-centroids`` (default), ``pca-full``, ``random-projection`` or
        ``random-points``.
    pca_threshold : int
        Level-size threshold for choosing the centroids the basis is
        estimated from.
    transform_level : int, optional
        Centroid level used for out-of-sample lookup.
    threads : int, optional
        Worker cap; results do not depend on it.

    Returns
    -------
    embedding : ndarray of shape (N, d)
    model : ProjectionModel
    """
    res = fit_full(points, d, params, **kwargs)
    return res.embedding, res.model


def transform(model: ProjectionModel, new_points) -> np.ndarray:
    """Project unseen points with a fitted model."""
    x = nnsearch.as_data_matrix(new_points, "new points")
    if x.shape[1] != model.in_dim:
        raise InvalidArgumentError(f"new points have {x.shape[1]} columns, model expects {model.in_dim}")
    prelim = apply_linear(model.linear, x)
    if len(model.lookup_centroids) == 1:
        cluster = np.zeros(len(x), dtype=np.int64)
    else:
        cluster = nnsearch.knn_exact(model.lookup_centroids, 1, queries=x).indices[:, 0]
    return model.affines.apply(prelim, cluster)
