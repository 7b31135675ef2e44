"""Hierarchical point translation.

Starting from the top level, the children of every node are centred on
the node's placed position and rescaled so the farthest child sits on a
ball whose radius is a fraction of the node's nearest-neighbor distance in
the target space. The placed children then act as parents for the next
level down, until the data points themselves are placed.

With ``shrink <= 3/5`` every descendant stays inside
``B(node, radius_fraction * nn_distance(node))`` at every level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import nnsearch
from .errors import InvalidArgumentError
from .hierarchy import Hierarchy, Partition

GUARANTEE_SHRINK = 3.0 / 5.0
DEFAULT_RADIUS_FRACTION = 1.0 / 3.0
#: Candidate rotations for inflation: six angles evenly spread over [0, pi/2].
INFLATION_ANGLES = tuple(j * math.pi / 10.0 for j in range(6))


@dataclass(frozen=True)
class TranslateParams:
    """Knobs of the translation step.

    ``shrink`` multiplies every ball radius; ``guarantee=True`` enforces the
    containment bound (``shrink <= 3/5``).
    """

    radius_fraction: float = DEFAULT_RADIUS_FRACTION
    shrink: float = 1.0
    inflation: bool = False
    ann_backend: str = "auto"
    seed: int = 0
    guarantee: bool = False
    inflation_ratio: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.radius_fraction < 1.0:
            raise InvalidArgumentError(f"radius_fraction must lie in (0, 1), got {self.radius_fraction}")
        if not 0.0 < self.shrink <= 1.0:
            raise InvalidArgumentError(f"shrink must lie in (0, 1], got {self.shrink}")
        if self.guarantee:
            if self.shrink > GUARANTEE_SHRINK + 1e-12:
                raise InvalidArgumentError(f"guarantee mode needs shrink <= 3/5, got {self.shrink}")
            if self.radius_fraction * self.shrink > 0.2 + 1e-12:
                raise InvalidArgumentError("guarantee mode needs radius_fraction * shrink <= 0.2")
        if self.inflation_ratio < 1.0:
            raise InvalidArgumentError(f"inflation_ratio must be >= 1, got {self.inflation_ratio}")
        if self.ann_backend not in nnsearch.BACKENDS:
            raise InvalidArgumentError(f"unknown backend {self.ann_backend!r}")

    @classmethod
    def for_dim(cls, d: int, guarantee: bool = False, shrink: float | None = None, **kwargs) -> "TranslateParams":
        """Defaults for target dimension ``d``: full radius up to 3-D, 3/5 above or when guaranteed."""
        if shrink is None:
            shrink = GUARANTEE_SHRINK if guarantee or d > 3 else 1.0
        return cls(shrink=shrink, guarantee=guarantee, **kwargs)

    @property
    def ball_factor(self) -> float:
        return self.shrink * self.radius_fraction


@dataclass(frozen=True)
class ClusterAffine:
    """One cluster's similarity map ``y = translation + scale * M p``.

    ``M`` is the identity unless the cluster was inflated, in which case
    ``M = R(angle)^T diag(stretch) R(angle)``.
    """

    translation: np.ndarray
    scale: float
    rotation_angle: float = 0.0
    stretch: tuple[float, float] = (1.0, 1.0)

    def apply(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=np.float64))
        if self.stretch != (1.0, 1.0):
            rot = _rotation(np.float64(self.rotation_angle))
            p = p @ (rot.T @ np.diag(self.stretch) @ rot).T
        return self.translation + self.scale * p


def _rotation(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


@dataclass
class AffineSet:
    """Per-cluster maps of one level, stored column-wise."""

    translation: np.ndarray  # (g, d)
    scale: np.ndarray  # (g,)
    rotation_angle: np.ndarray = None  # (g,)
    stretch: np.ndarray = None  # (g, 2)

    def __post_init__(self):
        g = len(self.scale)
        if self.rotation_angle is None:
            self.rotation_angle = np.zeros(g)
        if self.stretch is None:
            self.stretch = np.ones((g, 2))

    def __len__(self) -> int:
        return len(self.scale)

    def __getitem__(self, i: int) -> ClusterAffine:
        return ClusterAffine(
            self.translation[i].copy(),
            float(self.scale[i]),
            float(self.rotation_angle[i]),
            (float(self.stretch[i, 0]), float(self.stretch[i, 1])),
        )

    @classmethod
    def from_list(cls, affines: list[ClusterAffine]) -> "AffineSet":
        return cls(
            np.array([a.translation for a in affines], dtype=np.float64),
            np.array([a.scale for a in affines], dtype=np.float64),
            np.array([a.rotation_angle for a in affines], dtype=np.float64),
            np.array([a.stretch for a in affines], dtype=np.float64).reshape(-1, 2),
        )

    @property
    def inflated(self) -> np.ndarray:
        return np.any(self.stretch != 1.0, axis=1)

    def linear_part(self) -> np.ndarray:
        """``M`` per cluster, shape (g, 2, 2); only meaningful in 2-D."""
        rot = _rotation(self.rotation_angle)
        diag = np.zeros((len(self), 2, 2))
        diag[:, 0, 0] = self.stretch[:, 0]
        diag[:, 1, 1] = self.stretch[:, 1]
        return np.transpose(rot, (0, 2, 1)) @ diag @ rot

    def apply(self, p: np.ndarray, cluster: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        out = p.copy()
        infl = self.inflated[cluster]
        if infl.any():
            m = self.linear_part()[cluster[infl]]
            out[infl] = np.einsum("nij,nj->ni", m, p[infl])
        return self.translation[cluster] + self.scale[cluster, None] * out


@dataclass
class TranslationResult:
    """Output of :func:`translate_down`.

    ``positions[k]`` are the placed coordinates of centroid level ``k``,
    ``radii[k]`` their nearest-neighbor distances used as ball radii, and
    ``affines[k]`` the maps that placed the children of level ``k``
    (level ``k - 1`` centroids, or the data for ``k = 0``).
    """

    embedding: np.ndarray
    positions: list[np.ndarray] = field(default_factory=list)
    radii: list[np.ndarray] = field(default_factory=list)
    affines: list[AffineSet] = field(default_factory=list)


def nn_radii(level_points) -> np.ndarray:
    """Distance of every row to its nearest other row."""
    pts = np.asarray(level_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidArgumentError("nearest-neighbor radii need at least 2 rows")
    return nnsearch.knn_exact(pts, 1).distances[:, 0]


def safe_radii(radii: np.ndarray) -> np.ndarray:
    """Replace zero radii (coincident nodes) so no cluster collapses to a point."""
    radii = np.asarray(radii, dtype=np.float64).copy()
    zero = radii <= 0
    if zero.any():
        positive = radii[~zero]
        radii[zero] = positive.min() * 1e-3 if positive.size else 1.0
    return radii


def _group_sum(values: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=n_groups)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return np.add.reduceat(values[order], starts, axis=0), sizes


def _group_max(values: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.full(n_groups, -np.inf)
    np.maximum.at(out, labels, values)
    return out


def place_children(
    parent_pos,
    parent_radii,
    assignment: Partition,
    child_prelim,
    params: TranslateParams,
) -> tuple[np.ndarray, AffineSet]:
    """Centre each parent's children on it and scale them into its ball.

    Returns the placed children and the map applied to each parent's group.
    """
    parent_pos = np.asarray(parent_pos, dtype=np.float64)
    parent_radii = np.asarray(parent_radii, dtype=np.float64)
    child_prelim = np.asarray(child_prelim, dtype=np.float64)
    labels = assignment.labels
    g = parent_pos.shape[0]
    if assignment.n_groups != g or len(parent_radii) != g:
        raise InvalidArgumentError(
            f"assignment has {assignment.n_groups} groups, {g} parents and {len(parent_radii)} radii"
        )
    if len(labels) != child_prelim.shape[0]:
        raise InvalidArgumentError(f"assignment covers {len(labels)} children, got {child_prelim.shape[0]}")
    if (parent_radii < 0).any():
        raise InvalidArgumentError("radii must be non-negative")

    sums, sizes = _group_sum(child_prelim, labels, g)
    if (sizes == 0).any():
        raise InvalidArgumentError("a parent has no children")
    center = sums / sizes[:, None]
    offset = child_prelim - center[labels]
    extent = _group_max(np.sqrt(np.einsum("ij,ij->i", offset, offset)), labels, g)
    ball = params.ball_factor * parent_radii
    scale = np.ones(g)
    spread = extent > 0
    scale[spread] = ball[spread] / extent[spread]
    scale[~np.isfinite(scale) | (scale <= 0)] = 1.0
    placed = parent_pos[labels] + scale[labels, None] * offset
    translation = parent_pos - scale[:, None] * center
    return placed, AffineSet(translation, scale)


def inflation_params(offsets: np.ndarray, labels: np.ndarray, n_groups: int, target_ratio: float = 2.0):
    """Pick per-cluster rotation and minor-axis stretch for 2-D inflation.

    ``offsets`` are member coordinates relative to their cluster mean.
    Returns ``(active, angle, stretch)``; inactive clusters get angle 0 and
    unit stretch.
    """
    best_ratio = np.ones(n_groups)
    best_angle = np.zeros(n_groups)
    best_minor = np.zeros(n_groups, dtype=np.int64)
    for theta in INFLATION_ANGLES:
        c, s = math.cos(theta), math.sin(theta)
        rot = offsets @ np.array([[c, -s], [s, c]]).T
        total, sizes = _group_sum(rot, labels, n_groups)
        sq, _ = _group_sum(rot * rot, labels, n_groups)
        var = np.maximum(sq / sizes[:, None] - (total / sizes[:, None]) ** 2, 0.0)
        std = np.sqrt(var)
        lo, hi = std.min(axis=1), std.max(axis=1)
        ratio = np.ones(n_groups)
        ok = lo > 0
        ratio[ok] = hi[ok] / lo[ok]
        better = ratio > best_ratio
        best_ratio[better] = ratio[better]
        best_angle[better] = theta
        best_minor[better] = np.argmin(std[better], axis=1)

    active = best_ratio > target_ratio
    stretch = np.ones((n_groups, 2))
    stretch[np.flatnonzero(active), best_minor[active]] = best_ratio[active] / target_ratio
    angle = np.where(active, best_angle, 0.0)
    return active, angle, stretch


def inflate(
    level_coords,
    partition: Partition,
    affines: AffineSet,
    target_ratio: float = 2.0,
) -> tuple[np.ndarray, AffineSet]:
    """Widen elongated 2-D clusters.

    For each cluster the six candidate rotations are tried and the one
    whose axis-aligned standard deviations are most unequal is kept. If
    that ratio exceeds ``target_ratio`` the minor axis is stretched until
    the ratio equals it, the cluster is rotated back, and the result is
    rescaled so its largest distance to the cluster mean does not grow.
    """
    coords = np.asarray(level_coords, dtype=np.float64)
    if coords.shape[1] != 2:
        warnings.warn("inflation is only defined for 2-D embeddings; skipped", RuntimeWarning)
        return coords.copy(), affines
    labels = partition.labels
    g = partition.n_groups
    sums, sizes = _group_sum(coords, labels, g)
    center = sums / sizes[:, None]
    u = coords - center[labels]
    old_extent = _group_max(np.sqrt(np.einsum("ij,ij->i", u, u)), labels, g)

    act, angle, stretch = inflation_params(u, labels, g, target_ratio)
    infl = AffineSet(np.zeros((g, 2)), np.ones(g), angle, stretch)
    out = coords.copy()
    member = act[labels]
    if member.any():
        m = infl.linear_part()[labels[member]]
        v = np.einsum("nij,nj->ni", m, u[member])
        new_extent = _group_max(np.sqrt(np.einsum("ij,ij->i", v, v)), labels[member], g)
        with np.errstate(divide="ignore", invalid="ignore"):
            renorm = np.where(new_extent > old_extent, old_extent / new_extent, 1.0)
        renorm[~act | ~np.isfinite(renorm)] = 1.0
        out[member] = center[labels[member]] + renorm[labels[member], None] * v
    else:
        renorm = np.ones(g)

    # fold into the recorded maps: y = c + b M (t + s p - c)
    m_all = infl.linear_part()
    t_new = center + renorm[:, None] * np.einsum("gij,gj->gi", m_all, affines.translation - center)
    t_new[~act] = affines.translation[~act]
    updated = AffineSet(
        t_new,
        np.where(act, affines.scale * renorm, affines.scale),
        angle,
        stretch,
    )
    return out, updated


def translate_down(
    h: Hierarchy,
    prelim_points,
    prelim_levels: list[np.ndarray],
    params: TranslateParams,
) -> TranslationResult:
    """Place every level top-down; the data level gives the embedding.

    ``prelim_levels[k]`` are the preliminary coordinates of centroid level
    ``k``. The top level keeps its preliminary coordinates.
    """
    prelim_points = np.asarray(prelim_points, dtype=np.float64)
    if len(prelim_levels) != len(h.levels):
        raise InvalidArgumentError(
            f"got preliminary coordinates for {len(prelim_levels)} levels, hierarchy has {len(h.levels)}"
        )
    if not h.levels:
        return TranslationResult(prelim_points.copy())

    n_levels = len(h.levels)
    positions: list[np.ndarray] = [None] * n_levels
    radii: list[np.ndarray] = [None] * n_levels
    affines: list[AffineSet] = [None] * n_levels
    positions[-1] = np.asarray(prelim_levels[-1], dtype=np.float64).copy()
    placed = None
    for k in range(n_levels - 1, -1, -1):
        radii[k] = safe_radii(nn_radii(positions[k]))
        child_prelim = prelim_levels[k - 1] if k > 0 else prelim_points
        placed, affines[k] = place_children(
            positions[k], radii[k], h.levels[k].parent_of_child, child_prelim, params
        )
        if k > 0:
            positions[k - 1] = placed

    if params.inflation:
        placed, affines[0] = inflate(placed, h.base_partition, affines[0], params.inflation_ratio)
    return TranslationResult(placed, positions, radii, affines)
