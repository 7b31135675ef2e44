"""The 1-nearest-neighbor graph hierarchy.

Each level links every node to its nearest neighbor, groups the weakly
connected components of that graph, and replaces each component by its
mean. Repeating this on the means gives a tree whose leaves are the data
points. Every component has at least two members, so each level is at most
half the size of the one below and the tree height is logarithmic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from . import nnsearch
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

#: Never emit a centroid level smaller than this.
MIN_TOP_SIZE = 3


@dataclass(frozen=True)
class NNGraph:
    nn_index: np.ndarray
    nn_distance: np.ndarray

    def __len__(self) -> int:
        return len(self.nn_index)


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    n_groups: int

    def __len__(self) -> int:
        return len(self.labels)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_groups)


@dataclass(frozen=True)
class HierarchyLevel:
    """Centroids of one level and the map from the level below into them."""

    centroids: np.ndarray
    parent_of_child: Partition

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class Hierarchy:
    """The tree over ``X``.

    ``levels[0]`` holds the centroids of the base partition of the data,
    ``levels[-1]`` is the top. A hierarchy with no centroid levels only
    carries the base partition (inputs too small to form three groups).
    """

    n_points: int
    base_partition: Partition
    levels: list[HierarchyLevel] = field(default_factory=list)

    @property
    def top(self) -> int:
        """Index of the highest level a partition can be read from."""
        return max(len(self.levels) - 1, 0)

    def level_sizes(self) -> list[int]:
        return [lvl.size for lvl in self.levels]


class UnionFind:
    """Array-backed disjoint sets with vectorised edge unions.

    Roots always point to the smallest member, so the final forest does not
    depend on edge order.
    """

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find_all(self) -> np.ndarray:
        parent = self.parent
        while True:
            grand = parent[parent]
            if np.array_equal(grand, parent):
                return parent
            parent = grand
            self.parent = parent

    def union_edges(self, a: np.ndarray, b: np.ndarray) -> None:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        while True:
            roots = self.find_all()
            ra, rb = roots[a], roots[b]
            pending = ra != rb
            if not pending.any():
                return
            lo = np.minimum(ra[pending], rb[pending])
            hi = np.maximum(ra[pending], rb[pending])
            # hook the larger root under the smallest root it touches
            np.minimum.at(self.parent, hi, lo)


def build_1nng(points, backend: str = "auto", seed: int = 0) -> NNGraph:
    points = nnsearch.as_data_matrix(points)
    if points.shape[0] < 2:
        raise InvalidArgumentError(f"a nearest-neighbor graph needs at least 2 points, got {points.shape[0]}")
    nl = nnsearch.knn(points, 1, backend=backend, seed=seed)
    return NNGraph(nl.indices[:, 0].copy(), nl.distances[:, 0].copy())


def _relabel_first_appearance(roots: np.ndarray) -> Partition:
    uniq, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return Partition(rank[inverse.ravel()], len(uniq))


def connected_components(graph: NNGraph) -> Partition:
    """Weakly connected components, numbered by first appearance."""
    n = len(graph)
    uf = UnionFind(n)
    uf.union_edges(np.arange(n), graph.nn_index)
    return _relabel_first_appearance(uf.find_all())


def component_centroids(points, partition: Partition) -> np.ndarray:
    """Mean of the points in each group."""
    points = np.asarray(points, dtype=np.float64)
    labels = partition.labels
    if len(labels) != points.shape[0]:
        raise InvalidArgumentError(f"partition covers {len(labels)} rows, points have {points.shape[0]}")
    sizes = partition.sizes()
    if (sizes == 0).any():
        raise InvalidArgumentError("partition labels are not surjective")
    if partition.n_groups == points.shape[0] and points.shape[0] > 1:
        raise InvalidArgumentError("every group is a singleton; not a nearest-neighbor partition")
    order = np.argsort(labels, kind="stable")
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    sums = np.add.reduceat(points[order], starts, axis=0)
    return sums / sizes[:, None]


def build_hierarchy(points, backend: str = "auto", seed: int = 0) -> Hierarchy:
    """Build the full tree, stopping before a level with fewer than three nodes."""
    points = nnsearch.as_data_matrix(points)
    n = points.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 points to build a hierarchy, got {n}")
    base = connected_components(build_1nng(points, backend, seed))
    levels: list[HierarchyLevel] = []
    if base.n_groups >= MIN_TOP_SIZE:
        levels.append(HierarchyLevel(component_centroids(points, base), base))
        while True:
            current = levels[-1].centroids
            if current.shape[0] < 2 * MIN_TOP_SIZE:
                break
            part = connected_components(build_1nng(current, backend, seed))
            if part.n_groups < MIN_TOP_SIZE:
                break
            levels.append(HierarchyLevel(component_centroids(current, part), part))
    h = Hierarchy(n, base, levels)
    logger.debug("hierarchy level sizes: %s", h.level_sizes())
    return h


def partition_at_level(h: Hierarchy, level: int) -> Partition:
    """Labels of the original points at ``level`` (composition of parent maps)."""
    if not 0 <= level <= h.top:
        raise InvalidArgumentError(f"level {level} out of range [0, {h.top}]")
    labels = h.base_partition.labels
    n_groups = h.base_partition.n_groups
    for lvl in h.levels[1:level + 1]:
        labels = lvl.parent_of_child.labels[labels]
        n_groups = lvl.parent_of_child.n_groups
    return Partition(labels.copy(), n_groups)
