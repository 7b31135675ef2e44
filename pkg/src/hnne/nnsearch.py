"""Exact and approximate Euclidean k-nearest-neighbor search.

All routines share one ordering convention: neighbors are sorted by
Euclidean distance, and equal distances are resolved by the smaller row
index. Distances reported to callers are always recomputed directly from
coordinate differences, so ``d(i, j)`` is bitwise symmetric and the
tie-breaking is consistent between backends.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._threads import get_threads
from .errors import InvalidArgumentError, InvalidDataError

#: Above this many rows the ``auto`` backend switches to approximate search
#: (unless the dimension is small enough for the exact KD-tree to stay fast).
EXACT_MAX_ROWS = 200_000
#: Dimension up to which exact search goes through a KD-tree instead of
#: blocked brute force.
KDTREE_MAX_DIM = 16

BACKENDS = ("auto", "exact", "approx")

_TIE_RTOL = 1e-9
_BLOCK_BYTES = 64 * 2**20


@dataclass(frozen=True)
class NeighborList:
    """k nearest neighbors per query row.

    ``indices`` and ``distances`` are ``(n, k)`` arrays sorted ascending by
    distance (ties by index).
    """

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __len__(self) -> int:
        return self.indices.shape[0]


def as_data_matrix(points, name: str = "points") -> np.ndarray:
    """Validate and return ``points`` as a 2-D float array (float32 is kept)."""
    arr = np.asarray(points)
    if arr.dtype not in (np.float32, np.float64):
        try:
            arr = arr.astype(np.float64)
        except (TypeError, ValueError) as exc:
            raise InvalidDataError(f"{name}: not numeric") from exc
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidDataError(f"{name}: expected a 2-D matrix, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidDataError(f"{name}: empty matrix with shape {arr.shape}")
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "points", chunk_rows: int = 1 << 16) -> None:
    # chunked so the mask never costs more than a slice of the input
    for start in range(0, arr.shape[0], chunk_rows):
        block = arr[start:start + chunk_rows]
        if not np.isfinite(block).all():
            bad = np.argwhere(~np.isfinite(block))[0]
            raise InvalidDataError(
                f"{name}: non-finite value at row {start + bad[0]}, column {bad[1]}"
            )


def pair_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distances ``|a[i] - b[i]|`` for equally shaped ``(..., D)`` arrays."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.sqrt(np.einsum("...j,...j->...", diff, diff))


def _order_rows(idx: np.ndarray, dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((idx, dist), axis=-1)
    return np.take_along_axis(idx, order, axis=1), np.take_along_axis(dist, order, axis=1)


def _row_exact(points: np.ndarray, q: np.ndarray, k: int, exclude: int) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force one query row over every point."""
    dist = pair_distances(points, q[None, :])
    idx = np.arange(points.shape[0])
    if exclude >= 0:
        dist = np.delete(dist, exclude)
        idx = np.delete(idx, exclude)
    order = np.lexsort((idx, dist))[:k]
    return idx[order], dist[order]


def _finish_candidates(points, queries, cand, k, self_query, row_offset, bound):
    """Turn candidate sets into exact, tie-broken neighbor rows.

    ``bound[r]`` is a lower bound on the distance of every point *not* in
    row ``r``'s candidate set. Rows where the k-th neighbor is not strictly
    closer than that bound are recomputed by brute force.
    """
    n_rows, m = cand.shape
    rows = np.arange(n_rows) + row_offset
    dist = pair_distances(points[cand], queries[:, None, :])
    if self_query:
        dist = np.where(cand == rows[:, None], np.inf, dist)
    idx, dist = _order_rows(cand, dist)
    idx, dist = idx[:, :k], dist[:, :k]
    kth = dist[:, -1]
    unsafe = ~(kth * (1 + _TIE_RTOL) + 1e-300 < bound)
    for r in np.flatnonzero(unsafe):
        exclude = rows[r] if self_query else -1
        idx[r], dist[r] = _row_exact(points, queries[r], k, exclude)
    return idx, dist


def _query_kdtree(points, queries, k, self_query):
    n = points.shape[0]
    extra = 1 if self_query else 0
    m = min(n, k + extra + 4)
    tree = cKDTree(points)
    tree_d, cand = tree.query(queries, k=m, workers=get_threads())
    if m == 1:
        tree_d, cand = tree_d[:, None], cand[:, None]
    if m == n:
        bound = np.full(len(queries), np.inf)
    else:
        # tree distances can be off in the last ulp; keep a relative margin
        bound = tree_d[:, -1] * (1 - 1e-12)
    return _finish_candidates(points, queries, cand, k, self_query, 0, bound)


def _query_brute(points, queries, k, self_query):
    n = points.shape[0]
    extra = 1 if self_query else 0
    m = min(n, k + extra + 4)
    pts = np.asarray(points, dtype=np.float64)
    qs = np.asarray(queries, dtype=np.float64)
    p_sq = np.einsum("ij,ij->i", pts, pts)
    block = max(1, _BLOCK_BYTES // (8 * n))
    out_idx = np.empty((len(qs), k), dtype=np.int64)
    out_dist = np.empty((len(qs), k), dtype=np.float64)
    for start in range(0, len(qs), block):
        q = qs[start:start + block]
        q_sq = np.einsum("ij,ij->i", q, q)
        d2 = q_sq[:, None] + p_sq[None, :] - 2.0 * (q @ pts.T)
        if m < n:
            part = np.argpartition(d2, m, axis=1)
            cand = part[:, :m]
            excluded = np.take_along_axis(d2, part[:, m:m + 1], axis=1)[:, 0]
            # slack for cancellation error in the expanded form
            err = 1e-9 * (q_sq + p_sq.max()) + 1e-300
            bound = np.sqrt(np.maximum(excluded - err, 0.0))
        else:
            cand = np.broadcast_to(np.arange(n), (len(q), n)).copy()
            bound = np.full(len(q), np.inf)
        i, d = _finish_candidates(pts, q, cand, k, self_query, start, bound)
        out_idx[start:start + block] = i
        out_dist[start:start + block] = d
    return out_idx, out_dist


def knn_exact(points, k: int, queries=None) -> NeighborList:
    """Exact k nearest neighbors.

    Parameters
    ----------
    points : array of shape (N, D)
        The indexed rows.
    k : int
        Number of neighbors per query.
    queries : array of shape (M, D), optional
        Rows to query. When omitted every row of ``points`` is queried
        against the others, with the row itself excluded.

    Returns
    -------
    NeighborList
        Sorted by distance, ties resolved by smaller index.
    """
    points = as_data_matrix(points)
    n = points.shape[0]
    self_query = queries is None
    if self_query:
        queries = points
    else:
        queries = as_data_matrix(queries, "queries")
        if queries.shape[1] != points.shape[1]:
            raise InvalidArgumentError(
                f"queries have {queries.shape[1]} columns, points have {points.shape[1]}"
            )
    limit = n - 1 if self_query else n
    if not 1 <= k <= limit:
        raise InvalidArgumentError(f"k={k} must satisfy 1 <= k <= {limit} for {n} points")
    if points.shape[1] <= KDTREE_MAX_DIM:
        idx, dist = _query_kdtree(points, queries, k, self_query)
    else:
        idx, dist = _query_brute(points, queries, k, self_query)
    return NeighborList(idx.astype(np.int64), dist.astype(np.float64))


# ---------------------------------------------------------------------------
# approximate search: random-projection forest + neighbor descent


def _merge(cur_idx, cur_dist, cand_idx, cand_dist, rows):
    """Merge candidate neighbors into the current sorted lists.

    Returns the new lists, a flag array marking entries that came from the
    candidates, and the number of such entries.
    """
    k = cur_idx.shape[1]
    idx = np.concatenate([cur_idx, cand_idx], axis=1)
    dist = np.concatenate([cur_dist, cand_dist], axis=1)
    origin = np.zeros(idx.shape, dtype=bool)
    origin[:, k:] = True
    order = np.argsort(idx, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    origin = np.take_along_axis(origin, order, axis=1)
    dup = np.zeros(idx.shape, dtype=bool)
    dup[:, 1:] = idx[:, 1:] == idx[:, :-1]
    invalid = dup | (idx < 0) | (idx == rows[:, None])
    dist = np.where(invalid, np.inf, dist)
    order = np.lexsort((idx, dist), axis=-1)[:, :k]
    idx = np.take_along_axis(idx, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    origin = np.take_along_axis(origin, order, axis=1) & np.isfinite(dist)
    return idx, dist, origin, int(origin.sum())


def _candidate_distances(points, rows, cand):
    # only real candidates are gathered; padding stays at infinity
    r, c = np.nonzero(cand >= 0)
    dist = np.full(cand.shape, np.inf)
    step = max(1, _BLOCK_BYTES // (16 * points.shape[1]))
    for s in range(0, len(r), step):
        rs, cs = r[s:s + step], c[s:s + step]
        dist[rs, cs] = pair_distances(points[cand[rs, cs]], points[rows[rs]])
    return dist


def _rp_leaves(points: np.ndarray, rng: np.random.Generator, leaf_size: int) -> list[np.ndarray]:
    """Leaves of one random-projection tree (hyperplanes bisect two random members)."""
    leaves = []
    stack = [np.arange(points.shape[0])]
    while stack:
        idx = stack.pop()
        if len(idx) <= leaf_size:
            leaves.append(idx)
            continue
        a, b = rng.choice(len(idx), size=2, replace=False)
        pa, pb = points[idx[a]], points[idx[b]]
        normal = pa - pb
        side = None
        if np.any(normal != 0):
            margin = points[idx] @ normal - normal @ (pa + pb) / 2.0
            side = margin > 0
            if side.all() or not side.any():
                side = None
        if side is None:
            side = np.zeros(len(idx), dtype=bool)
            side[rng.permutation(len(idx))[: len(idx) // 2]] = True
        stack.append(idx[side])
        stack.append(idx[~side])
    return leaves


def _forest_init(points, n_graph, rng, n_trees, leaf_size):
    n = points.shape[0]
    rows = np.arange(n)
    idx = np.full((n, n_graph), -1, dtype=np.int64)
    dist = np.full((n, n_graph), np.inf)
    for _ in range(n_trees):
        cand = np.full((n, leaf_size), -1, dtype=np.int64)
        for leaf in _rp_leaves(points, rng, leaf_size):
            cand[leaf, : len(leaf)] = leaf
        cand_d = _candidate_distances(points, rows, cand)
        idx, dist, _, _ = _merge(idx, dist, cand, cand_d, rows)
    # a tree leaf can be too small to fill every list; pad with random points
    missing = ~np.isfinite(dist)
    if missing.any():
        filler = rng.integers(0, n, size=idx.shape)
        filler_d = _candidate_distances(points, rows, np.where(missing, filler, -1))
        idx, dist, _, _ = _merge(idx, dist, np.where(missing, filler, -1), filler_d, rows)
    return idx, dist


def _reverse_lists(idx, new, width, rng):
    """Up to ``width`` reverse neighbors per point, sampled deterministically."""
    n, k = idx.shape
    src = np.repeat(np.arange(n), k)
    dst = idx.ravel()
    flag = new.ravel()
    keep = dst >= 0
    src, dst, flag = src[keep], dst[keep], flag[keep]
    # random priority within each destination, then keep the first `width`
    prio = rng.random(len(dst))
    order = np.lexsort((prio, dst))
    src, dst, flag = src[order], dst[order], flag[order]
    starts = np.searchsorted(dst, np.arange(n))
    rank = np.arange(len(dst)) - starts[dst]
    sel = rank < width
    rev = np.full((n, width), -1, dtype=np.int64)
    rev_new = np.zeros((n, width), dtype=bool)
    rev[dst[sel], rank[sel]] = src[sel]
    rev_new[dst[sel], rank[sel]] = flag[sel]
    return rev, rev_new


def knn_approx(
    points,
    k: int,
    seed: int = 0,
    n_graph: int | None = None,
    n_trees: int | None = None,
    leaf_size: int | None = None,
    max_iter: int = 12,
    delta: float = 0.001,
) -> NeighborList:
    """Approximate k nearest neighbors via neighbor descent.

    The graph is seeded from a forest of random-projection trees and then
    refined by local joins: a point's neighbors' neighbors (in the
    symmetrised graph) become its candidates. Only joins touching an entry
    that changed in the previous round are evaluated. Iteration stops after
    ``max_iter`` rounds or when fewer than ``delta * N * n_graph`` entries
    change.

    Output is deterministic for a fixed ``seed``. When the graph width
    covers every other point the search is exact.
    """
    points = as_data_matrix(points)
    n = points.shape[0]
    if not 1 <= k <= n - 1:
        raise InvalidArgumentError(f"k={k} must satisfy 1 <= k <= {n - 1} for {n} points")
    if n_graph is None:
        n_graph = max(k, 30)
    n_graph = min(max(n_graph, k), n - 1)
    if n_graph >= n - 1:
        return knn_exact(points, k)
    if leaf_size is None:
        leaf_size = max(2 * n_graph, 24)
    if n_trees is None:
        n_trees = min(32, 4 + int(round(n ** 0.25)))

    rng = np.random.default_rng(seed)
    rows_all = np.arange(n)
    idx, dist = _forest_init(points, n_graph, rng, n_trees, leaf_size)
    new = np.ones(idx.shape, dtype=bool)

    d = points.shape[1]
    chunk = max(1, _BLOCK_BYTES // (8 * d * 4 * n_graph * n_graph))
    for _ in range(max_iter):
        rev, rev_new = _reverse_lists(idx, new, n_graph, rng)
        both = np.concatenate([idx, rev], axis=1)
        both_new = np.concatenate([new, rev_new], axis=1)
        next_idx = np.empty_like(idx)
        next_dist = np.empty_like(dist)
        next_new = np.empty_like(new)
        changed = 0
        for start in range(0, n, chunk):
            rows = rows_all[start:start + chunk]
            hop = both[rows]
            hop_new = both_new[rows]
            safe = np.where(hop < 0, 0, hop)
            second = both[safe]
            second_new = both_new[safe]
            useful = (hop_new[:, :, None] | second_new) & (hop >= 0)[:, :, None] & (second >= 0)
            cand = np.where(useful, second, -1).reshape(len(rows), -1)
            # drop repeats before paying for distances
            cand = np.sort(cand, axis=1)
            rep = np.zeros(cand.shape, dtype=bool)
            rep[:, 1:] = cand[:, 1:] == cand[:, :-1]
            cand = np.where(rep, -1, cand)
            width = int((cand >= 0).sum(axis=1).max()) if cand.size else 0
            if width == 0:
                next_idx[rows], next_dist[rows], next_new[rows] = idx[rows], dist[rows], False
                continue
            cand = -np.sort(-cand, axis=1)[:, :width]
            cand_d = _candidate_distances(points, rows, cand)
            i, dd, origin, c = _merge(idx[rows], dist[rows], cand, cand_d, rows)
            next_idx[rows], next_dist[rows], next_new[rows] = i, dd, origin
            changed += c
        idx, dist, new = next_idx, next_dist, next_new
        if changed <= delta * n * n_graph:
            break
    return NeighborList(idx[:, :k].copy(), dist[:, :k].copy())


def resolve_backend(backend: str, n: int, dim: int) -> str:
    """Pick ``exact`` or ``approx`` for ``auto``; validate explicit choices."""
    if backend not in BACKENDS:
        raise InvalidArgumentError(f"unknown nearest-neighbor backend {backend!r}; choose from {BACKENDS}")
    if backend != "auto":
        return backend
    if n <= EXACT_MAX_ROWS or dim <= KDTREE_MAX_DIM:
        return "exact"
    return "approx"


def knn(points, k: int, backend: str = "auto", seed: int = 0) -> NeighborList:
    """Self k-NN through the selected backend."""
    points = as_data_matrix(points)
    which = resolve_backend(backend, *points.shape)
    if which == "exact":
        return knn_exact(points, k)
    return knn_approx(points, k, seed=seed)


def recall(found: NeighborList, truth: NeighborList) -> float:
    """Fraction of true neighbor ids recovered (per-row set overlap)."""
    hits = 0
    for a, b in zip(found.indices, truth.indices):
        hits += len(np.intersect1d(a, b, assume_unique=True))
    return hits / truth.indices.size
