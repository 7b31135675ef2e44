"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports the package; every routine works from first
principles with plain loops or full distance matrices.
"""
from __future__ import annotations

from collections import deque
from itertools import combinations
import math

import numpy as np


def distance_matrix(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    out = np.zeros((n, n))
    for i in range(n):
        diff = x - x[i]
        out[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return out


def neighbor_order(dist_row: np.ndarray, self_index: int | None) -> list[int]:
    """Indices sorted by (distance, index), skipping ``self_index``."""
    idx = [j for j in range(len(dist_row)) if j != self_index]
    return sorted(idx, key=lambda j: (dist_row[j], j))


def knn(points, k: int):
    dm = distance_matrix(points)
    idx = np.array([neighbor_order(dm[i], i)[:k] for i in range(len(dm))], dtype=np.int64)
    return idx, np.take_along_axis(dm, idx, axis=1)


def knn_query(points, queries, k: int):
    p = np.asarray(points, dtype=np.float64)
    out = []
    for q in np.asarray(queries, dtype=np.float64):
        diff = p - q
        row = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out.append(neighbor_order(row, None)[:k])
    return np.array(out, dtype=np.int64)


def weak_components(nn_index) -> np.ndarray:
    """Breadth-first search on the undirected 1-NN graph, labels by first appearance."""
    n = len(nn_index)
    adj = [[] for _ in range(n)]
    for i, j in enumerate(nn_index):
        adj[i].append(int(j))
        adj[int(j)].append(i)
    labels = [-1] * n
    nxt = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        labels[start] = nxt
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if labels[v] < 0:
                    labels[v] = nxt
                    queue.append(v)
        nxt += 1
    return np.array(labels, dtype=np.int64)


def trustworthiness(high, low, k: int) -> float:
    n = len(high)
    dh = distance_matrix(high)
    dl = distance_matrix(low)
    total = 0
    for i in range(n):
        order_high = neighbor_order(dh[i], i)
        rank = {j: r + 1 for r, j in enumerate(order_high)}
        for j in neighbor_order(dl[i], i)[:k]:
            total += max(0, rank[j] - k)
    return 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * total


def knn_fold_counts(embedding, labels, fold_of, k: int):
    """Correct predictions per fold for a given fold assignment."""
    emb = np.asarray(embedding, dtype=np.float64)
    labels = list(np.asarray(labels))
    folds = int(max(fold_of)) + 1
    correct = [0] * folds
    totals = [0] * folds
    for i in range(len(emb)):
        f = fold_of[i]
        train = [j for j in range(len(emb)) if fold_of[j] != f]
        d = {j: math.dist(emb[i], emb[j]) for j in train}
        nearest = sorted(train, key=lambda j: (d[j], j))[:k]
        votes = {}
        for j in nearest:
            votes[labels[j]] = votes.get(labels[j], 0) + 1
        top = max(votes.values())
        pred = next(labels[j] for j in nearest if votes[labels[j]] == top)
        correct[f] += pred == labels[i]
        totals[f] += 1
    return correct, totals


def _centroids(points, labels):
    pts = np.asarray(points, dtype=np.float64)
    classes = sorted(set(np.asarray(labels).tolist()))
    return [pts[np.asarray(labels) == c].mean(axis=0) for c in classes]


def _ranking(d: list[float], rtol: float):
    """Pairwise comparison pattern of three distances, ties within ``rtol``."""
    pattern = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        if abs(d[a] - d[b]) <= rtol * max(abs(d[a]), abs(d[b])):
            pattern.append(0)
        else:
            pattern.append(1 if d[a] > d[b] else -1)
    return pattern


def centroid_triplet_accuracy(high, low, labels, rtol: float = 1e-12) -> float:
    ch = _centroids(high, labels)
    cl = _centroids(low, labels)
    kept = total = 0
    for a, b, c in combinations(range(len(ch)), 3):
        dh = [math.dist(ch[a], ch[b]), math.dist(ch[b], ch[c]), math.dist(ch[a], ch[c])]
        dl = [math.dist(cl[a], cl[b]), math.dist(cl[b], cl[c]), math.dist(cl[a], cl[c])]
        kept += _ranking(dh, rtol) == _ranking(dl, rtol)
        total += 1
    return kept / total


def recall(found_idx, true_idx) -> float:
    hits = sum(len(set(f) & set(t)) for f, t in zip(np.asarray(found_idx).tolist(), np.asarray(true_idx).tolist()))
    return hits / np.asarray(true_idx).size


def containment_violations(embedding, centers, radii, labels) -> int:
    """Points farther from their ancestor centre than the ball radius."""
    count = 0
    for p, lab in zip(np.asarray(embedding), labels):
        if math.dist(p, centers[lab]) > radii[lab]:
            count += 1
    return count
