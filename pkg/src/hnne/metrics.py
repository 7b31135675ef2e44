"""Embedding quality scores.

* Trustworthiness penalises points that are neighbors in the embedding
  but far apart in the original space.
* k-NN accuracy under stratified cross-validation measures how well labels
  can be predicted from the embedding.
* Centroid triplet accuracy (CTA) checks whether the global arrangement of
  class centroids survives: for every triple of class means, the order of
  its three pairwise distances must agree between the two spaces.

Neighbor ranks everywhere use the (distance, index) order of
:mod:`hnne.nnsearch`, so duplicate points give deterministic results.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json

import numpy as np

from .errors import InvalidArgumentError
from .nnsearch import as_data_matrix, knn_exact, pair_distances

DEFAULT_TRUST_K = 5
DEFAULT_KNN_SWEEP = (1, 5, 10, 15, 20)
DEFAULT_FOLDS = 10
#: Relative tolerance under which two centroid distances count as equal.
CTA_TIE_RTOL = 1e-12

_BLOCK_BYTES = 64 * 2**20


@dataclass
class KnnScore:
    k: int
    accuracy: float
    folds: int


@dataclass
class MetricsReport:
    """Scores plus the parameters they were computed with.

    ``to_json`` emits one line with the keys ``trustworthiness``,
    ``trustworthiness_k``, ``knn_accuracy`` (list of ``{"k", "accuracy",
    "folds"}``), ``cta`` and ``runtime_seconds``; scores not requested are
    ``null``.
    """

    trustworthiness: float | None = None
    trustworthiness_k: int | None = None
    knn_accuracy: list[KnnScore] = field(default_factory=list)
    cta: float | None = None
    runtime_seconds: float = 0.0

    def __post_init__(self):
        for name in ("trustworthiness", "cta"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")
        if self.runtime_seconds < 0:
            raise InvalidArgumentError("runtime must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


# ---------------------------------------------------------------- trustworthiness


def _high_ranks(high: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Rank of ``cols[b, m]`` among the neighbors of ``rows[b]`` (self excluded, from 1).

    The bulk comparison uses expanded squared distances; entries within the
    round-off band of the target are recomputed directly so the count is
    exact in the (distance, index) order.
    """
    n = high.shape[0]
    b, m = cols.shape
    xi = high[rows]
    sq = np.einsum("ij,ij->i", high, high)
    qsq = sq[rows]
    d2 = qsq[:, None] + sq[None, :] - 2.0 * (xi @ high.T)  # (b, n)
    d2[np.arange(b), rows] = np.inf  # self never counts
    target = pair_distances(xi[:, None, :], high[cols])  # (b, m)
    t2 = target ** 2
    err = 1e-9 * (qsq + sq.max()) + 1e-300
    diff = d2[:, None, :] - t2[:, :, None]  # (b, m, n)
    below = diff < -err[:, None, None]
    band = np.abs(diff) <= err[:, None, None]
    band[np.arange(b), :, rows] = False
    band[np.arange(b)[:, None], np.arange(m)[None, :], cols] = False  # j itself
    ranks = below.sum(axis=2)
    bi, mi, ji = np.nonzero(band)
    if len(bi):
        exact = pair_distances(xi[bi], high[ji])
        tie = exact == target[bi, mi]
        ahead = (exact < target[bi, mi]) | (tie & (ji < cols[bi, mi]))
        np.add.at(ranks, (bi, mi), ahead.astype(np.int64))
    return ranks + 1


def trustworthiness(high, low, k: int = DEFAULT_TRUST_K) -> float:
    """Trustworthiness of ``low`` as an embedding of ``high``.

    .. math::

        T(k) = 1 - \\frac{2}{n k (2n - 3k - 1)}
               \\sum_i \\sum_{j \\in N_i^k} \\max(0, r(i, j) - k)

    where :math:`N_i^k` are the ``k`` nearest neighbors of ``i`` in the
    embedding and :math:`r(i, j)` is the rank of ``j`` among the neighbors
    of ``i`` in the original space.

    Raises
    ------
    InvalidArgumentError
        If the row counts differ or ``k >= n / 2``.
    """
    high = np.asarray(as_data_matrix(high, "high"), dtype=np.float64)
    low = np.asarray(as_data_matrix(low, "low"), dtype=np.float64)
    n = high.shape[0]
    if low.shape[0] != n:
        raise InvalidArgumentError(f"row counts differ: high {n}, low {low.shape[0]}")
    if not 1 <= k or not 2 * k < n:
        raise InvalidArgumentError(f"k must satisfy 1 <= k < n/2 (n={n}), got {k}")
    low_nn = knn_exact(low, k).indices
    high_nn = knn_exact(high, k).indices
    # neighbors already among the k nearest in the original space cost nothing
    hit = (low_nn[:, :, None] == high_nn[:, None, :]).any(axis=2)
    rows_needing = np.nonzero(~hit.all(axis=1))[0]
    penalty = 0
    block = max(1, _BLOCK_BYTES // (8 * n * (k + 1)))
    for start in range(0, len(rows_needing), block):
        rows = rows_needing[start:start + block]
        ranks = _high_ranks(high, rows, low_nn[rows])
        ranks[hit[rows]] = 0
        penalty += int(np.maximum(ranks - k, 0).sum())
    return 1.0 - 2.0 * penalty / (n * k * (2.0 * n - 3.0 * k - 1.0))


# ---------------------------------------------------------------- k-NN accuracy


def stratified_folds(labels, folds: int = DEFAULT_FOLDS, seed: int = 0) -> np.ndarray:
    """Fold id per sample.

    Each class is shuffled and dealt round-robin, continuing where the
    previous class stopped, so every fold holds a near-equal share of every
    class (within one sample) and fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    if folds < 2:
        raise InvalidArgumentError(f"need at least 2 folds, got {folds}")
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < folds]
    if len(small):
        raise InvalidArgumentError(
            f"class {small[0]!r} has {counts[counts < folds][0]} members, fewer than {folds} folds"
        )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.nonzero(labels == c)[0])
        fold_of[members] = (offset + np.arange(len(members))) % folds
        offset = (offset + len(members)) % folds
    return fold_of


def knn_vote(neighbor_labels: np.ndarray) -> np.ndarray:
    """Majority vote per row; ties go to the tied class met first (nearest)."""
    m, k = neighbor_labels.shape
    same = neighbor_labels[:, :, None] == neighbor_labels[:, None, :]
    votes = same.sum(axis=2)  # votes for the class of each neighbor slot
    best = votes.max(axis=1, keepdims=True)
    first = np.argmax(votes == best, axis=1)
    return neighbor_labels[np.arange(m), first]


def knn_cv_counts(embedding, labels, k: int = 1, folds: int = DEFAULT_FOLDS, seed: int = 0):
    """Correct predictions and test-set sizes per fold."""
    emb = as_data_matrix(embedding, "embedding")
    labels = np.asarray(labels)
    if labels.shape != (emb.shape[0],):
        raise InvalidArgumentError(f"{labels.shape[0] if labels.ndim else 0} labels for {emb.shape[0]} rows")
    fold_of = stratified_folds(labels, folds, seed)
    correct = np.zeros(folds, dtype=np.int64)
    total = np.zeros(folds, dtype=np.int64)
    for f in range(folds):
        test = np.nonzero(fold_of == f)[0]
        train = np.nonzero(fold_of != f)[0]
        if not 1 <= k <= len(train):
            raise InvalidArgumentError(f"k={k} must be in [1, {len(train)}]")
        nn = knn_exact(emb[train], k, queries=emb[test]).indices
        pred = knn_vote(labels[train][nn])
        correct[f] = int((pred == labels[test]).sum())
        total[f] = len(test)
    return correct, total


def knn_accuracy_cv(embedding, labels, k: int = 1, folds: int = DEFAULT_FOLDS, seed: int = 0) -> float:
    """Mean k-NN accuracy over stratified folds."""
    correct, total = knn_cv_counts(embedding, labels, k, folds, seed)
    return float(np.mean(correct / total))


# ---------------------------------------------------------------- CTA


def class_centroids(points, labels) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    _, inv = np.unique(labels, return_inverse=True)
    inv = inv.ravel()
    sums = np.zeros((inv.max() + 1, points.shape[1]))
    np.add.at(sums, inv, points)
    return sums / np.bincount(inv)[:, None]


def _order_signs(d_ab, d_bc, d_ac):
    def cmp(x, y):
        tie = np.abs(x - y) <= CTA_TIE_RTOL * np.maximum(np.abs(x), np.abs(y))
        return np.where(tie, 0, np.sign(x - y)).astype(np.int8)

    return np.stack([cmp(d_ab, d_bc), cmp(d_ab, d_ac), cmp(d_bc, d_ac)], axis=-1)


def centroid_triplet_accuracy(high, low, labels) -> float:
    """Share of class-centroid triples whose distance order is unchanged.

    A triple is preserved when all three pairwise comparisons between its
    distances agree; distances equal within a relative ``1e-12`` count as
    tied and a tie is preserved only if it is tied in both spaces.
    """
    high = as_data_matrix(high, "high")
    low = as_data_matrix(low, "low")
    labels = np.asarray(labels)
    if not high.shape[0] == low.shape[0] == labels.shape[0]:
        raise InvalidArgumentError("high, low and labels must have the same length")
    if len(np.unique(labels)) < 3:
        raise InvalidArgumentError(f"centroid triplet accuracy needs >= 3 classes, got {len(np.unique(labels))}")
    ch = class_centroids(high, labels)
    cl = class_centroids(low, labels)
    c = ch.shape[0]
    dh = np.sqrt(((ch[:, None, :] - ch[None, :, :]) ** 2).sum(-1))
    dl = np.sqrt(((cl[:, None, :] - cl[None, :, :]) ** 2).sum(-1))
    preserved = 0
    total = 0
    for a in range(c - 2):
        # all (b, cc) with a < b < cc
        b, cc = np.triu_indices(c - a - 1, 1)
        b += a + 1
        cc += a + 1
        sh = _order_signs(dh[a, b], dh[b, cc], dh[a, cc])
        sl = _order_signs(dl[a, b], dl[b, cc], dl[a, cc])
        preserved += int((sh == sl).all(axis=1).sum())
        total += len(b)
    return preserved / total


def evaluate(
    high,
    low,
    labels=None,
    *,
    trust_k: int | None = DEFAULT_TRUST_K,
    knn_ks=(1,),
    folds: int = DEFAULT_FOLDS,
    cta: bool = True,
    seed: int = 0,
) -> MetricsReport:
    """Compute the requested scores into a :class:`MetricsReport`."""
    import time

    t0 = time.perf_counter()
    report = MetricsReport()
    if trust_k:
        report.trustworthiness = trustworthiness(high, low, trust_k)
        report.trustworthiness_k = trust_k
    if (knn_ks or cta) and labels is None:
        raise InvalidArgumentError("labels are required for k-NN accuracy and CTA")
    for k in knn_ks or ():
        report.knn_accuracy.append(KnnScore(k, knn_accuracy_cv(low, labels, k, folds, seed), folds))
    if cta:
        report.cta = centroid_triplet_accuracy(high, low, labels)
    report.runtime_seconds = time.perf_counter() - t0
    return report
