import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from hnne import nnsearch
from hnne._threads import thread_limit
from hnne.errors import InvalidArgumentError, InvalidDataError


def test_three_points_on_a_line():
    nl = nnsearch.knn_exact(np.array([[0.0], [1.0], [3.0]]), 1)
    assert nl.indices.tolist() == [[1], [0], [1]]
    assert nl.distances.tolist() == [[1.0], [1.0], [2.0]]


def test_duplicates_point_at_each_other():
    nl = nnsearch.knn_exact(np.array([[2.0, 2.0], [2.0, 2.0]]), 1)
    assert nl.indices.tolist() == [[1], [0]]
    assert nl.distances.tolist() == [[0.0], [0.0]]


def test_equidistant_neighbors_resolved_by_index():
    # point 1 sits halfway between 0 and 2
    nl = nnsearch.knn_exact(np.array([[0.0], [1.0], [2.0]]), 1)
    assert nl.indices[1, 0] == 0


small_sets = arrays(
    np.float64,
    st.tuples(st.integers(2, 40), st.integers(1, 6)),
    elements=st.integers(-4, 4).map(float),  # coarse grid forces many ties
)


@settings(max_examples=60, deadline=None)
@given(small_sets, st.integers(1, 5))
def test_exact_matches_bruteforce_with_ties(points, k):
    k = min(k, len(points) - 1)
    got = nnsearch.knn_exact(points, k)
    idx, dist = oracles.knn(points, k)
    assert np.array_equal(got.indices, idx)
    assert np.array_equal(got.distances, dist)


@pytest.mark.parametrize("dim", [3, 16, 17, 40])
def test_tree_and_blas_paths_agree_with_oracle(rng, dim):
    pts = rng.normal(size=(300, dim))
    got = nnsearch.knn_exact(pts, 4)
    idx, dist = oracles.knn(pts, 4)
    assert np.array_equal(got.indices, idx)
    np.testing.assert_allclose(got.distances, dist, rtol=0, atol=0)


def test_query_mode_against_oracle(rng):
    pts = rng.normal(size=(200, 5))
    q = rng.normal(size=(50, 5))
    got = nnsearch.knn_exact(pts, 3, queries=q)
    assert np.array_equal(got.indices, oracles.knn_query(pts, q, 3))


def test_total_order_invariant(rng):
    pts = np.round(rng.normal(size=(150, 3)), 1)
    nl = nnsearch.knn_exact(pts, 5)
    dm = oracles.distance_matrix(pts)
    for i in range(len(pts)):
        last = (nl.distances[i, -1], nl.indices[i, -1])
        for j in set(range(len(pts))) - set(nl.indices[i]) - {i}:
            assert last <= (dm[i, j], j)


def test_k_bounds():
    pts = np.zeros((4, 2))
    with pytest.raises(InvalidArgumentError):
        nnsearch.knn_exact(pts, 0)
    with pytest.raises(InvalidArgumentError):
        nnsearch.knn_exact(pts, 4)


def test_non_finite_rejected():
    pts = np.array([[0.0, 1.0], [np.nan, 2.0]])
    with pytest.raises(InvalidDataError):
        nnsearch.knn_exact(pts, 1)


def test_float32_input_kept_without_copy():
    pts = np.arange(20, dtype=np.float32).reshape(10, 2)
    assert nnsearch.as_data_matrix(pts).dtype == np.float32


def test_approx_tiny_input_equals_exact():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    a = nnsearch.knn_approx(pts, 1, seed=3)
    e = nnsearch.knn_exact(pts, 1)
    assert np.array_equal(a.indices, e.indices)
    assert np.array_equal(a.distances, e.distances)


def test_approx_recall_gaussian_blob():
    pts = np.random.default_rng(7).normal(size=(1000, 20))
    found = nnsearch.knn_approx(pts, 1, seed=7)
    truth_idx, _ = oracles.knn(pts, 1)
    assert oracles.recall(found.indices, truth_idx) >= 0.99
    assert nnsearch.recall(found, nnsearch.knn_exact(pts, 1)) == oracles.recall(found.indices, truth_idx)


def test_approx_is_deterministic_per_seed(rng):
    pts = rng.normal(size=(800, 30))
    a = nnsearch.knn_approx(pts, 5, seed=1)
    b = nnsearch.knn_approx(pts, 5, seed=1)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.distances, b.distances)


def test_approx_rows_sorted_and_self_free(rng):
    pts = rng.normal(size=(600, 12))
    nl = nnsearch.knn_approx(pts, 6, seed=0)
    assert not (nl.indices == np.arange(600)[:, None]).any()
    assert (np.diff(nl.distances, axis=1) >= 0).all()
    np.testing.assert_array_equal(
        nl.distances, nnsearch.pair_distances(pts[:, None, :], pts[nl.indices])
    )


def test_backend_resolution():
    assert nnsearch.resolve_backend("auto", 100_000, 2) == "exact"
    assert nnsearch.resolve_backend("auto", 1000, 500) == "exact"
    assert nnsearch.resolve_backend("auto", 100_000, 784) == "exact"
    assert nnsearch.resolve_backend("auto", 500_000, 784) == "approx"
    assert nnsearch.resolve_backend("approx", 10, 2) == "approx"
    with pytest.raises(InvalidArgumentError):
        nnsearch.resolve_backend("hnsw", 10, 2)


@pytest.mark.parametrize("backend", ["exact", "approx"])
def test_thread_count_does_not_change_results(rng, backend):
    pts = rng.normal(size=(1500, 24))
    outs = []
    for t in (1, 4):
        with thread_limit(t):
            outs.append(nnsearch.knn(pts, 3, backend=backend, seed=2))
    assert np.array_equal(outs[0].indices, outs[1].indices)
    assert np.array_equal(outs[0].distances, outs[1].distances)
