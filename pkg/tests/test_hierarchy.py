import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from hnne.dataio import gen_uniform_square
from hnne.errors import InvalidArgumentError
from hnne.hierarchy import (
    MIN_TOP_SIZE,
    NNGraph,
    Partition,
    UnionFind,
    build_1nng,
    build_hierarchy,
    component_centroids,
    connected_components,
    partition_at_level,
)

point_sets = arrays(
    np.float64,
    st.tuples(st.integers(2, 60), st.integers(1, 4)),
    elements=st.integers(-5, 5).map(float),
)


def test_two_pairs():
    pts = np.array([[0.0], [1.0], [10.0], [11.0]])
    part = connected_components(build_1nng(pts))
    assert part.labels.tolist() == [0, 0, 1, 1]


def test_chain_merges_into_one_component():
    pts = np.array([[0.0], [1.0], [3.0], [7.0]])
    part = connected_components(build_1nng(pts))
    assert part.n_groups == 1


@settings(max_examples=60, deadline=None)
@given(point_sets)
def test_components_match_bfs(points):
    g = build_1nng(points)
    part = connected_components(g)
    assert part.labels.tolist() == oracles.weak_components(g.nn_index).tolist()


@settings(max_examples=60, deadline=None)
@given(point_sets)
def test_every_component_has_two_members_and_one_mutual_pair(points):
    g = build_1nng(points)
    part = connected_components(g)
    sizes = part.sizes()
    assert (sizes >= 2).all()
    mutual = g.nn_index[g.nn_index] == np.arange(len(g))
    # each component holds exactly one 2-cycle
    roots_per_group = np.bincount(part.labels[mutual], minlength=part.n_groups)
    assert (roots_per_group == 2).all()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), max_size=60))
def test_union_find_against_bfs(edges):
    n = 30
    uf = UnionFind(n)
    if edges:
        a, b = np.array(edges).T
        uf.union_edges(a, b)
    roots = uf.find_all()
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    for i in range(n):
        seen, stack = {i}, [i]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        assert roots[i] == min(seen)


def test_centroids_are_group_means(rng):
    pts = rng.normal(size=(50, 3))
    part = connected_components(build_1nng(pts))
    cents = component_centroids(pts, part)
    for gi in range(part.n_groups):
        np.testing.assert_allclose(cents[gi], pts[part.labels == gi].mean(axis=0), rtol=1e-12, atol=1e-12)


def test_centroids_reject_singletons():
    with pytest.raises(InvalidArgumentError):
        component_centroids(np.zeros((3, 1)), Partition(np.arange(3), 3))


def test_levels_shrink_at_least_by_half(rng):
    h = build_hierarchy(rng.normal(size=(3000, 5)))
    sizes = [h.n_points, *h.level_sizes()]
    assert len(h.levels) >= 3
    for lo, hi in zip(sizes, sizes[1:]):
        assert hi <= lo // 2
    assert h.level_sizes()[-1] >= MIN_TOP_SIZE


def test_parent_maps_chain(rng):
    h = build_hierarchy(rng.normal(size=(1000, 4)))
    for below, lvl in zip(h.levels, h.levels[1:]):
        assert len(lvl.parent_of_child) == below.size
        np.testing.assert_allclose(
            lvl.centroids, component_centroids(below.centroids, lvl.parent_of_child), rtol=0, atol=0
        )


def test_partition_at_level_composes_parent_maps(rng):
    h = build_hierarchy(rng.normal(size=(800, 3)))
    for level in range(len(h.levels)):
        part = partition_at_level(h, level)
        assert part.n_groups == h.levels[level].size
        lab = h.base_partition.labels
        for lvl in h.levels[1:level + 1]:
            lab = np.array([lvl.parent_of_child.labels[v] for v in lab])
        assert part.labels.tolist() == lab.tolist()
    with pytest.raises(InvalidArgumentError):
        partition_at_level(h, len(h.levels))


def test_tiny_inputs():
    h = build_hierarchy(np.array([[0.0], [1.0]]))
    assert h.levels == [] and h.base_partition.n_groups == 1
    h = build_hierarchy(np.array([[0.0], [1.0], [10.0], [11.0], [20.0], [21.0]]))
    assert h.level_sizes() == [3]
    with pytest.raises(InvalidArgumentError):
        build_hierarchy(np.zeros((1, 2)))


def test_component_ratio_on_uniform_square():
    part = connected_components(build_1nng(gen_uniform_square(20_000, seed=11)))
    assert 0.27 <= part.n_groups / 20_000 <= 0.35


def test_graph_is_deterministic():
    pts = gen_uniform_square(2000, seed=3)
    a, b = build_1nng(pts), build_1nng(pts)
    assert np.array_equal(a.nn_index, b.nn_index)
    assert isinstance(a, NNGraph)
