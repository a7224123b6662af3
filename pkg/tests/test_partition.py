from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_grid, random_grid, ring3, six_bus_single_congestion, two_bus
from gridagg.dcopf import lmp, ncp, solve_dcopf
from gridagg.grid import is_connected_subset
from gridagg.partition import (
    ALL_METHODS,
    FeatureMatrix,
    Method,
    Metric,
    anac_history,
    anac_partition,
    canonical_labels,
    derive_line_map,
    inverse_lmp_difference,
    kmeans,
    kmeans_partition,
    partition,
    spectral_partition,
    trivial_partition,
)
from gridagg.ptdf import build_ptdf


def path_grid(n):
    return make_grid(n, [(i, i + 1, 1.0, 100.0) for i in range(n - 1)], [(0, 1.0, 10.0)])


def lmp_features(values):
    return FeatureMatrix(np.asarray(values, dtype=float), Metric.LMP)


def adjacency(grid):
    adj = [set() for _ in range(grid.n_buses)]
    for a, b in grid.line_ends:
        adj[int(a)].add(int(b))
        adj[int(b)].add(int(a))
    return adj


# ---------------------------------------------------------------- basics


def test_method_names():
    assert [m.value for m in ALL_METHODS] == [
        "lmp-kmeans", "lmp-sc", "lmp-anac", "ncp-kmeans", "ncp-anac"]
    assert Method.NCP_ANAC.metric is Metric.NCP
    assert Method.LMP_SC.algorithm == "sc"


def test_canonical_labels():
    assert canonical_labels([4, 4, 1, 7, 1]).tolist() == [0, 0, 1, 2, 1]


def test_feature_matrix_reshapes_vectors():
    assert lmp_features([1.0, 2.0]).values.shape == (2, 1)


def test_line_map_on_ring():
    M, lim = derive_line_map(ring3(limits=(10.0, 20.0, 30.0)), [0, 0, 1])
    np.testing.assert_array_equal(M, [[0, 1, 0], [0, 0, 1]])
    np.testing.assert_array_equal(lim, [20.0, 30.0])


def test_line_map_merges_parallel_lines():
    M, lim = derive_line_map(ring3(limits=(10.0, 20.0, 30.0)), [0, 0, 1], merge_parallel=True)
    np.testing.assert_array_equal(M, [[0, 1, 1]])
    np.testing.assert_array_equal(lim, [50.0])


def test_partition_result_views():
    res = trivial_partition(ring3())
    assert res.n_clusters == 1
    assert res.clusters == [[0, 1, 2]]
    assert res.line_map.shape == (0, 3)
    assert res.retained_lines == []
    np.testing.assert_array_equal(res.node_map, [[1, 1, 1]])
    assert set(res.to_json()) == {"method", "n_clusters", "seed", "clusters", "retained_lines"}


# ---------------------------------------------------------------- kmeans


def test_kmeans_two_groups():
    labels, inertia = kmeans(np.array([10.0, 10.0, 50.0, 50.0]), 2)
    assert canonical_labels(labels).tolist() == [0, 0, 1, 1]
    assert inertia == pytest.approx(0.0)


def test_kmeans_extremes():
    X = np.array([3.0, 1.0, 2.0])
    assert canonical_labels(kmeans(X, 3)[0]).tolist() == [0, 1, 2]
    assert kmeans(X, 1)[0].tolist() == [0, 0, 0]
    with pytest.raises(ValueError):
        kmeans(X, 4)


def test_kmeans_constant_features_still_fill_k_clusters():
    labels, _ = kmeans(np.ones((6, 2)), 3)
    assert np.bincount(labels, minlength=3).min() >= 1


def test_kmeans_is_seeded():
    X = np.random.default_rng(0).normal(size=(40, 3))
    assert np.array_equal(kmeans(X, 5, seed=3)[0], kmeans(X, 5, seed=3)[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.integers(1, 6))
def test_kmeans_invariant_to_sign_and_shift(seed, n, k):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, 2)) * 10, 2)
    a = canonical_labels(kmeans(X, k, seed=5)[0])
    b = canonical_labels(kmeans(-X + 7.0, k, seed=5)[0])
    assert np.array_equal(a, b)
    assert np.unique(a).size == k


# ---------------------------------------------------------------- spectral


def test_inverse_lmp_difference_and_cap():
    g = ring3()
    rho = inverse_lmp_difference(g, np.array([10.0, 20.0, 10.0]), rho_cap=1e6)
    np.testing.assert_allclose(rho, [0.1, 0.1, 1e6])


def two_communities():
    lines = [(a, b, 1.0, 100.0) for a, b in itertools.combinations(range(4), 2)]
    lines += [(a, b, 1.0, 100.0) for a, b in itertools.combinations(range(4, 8), 2)]
    lines += [(3, 4, 1.0, 100.0), (0, 7, 1.0, 100.0)]
    g = make_grid(8, lines, [(0, 1.0, 10.0)])
    prices = np.array([10.0, 10.2, 10.5, 10.9, 30.0, 30.4, 30.1, 29.7])
    return g, prices


def brute_force_ncut(grid, prices):
    rho = inverse_lmp_difference(grid, prices)
    ends = grid.line_ends
    deg = np.zeros(grid.n_buses)
    np.add.at(deg, ends[:, 0], rho)
    np.add.at(deg, ends[:, 1], rho)
    best, best_labels = np.inf, None
    for mask in range(1, 2 ** (grid.n_buses - 1)):
        labels = np.array([(mask >> i) & 1 for i in range(grid.n_buses)])
        cut = rho[labels[ends[:, 0]] != labels[ends[:, 1]]].sum()
        value = cut / deg[labels == 0].sum() + cut / deg[labels == 1].sum()
        if value < best:
            best, best_labels = value, labels
    return canonical_labels(best_labels)


def test_spectral_matches_brute_force_normalized_cut():
    g, prices = two_communities()
    res = spectral_partition(g, prices, 2)
    assert res.labels.tolist() == brute_force_ncut(g, prices).tolist()
    assert res.labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


def test_spectral_cluster_range():
    g, prices = two_communities()
    with pytest.raises(ValueError):
        spectral_partition(g, prices, 1)
    assert partition(g, Method.LMP_SC, 1, prices).n_clusters == 1
    assert partition(g, Method.LMP_SC, 8, prices).n_clusters == 8


# ---------------------------------------------------------------- ANAC


def test_anac_path_example():
    g = path_grid(3)
    hist = anac_history(g, lmp_features([10.0, 20.0, 21.0]), stop=2)
    assert hist.merges == [(1, 2)]
    assert canonical_labels(hist.labels_at(2)).tolist() == [0, 1, 1]
    np.testing.assert_allclose(hist.final_features, [[10.0], [20.5]])


def test_anac_respects_adjacency_over_distance():
    # buses 0 and 2 have equal prices but are not neighbours
    g = path_grid(3)
    hist = anac_history(g, lmp_features([5.0, 100.0, 5.0]), stop=2)
    assert hist.merges == [(0, 1)]


def test_anac_ties_are_lexicographic():
    g = path_grid(4)
    hist = anac_history(g, lmp_features([1.0, 1.0, 1.0, 1.0]))
    assert hist.merges == [(0, 1), (0, 1), (0, 1)]
    assert hist.labels_at(1).tolist() == [0, 0, 0, 0]


def test_anac_identity_and_history_bounds():
    g = path_grid(4)
    feats = lmp_features([1.0, 3.0, 2.0, 9.0])
    assert anac_partition(g, feats, 4).labels.tolist() == [0, 1, 2, 3]
    hist = anac_history(g, feats, stop=3)
    with pytest.raises(ValueError):
        hist.labels_at(2)


def test_anac_literal_weights():
    # second merge absorbs a singleton into a pair: weights 2/3 and 1/3
    g = path_grid(3)
    hist = anac_history(g, lmp_features([0.0, 1.0, 30.0]))
    np.testing.assert_allclose(hist.final_features, [[(2 / 3) * 0.5 + (1 / 3) * 30.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_anac_clusters_are_connected(seed, n):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    feats = FeatureMatrix(rng.normal(size=(n, 3)), Metric.NCP)
    hist = anac_history(g, feats)
    adj = adjacency(g)
    for c in range(1, n + 1):
        labels = hist.labels_at(c)
        assert np.unique(labels).size == c
        for k in range(c):
            assert is_connected_subset(adj, np.flatnonzero(labels == k).tolist())


# ---------------------------------------------------------------- dispatcher


def test_dispatcher_requires_ncp_for_ncp_methods():
    with pytest.raises(ValueError):
        partition(ring3(), Method.NCP_KMEANS, 2, np.zeros(3))


def test_dispatcher_sets_method_and_seed():
    g = two_bus()
    res = partition(g, "lmp-kmeans", 2, np.array([10.0, 50.0]), seed=9)
    assert (res.method, res.seed) == ("lmp-kmeans", 9)
    res = kmeans_partition(g, lmp_features([10.0, 50.0]), 1)
    assert res.method == "lmp-kmeans"


@pytest.mark.parametrize("n_clusters", range(1, 7))
def test_single_congestion_lmp_and_ncp_agree(n_clusters):
    g = six_bus_single_congestion()
    ptdf = build_ptdf(g)
    sol = solve_dcopf(g, ptdf)
    assert sol.congested.sum() == 1
    prices, ncps = lmp(sol, ptdf), ncp(sol, ptdf)
    for a, b in [(Method.LMP_KMEANS, Method.NCP_KMEANS), (Method.LMP_ANAC, Method.NCP_ANAC)]:
        pa = partition(g, a, n_clusters, prices, ncps, seed=1)
        pb = partition(g, b, n_clusters, prices, ncps, seed=1)
        assert pa.same_sets(pb), (a, b, pa.clusters, pb.clusters)
