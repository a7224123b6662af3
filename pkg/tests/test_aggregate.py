from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_grid, ring3, two_bus
from gridagg.aggregate import aggregated_to_json, build_aggregated, reduce_ptdf, solve_aggregated
from gridagg.dcopf import solve_dcopf
from gridagg.partition import _result, trivial_partition
from gridagg.ptdf import build_ptdf


def test_ring_reduced_ptdf_hand_value():
    g = ring3()
    am = build_aggregated(g, build_ptdf(g), _result(g, [0, 0, 1], "manual", 0))
    np.testing.assert_allclose(am.reduced_ptdf, [[1 / 6, -1 / 3], [-1 / 6, -2 / 3]], atol=1e-15)
    assert am.n_clusters == 2
    assert am.provenance.retained_lines == [1, 2]


def test_identity_partition_reproduces_ptdf(rts24):
    ptdf = build_ptdf(rts24)
    part = _result(rts24, np.arange(rts24.n_buses), "manual", 0)
    am = build_aggregated(rts24, ptdf, part)
    np.testing.assert_array_equal(am.reduced_ptdf, ptdf.values)
    np.testing.assert_array_equal(am.line_limits, rts24.limits)


def test_copper_plate_has_no_lines():
    g = two_bus()
    am = build_aggregated(g, build_ptdf(g), trivial_partition(g))
    assert am.reduced_ptdf.shape == (0, 1)
    sol = solve_aggregated(am, g)
    assert sol.z == pytest.approx(500.0)
    np.testing.assert_allclose(sol.p, [50.0, 0.0], atol=1e-9)


def test_partition_size_checked():
    g = two_bus()
    with pytest.raises(ValueError):
        build_aggregated(g, build_ptdf(g), trivial_partition(ring3()))


def test_reduce_ptdf_averages_member_columns():
    P = np.array([[1.0, 3.0, 5.0]])
    M_nc = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(reduce_ptdf(P, M_nc, np.eye(1)), [[2.0, 5.0]])


def test_json_view_is_serializable(rts24):
    ptdf = build_ptdf(rts24)
    labels = np.arange(rts24.n_buses) // 5
    am = build_aggregated(rts24, ptdf, _result(rts24, labels, "manual", 0))
    data = json.loads(json.dumps(aggregated_to_json(am, rts24)))
    assert len(data["buses"]) == 5
    assert sum(len(b["members"]) for b in data["buses"]) == 24
    assert len(data["generators"]) == rts24.n_generators
    assert np.array(data["reduced_ptdf"]).shape == (len(data["lines"]), 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 15), st.integers(1, 15))
def test_aggregation_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, n)
    k = min(k, n)
    labels = rng.permutation(np.arange(n) % k)
    ptdf = build_ptdf(g)
    am = build_aggregated(g, ptdf, _result(g, labels, "manual", 0))
    assert am.demand.sum() == pytest.approx(g.demand.sum())
    assert am.reduced_ptdf.shape == (len(am.line_limits), am.n_clusters)
    full = solve_dcopf(g, ptdf)
    if k == 1:
        # copper plate is a relaxation of the full model
        assert solve_aggregated(am, g).z <= full.z + 1e-7 * max(1.0, abs(full.z))
