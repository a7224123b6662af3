from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gridagg.lp import (
    LpProblem,
    LpStatus,
    LpTolerances,
    OracleSizeError,
    highs_engine,
    kkt_report,
    solve_lp,
    vertex_enumeration_oracle,
)


def two_gen_lp() -> LpProblem:
    return LpProblem(
        c=np.array([10.0, 50.0]),
        lower=np.zeros(2),
        upper=np.array([30.0, 100.0]),
        A_eq=np.array([[1.0, 1.0]]),
        b_eq=np.array([50.0]),
    )


def test_one_dimensional_bound_dual():
    sol = solve_lp(LpProblem(c=np.array([1.0]), lower=np.array([1.0]), upper=np.array([np.inf])))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.eta_lower[0] == pytest.approx(1.0)


def test_two_generator_lp_pins_sign_convention():
    sol = solve_lp(two_gen_lp())
    assert sol.status is LpStatus.OPTIMAL
    np.testing.assert_allclose(sol.x, [30.0, 20.0], atol=1e-9)
    assert sol.objective == pytest.approx(1300.0)
    # Lagrangian c.x + y_eq (A x - b): marginal unit costs 50, so y_eq = -50
    assert sol.y_eq[0] == pytest.approx(-50.0)
    np.testing.assert_allclose(sol.eta_upper, [40.0, 0.0], atol=1e-9)
    assert kkt_report(two_gen_lp(), sol).ok()


def test_infeasible_detected():
    problem = LpProblem(c=np.array([1.0]), lower=np.array([1.0]), upper=np.array([np.inf]),
                        A_le=np.array([[1.0]]), b_le=np.array([0.0]))
    assert solve_lp(problem).status is LpStatus.INFEASIBLE
    assert vertex_enumeration_oracle(problem).status is LpStatus.INFEASIBLE


def test_unbounded_detected():
    problem = LpProblem(c=np.array([-1.0]), lower=np.array([0.0]), upper=np.array([np.inf]))
    assert solve_lp(problem).status is LpStatus.UNBOUNDED
    assert vertex_enumeration_oracle(problem).status is LpStatus.UNBOUNDED


def test_oracle_on_two_generator_lp():
    sol = vertex_enumeration_oracle(two_gen_lp())
    assert sol.objective == pytest.approx(1300.0)
    np.testing.assert_allclose(sol.x, [30.0, 20.0])


def test_duplicated_constraint_matches_oracle():
    problem = LpProblem(
        c=np.array([-1.0, -2.0]),
        lower=np.zeros(2),
        upper=np.full(2, 10.0),
        A_le=np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 1.0]]),
        b_le=np.array([4.0, 4.0, 4.0]),
    )
    sol = solve_lp(problem)
    assert sol.objective == pytest.approx(vertex_enumeration_oracle(problem).objective)
    assert sol.objective == pytest.approx(-8.0)
    assert kkt_report(problem, sol).ok()


def test_oracle_size_limit():
    problem = LpProblem(c=np.zeros(13), lower=np.zeros(13), upper=np.ones(13))
    with pytest.raises(OracleSizeError):
        vertex_enumeration_oracle(problem)


def test_iteration_limit_status():
    rng = np.random.default_rng(3)
    n = 8
    problem = LpProblem(c=-rng.uniform(1, 2, n), lower=np.zeros(n), upper=np.full(n, np.inf),
                        A_le=rng.uniform(0.1, 1, (6, n)), b_le=np.ones(6))
    sol = solve_lp(problem, LpTolerances(max_iter=1))
    assert sol.status is LpStatus.ITERATION_LIMIT


def test_solve_is_deterministic():
    rng = np.random.default_rng(11)
    n, m = 10, 8
    problem = LpProblem(c=rng.normal(size=n), lower=np.zeros(n), upper=np.full(n, 5.0),
                        A_le=rng.normal(size=(m, n)), b_le=rng.uniform(1, 3, m),
                        A_eq=np.ones((1, n)), b_eq=np.array([7.0]))
    a, b = solve_lp(problem), solve_lp(problem)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.y_le.tobytes() == b.y_le.tobytes()
    assert a.y_eq.tobytes() == b.y_eq.tobytes()


@st.composite
def small_lps(draw):
    n = draw(st.integers(1, 5))
    m_eq = draw(st.integers(0, 2))
    m_le = draw(st.integers(0, 4))
    ints = st.integers(-5, 5)
    c = np.array(draw(st.lists(ints, min_size=n, max_size=n)), dtype=float)
    upper = np.array(draw(st.lists(st.integers(1, 10), min_size=n, max_size=n)), dtype=float)
    A_eq = np.array(draw(st.lists(st.lists(ints, min_size=n, max_size=n),
                                  min_size=m_eq, max_size=m_eq)), dtype=float).reshape(m_eq, n)
    b_eq = np.array(draw(st.lists(st.integers(-10, 20), min_size=m_eq, max_size=m_eq)),
                    dtype=float)
    A_le = np.array(draw(st.lists(st.lists(ints, min_size=n, max_size=n),
                                  min_size=m_le, max_size=m_le)), dtype=float).reshape(m_le, n)
    b_le = np.array(draw(st.lists(st.integers(-10, 20), min_size=m_le, max_size=m_le)),
                    dtype=float)
    return LpProblem(c=c, lower=np.zeros(n), upper=upper, A_eq=A_eq, b_eq=b_eq,
                     A_le=A_le, b_le=b_le)


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_lps())
def test_simplex_agrees_with_vertex_oracle(problem):
    sol = solve_lp(problem)
    ref = vertex_enumeration_oracle(problem)
    assert sol.status is ref.status
    if ref.status is LpStatus.OPTIMAL:
        assert abs(sol.objective - ref.objective) <= 1e-8 * max(1.0, abs(ref.objective))
        assert kkt_report(problem, sol).ok()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_simplex_agrees_with_highs_on_dispatch_like_lps(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 15)), int(rng.integers(0, 12))
    problem = LpProblem(c=rng.uniform(0, 50, n), lower=np.zeros(n), upper=rng.uniform(1, 20, n),
                        A_eq=np.ones((1, n)), b_eq=np.array([rng.uniform(0.5, 1.0) * n]),
                        A_le=rng.normal(size=(m, n)), b_le=rng.uniform(0.5, 5, m))
    ours = solve_lp(problem)
    ref = highs_engine(problem, LpTolerances())
    assert ours.status is ref.status
    if ref.status is LpStatus.OPTIMAL:
        assert ours.objective == pytest.approx(ref.objective, rel=1e-8, abs=1e-8)
        assert kkt_report(problem, ours).ok()
