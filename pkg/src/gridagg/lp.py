"""Dense bounded-variable primal simplex with dual recovery.

Problems have the form::

    min  c @ x
    s.t. A_eq @ x == b_eq
         A_le @ x <= b_le
         lower <= x <= upper

Duals follow the Lagrangian

    c @ x + y_eq @ (A_eq @ x - b_eq) + y_le @ (A_le @ x - b_le)
          - eta_lower @ (x - lower) + eta_upper @ (x - upper)

so that ``y_le >= 0``, ``eta_lower >= 0``, ``eta_upper >= 0`` and stationarity
reads ``c + A_eq.T @ y_eq + A_le.T @ y_le - eta_lower + eta_upper = 0``.
With this convention ``-y_eq`` is the marginal cost of raising ``b_eq``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class LpTolerances:
    feas: float = 1e-7
    cs: float = 1e-6
    gap: float = 1e-7
    pivot: float = 1e-9
    optimality: float = 1e-9
    max_iter: int = 50_000
    bland_after: int = 50  # consecutive degenerate pivots before Bland's rule
    refactor_every: int = 100
    max_condition: float = 1e14


@dataclass
class LpProblem:
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_le: np.ndarray = None
    b_le: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.A_le, self.b_le = _rows(self.A_le, self.b_le, n, "le")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(np.isnan(self.c)) or np.any(np.isinf(self.c)):
            raise ValueError("objective must be finite")

    @property
    def n(self) -> int:
        return self.c.size


def _rows(A, b, n, name):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.size == 0:
        A = A.reshape(0, n)
    if A.shape != (b.size, n):
        raise ValueError(f"A_{name} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective: float
    y_eq: np.ndarray
    y_le: np.ndarray
    eta_lower: np.ndarray
    eta_upper: np.ndarray
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


LpEngine = Callable[[LpProblem, LpTolerances], LpSolution]


def _empty_solution(problem: LpProblem, status: LpStatus, iterations=0, message=""):
    n = problem.n
    return LpSolution(
        status=status,
        x=np.full(n, np.nan),
        objective=np.nan,
        y_eq=np.full(problem.b_eq.size, np.nan),
        y_le=np.full(problem.b_le.size, np.nan),
        eta_lower=np.full(n, np.nan),
        eta_upper=np.full(n, np.nan),
        iterations=iterations,
        message=message,
    )


# nonbasic position flags
_AT_LOWER, _AT_UPPER, _FREE_ZERO, _BASIC = 0, 1, 2, 3


class _Simplex:
    """Working state of one solve. Columns are [structural | slacks | artificials]."""

    def __init__(self, problem: LpProblem, tol: LpTolerances):
        self.tol = tol
        self.problem = problem
        n = problem.n
        m_eq, m_le = problem.b_eq.size, problem.b_le.size
        m = m_eq + m_le
        self.n, self.m_eq, self.m_le, self.m = n, m_eq, m_le, m

        A = np.vstack([problem.A_eq, problem.A_le]) if m else np.zeros((0, n))
        b = np.concatenate([problem.b_eq, problem.b_le])
        lower = problem.lower
        upper = problem.upper

        # starting point for structurals: nearest finite bound, else zero
        x_struct = np.where(
            np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0)
        )
        flags = np.where(
            np.isfinite(lower),
            _AT_LOWER,
            np.where(np.isfinite(upper), _AT_UPPER, _FREE_ZERO),
        )
        resid = b - A @ x_struct if m else np.zeros(0)

        slack_cols = np.zeros((m, m_le))
        slack_cols[m_eq:, :] = np.eye(m_le)
        x_slack = np.zeros(m_le)
        slack_flags = np.full(m_le, _AT_LOWER)

        basis = np.empty(m, dtype=int)
        art_cols = []
        art_vals = []
        art_rows = []
        for i in range(m):
            if i >= m_eq and resid[i] >= 0.0:
                k = i - m_eq
                basis[i] = n + k
                x_slack[k] = resid[i]
                slack_flags[k] = _BASIC
            else:
                sign = 1.0 if resid[i] >= 0.0 else -1.0
                col = np.zeros(m)
                col[i] = sign
                art_cols.append(col)
                art_vals.append(abs(resid[i]))
                art_rows.append(i)
        n_art = len(art_cols)
        for j, i in enumerate(art_rows):
            basis[i] = n + m_le + j

        self.A = np.hstack(
            [A, slack_cols, np.array(art_cols).T if n_art else np.zeros((m, 0))]
        )
        self.b = b
        self.n_art = n_art
        self.lb = np.concatenate([lower, np.zeros(m_le), np.zeros(n_art)])
        self.ub = np.concatenate([upper, np.full(m_le, np.inf), np.full(n_art, np.inf)])
        self.x = np.concatenate([x_struct, x_slack, np.asarray(art_vals, dtype=float)])
        self.flags = np.concatenate(
            [flags, slack_flags, np.full(n_art, _BASIC)]
        ).astype(int)
        self.basis = basis
        self.Binv = np.eye(m)
        for i, j in enumerate(basis):
            if j >= n + m_le:
                self.Binv[i, i] = self.A[i, j]  # +-1 is its own inverse
        self.iterations = 0
        self.since_refactor = 0

    def refactor(self):
        B = self.A[:, self.basis]
        if self.m == 0:
            return
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _SingularBasis(np.inf) from None
        # infinity-norm condition number, exact given the inverse
        cond = np.abs(B).sum(axis=1).max() * np.abs(Binv).sum(axis=1).max()
        if not np.isfinite(cond) or cond > self.tol.max_condition:
            raise _SingularBasis(cond)
        self.Binv = Binv
        nonbasic = self.flags != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def run(self, cost: np.ndarray) -> LpStatus:
        tol = self.tol
        degenerate = 0
        A, lb, ub = self.A, self.lb, self.ub
        fixed = lb == ub
        while True:
            if self.iterations >= tol.max_iter:
                return LpStatus.ITERATION_LIMIT
            if self.since_refactor >= tol.refactor_every:
                self.refactor()
            y = cost[self.basis] @ self.Binv
            d = cost - y @ A
            flags = self.flags
            can_up = ((flags == _AT_LOWER) | (flags == _FREE_ZERO)) & ~fixed
            can_down = ((flags == _AT_UPPER) | (flags == _FREE_ZERO)) & ~fixed
            score = np.where(can_up & (d < -tol.optimality), -d, 0.0)
            score = np.where(can_down & (d > tol.optimality), np.maximum(score, d), score)
            candidates = np.flatnonzero(score > 0.0)
            if candidates.size == 0:
                return LpStatus.OPTIMAL
            if degenerate >= tol.bland_after:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(score[candidates])])
            direction = 1.0 if (can_up[j] and d[j] < 0.0) else -1.0

            w = self.Binv @ A[:, j]
            xb = self.x[self.basis]
            lbb = lb[self.basis]
            ubb = ub[self.basis]
            move = direction * w  # basic values change by -t * move
            ratios = np.full(self.m, np.inf)
            dec = move > tol.pivot
            inc = move < -tol.pivot
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lbb[dec]) / move[dec]
                ratios[inc] = (ubb[inc] - xb[inc]) / (-move[inc])
            ratios = np.maximum(ratios, 0.0)
            t_flip = ub[j] - lb[j]
            t_basis = ratios.min() if self.m else np.inf
            if not np.isfinite(t_basis) and not np.isfinite(t_flip):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if t_flip <= t_basis:
                t = t_flip
                self.x[j] += direction * t
                self.x[self.basis] = xb - t * move
                self.flags[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                degenerate = 0
                continue

            t = t_basis
            ties = np.flatnonzero(ratios <= t + 1e-12 * max(1.0, abs(t)))
            if degenerate >= tol.bland_after:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(w[ties]))])
            leaving = self.basis[r]
            self.x[j] += direction * t
            self.x[self.basis] = xb - t * move
            if move[r] > 0:
                self.x[leaving] = lb[leaving]
                self.flags[leaving] = _AT_LOWER
            else:
                self.x[leaving] = ub[leaving]
                self.flags[leaving] = _AT_UPPER
            self.basis[r] = j
            self.flags[j] = _BASIC

            pivot_row = self.Binv[r] / w[r]
            self.Binv -= np.outer(w, pivot_row)
            self.Binv[r] = pivot_row
            self.since_refactor += 1
            degenerate = degenerate + 1 if t <= tol.pivot else 0


class _SingularBasis(Exception):
    def __init__(self, cond):
        super().__init__(f"basis matrix numerically singular (condition number {cond:.3e})")
        self.cond = cond


def simplex_engine(problem: LpProblem, tol: LpTolerances) -> LpSolution:
    """Built-in engine: two-phase bounded-variable primal simplex."""
    s = _Simplex(problem, tol)
    n, m_eq, m_le = s.n, s.m_eq, s.m_le
    try:
        if s.n_art:
            phase1 = np.zeros(s.A.shape[1])
            phase1[n + m_le:] = 1.0
            status = s.run(phase1)
            if status is not LpStatus.OPTIMAL:
                return _empty_solution(problem, status, s.iterations, "phase 1 did not finish")
            s.refactor()
            infeas = s.x[n + m_le:].sum()
            if infeas > tol.feas * max(1.0, np.abs(s.b).max(initial=0.0)):
                return _empty_solution(
                    problem, LpStatus.INFEASIBLE, s.iterations,
                    f"phase 1 residual infeasibility {infeas:.3e}",
                )
            # pin artificials at zero for phase 2
            s.ub[n + m_le:] = 0.0
            s.x[n + m_le:] = np.where(s.flags[n + m_le:] == _BASIC, s.x[n + m_le:], 0.0)
            s.flags[n + m_le:] = np.where(
                s.flags[n + m_le:] == _BASIC, _BASIC, _AT_LOWER
            )
        cost = np.zeros(s.A.shape[1])
        cost[:n] = problem.c
        status = s.run(cost)
        if status is not LpStatus.OPTIMAL:
            return _empty_solution(problem, status, s.iterations)
        s.refactor()
    except _SingularBasis as exc:
        return _empty_solution(problem, LpStatus.NUMERICAL, s.iterations, str(exc))

    y = cost[s.basis] @ s.Binv
    d = cost - y @ s.A
    nonbasic = s.flags[:n] != _BASIC
    eta_lower = np.where(nonbasic, np.maximum(d[:n], 0.0), 0.0)
    eta_upper = np.where(nonbasic, np.maximum(-d[:n], 0.0), 0.0)
    y_eq = -y[:m_eq]
    y_le = -y[m_eq:]
    y_le = np.where((y_le < 0.0) & (y_le > -tol.cs), 0.0, y_le)
    x = s.x[:n].copy()
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=x,
        objective=float(problem.c @ x),
        y_eq=y_eq,
        y_le=y_le,
        eta_lower=eta_lower,
        eta_upper=eta_upper,
        iterations=s.iterations,
    )


def highs_engine(problem: LpProblem, tol: LpTolerances) -> LpSolution:
    """Adapter for scipy's HiGHS, mapped onto the same dual sign convention."""
    from scipy.optimize import linprog

    res = linprog(
        problem.c,
        A_ub=problem.A_le if problem.b_le.size else None,
        b_ub=problem.b_le if problem.b_le.size else None,
        A_eq=problem.A_eq if problem.b_eq.size else None,
        b_eq=problem.b_eq if problem.b_eq.size else None,
        bounds=list(zip(
            [None if np.isinf(v) else v for v in problem.lower],
            [None if np.isinf(v) else v for v in problem.upper],
        )),
        method="highs",
    )
    status = {0: LpStatus.OPTIMAL, 1: LpStatus.ITERATION_LIMIT, 2: LpStatus.INFEASIBLE,
              3: LpStatus.UNBOUNDED}.get(res.status, LpStatus.NUMERICAL)
    if status is not LpStatus.OPTIMAL:
        return _empty_solution(problem, status, message=res.message)
    m_eq, m_le = problem.b_eq.size, problem.b_le.size
    return LpSolution(
        status=status,
        x=res.x,
        objective=float(res.fun),
        y_eq=-res.eqlin.marginals if m_eq else np.zeros(0),
        y_le=-res.ineqlin.marginals if m_le else np.zeros(0),
        eta_lower=np.asarray(res.lower.marginals, dtype=float),
        eta_upper=-np.asarray(res.upper.marginals, dtype=float),
        iterations=int(res.nit),
        message=res.message,
    )


_default_engine: LpEngine = simplex_engine


def set_default_engine(engine: Optional[LpEngine]) -> LpEngine:
    """Swap the engine used by :func:`solve_lp`; returns the previous one."""
    global _default_engine
    previous = _default_engine
    _default_engine = engine or simplex_engine
    return previous


def solve_lp(
    problem: LpProblem,
    tolerances: Optional[LpTolerances] = None,
    engine: Optional[LpEngine] = None,
) -> LpSolution:
    return (engine or _default_engine)(problem, tolerances or LpTolerances())


@dataclass
class KktReport:
    primal_residual: float
    dual_residual: float
    complementarity: float
    gap: float
    relative_gap: float
    sign_violation: float = 0.0
    details: dict = field(default_factory=dict)

    def ok(self, tol: LpTolerances = LpTolerances()) -> bool:
        return (
            self.primal_residual <= tol.feas
            and self.complementarity <= tol.cs
            and self.relative_gap <= tol.gap
            and self.sign_violation <= tol.cs
        )


def _dot_finite(bound, dual):
    mask = dual != 0.0
    return float(bound[mask] @ dual[mask]) if mask.any() else 0.0


def kkt_report(problem: LpProblem, sol: LpSolution) -> KktReport:
    """Residuals of the optimality conditions, all in absolute units."""
    x = sol.x
    r_eq = problem.A_eq @ x - problem.b_eq
    r_le = problem.A_le @ x - problem.b_le
    primal = max(
        np.abs(r_eq).max(initial=0.0),
        np.maximum(r_le, 0.0).max(initial=0.0),
        np.maximum(problem.lower - x, 0.0).max(initial=0.0),
        np.maximum(x - problem.upper, 0.0).max(initial=0.0),
    )
    grad = (
        problem.c
        + problem.A_eq.T @ sol.y_eq
        + problem.A_le.T @ sol.y_le
        - sol.eta_lower
        + sol.eta_upper
    )
    with np.errstate(invalid="ignore"):
        cs_lo = np.where(sol.eta_lower != 0.0, sol.eta_lower * (x - problem.lower), 0.0)
        cs_up = np.where(sol.eta_upper != 0.0, sol.eta_upper * (problem.upper - x), 0.0)
    cs = max(
        np.abs(sol.y_le * r_le).max(initial=0.0),
        np.abs(cs_lo).max(initial=0.0),
        np.abs(cs_up).max(initial=0.0),
    )
    dual_obj = (
        -problem.b_eq @ sol.y_eq
        - problem.b_le @ sol.y_le
        + _dot_finite(problem.lower, sol.eta_lower)
        - _dot_finite(problem.upper, sol.eta_upper)
    )
    primal_obj = float(problem.c @ x)
    gap = abs(primal_obj - dual_obj)
    signs = max(
        np.maximum(-sol.y_le, 0.0).max(initial=0.0),
        np.maximum(-sol.eta_lower, 0.0).max(initial=0.0),
        np.maximum(-sol.eta_upper, 0.0).max(initial=0.0),
    )
    return KktReport(
        primal_residual=float(primal),
        dual_residual=float(np.abs(grad).max(initial=0.0)),
        complementarity=float(cs),
        gap=float(gap),
        relative_gap=float(gap / (1.0 + abs(primal_obj))),
        sign_violation=float(signs),
    )


class OracleSizeError(ValueError):
    pass


def vertex_enumeration_oracle(
    problem: LpProblem,
    max_vars: int = 12,
    max_rows: int = 20,
    tol: float = 1e-9,
) -> LpSolution:
    """Brute-force optimum over all basic feasible points.

    Only primal values and the status are meaningful; duals are left as NaN.
    The feasible region must be pointed (it has at least one vertex when
    nonempty), which holds whenever every variable has a finite bound.
    """
    n = problem.n
    if n > max_vars or problem.b_eq.size + problem.b_le.size > max_rows:
        raise OracleSizeError(
            f"oracle limited to {max_vars} variables and {max_rows} constraints"
        )
    best = _best_vertex(problem, problem.c, tol)
    if best is None:
        return _empty_solution(problem, LpStatus.INFEASIBLE, message="no vertex")

    # unbounded iff some recession direction within the unit box improves c
    cone = LpProblem(
        c=problem.c,
        lower=np.where(np.isfinite(problem.lower), 0.0, -1.0),
        upper=np.where(np.isfinite(problem.upper), 0.0, 1.0),
        A_eq=problem.A_eq,
        b_eq=np.zeros(problem.b_eq.size),
        A_le=problem.A_le,
        b_le=np.zeros(problem.b_le.size),
    )
    ray = _best_vertex(cone, problem.c, tol)
    if ray is not None and problem.c @ ray < -tol:
        return _empty_solution(problem, LpStatus.UNBOUNDED, message="improving ray")

    sol = _empty_solution(problem, LpStatus.OPTIMAL)
    sol.x = best
    sol.objective = float(problem.c @ best)
    return sol


def _best_vertex(problem: LpProblem, c: np.ndarray, tol: float):
    n = problem.n
    G = [problem.A_le]
    h = [problem.b_le]
    for j in range(n):
        e = np.zeros(n)
        if np.isfinite(problem.lower[j]):
            e[j] = -1.0
            G.append(e[None, :].copy())
            h.append(np.array([-problem.lower[j]]))
        if np.isfinite(problem.upper[j]):
            e[:] = 0.0
            e[j] = 1.0
            G.append(e[None, :].copy())
            h.append(np.array([problem.upper[j]]))
    G = np.vstack(G)
    h = np.concatenate(h)
    A_eq, b_eq = problem.A_eq, problem.b_eq

    best_x, best_val = None, np.inf
    scale = 1.0 + np.abs(np.concatenate([h, b_eq])).max(initial=0.0)
    for k in range(0, n + 1):
        for active in itertools.combinations(range(h.size), k):
            M = np.vstack([A_eq, G[list(active)]])
            if M.shape[0] < n or np.linalg.matrix_rank(M) < n:
                continue
            rhs = np.concatenate([b_eq, h[list(active)]])
            x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            if np.abs(M @ x - rhs).max(initial=0.0) > tol * scale * 10:
                continue  # inconsistent equalities
            if np.any(G @ x - h > tol * scale):
                continue
            val = c @ x
            if val < best_val:
                best_x, best_val = x, val
    return best_x
