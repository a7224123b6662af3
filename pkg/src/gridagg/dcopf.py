"""Single-period DC-OPF in PTDF form, with LMP and NCP extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid
from .lp import LpProblem, LpSolution, LpStatus, LpTolerances, solve_lp
from .ptdf import PtdfMatrix

CONGESTION_RTOL = 1e-6
MU_ZERO = 1e-8


class DcOpfError(RuntimeError):
    def __init__(self, status: LpStatus, message: str = ""):
        super().__init__(f"DC-OPF {status.value}" + (f": {message}" if message else ""))
        self.status = status


@dataclass(eq=False)
class DcOpfSolution:
    """Optimal dispatch with duals.

    ``mu`` is the congestion price per line, oriented so that
    ``LMP = lambda_slack + PTDF.T @ mu``. It equals ``phi_lower - phi_upper``
    for the raw multipliers of the lower/upper flow-limit rows.
    """

    z: float
    p: np.ndarray
    f: np.ndarray
    lambda_slack: float
    mu: np.ndarray
    eta_lower: np.ndarray
    eta_upper: np.ndarray
    congested: np.ndarray
    at_limit: np.ndarray
    phi_upper: np.ndarray
    phi_lower: np.ndarray
    problem: Optional[LpProblem] = None
    raw: Optional[LpSolution] = None

    def to_json(self) -> dict:
        return {
            "z": float(self.z),
            "p": [float(v) for v in self.p],
            "f": [float(v) for v in self.f],
            "lambda_slack": float(self.lambda_slack),
            "mu": [float(v) for v in self.mu],
            "congested": [bool(v) for v in self.congested],
        }


def build_problem(
    ptdf_values: np.ndarray,
    gen_node: np.ndarray,
    demand: np.ndarray,
    limits: np.ndarray,
    cost: np.ndarray,
    p_max: np.ndarray,
) -> LpProblem:
    """LP for min C p s.t. 0<=p<=Pmax, sum p = sum D, -T <= PTDF (Gamma p - D) <= T.

    Rows: one balance equality, then L upper-limit rows, then L lower-limit rows.
    """
    H = ptdf_values[:, gen_node]
    base = ptdf_values @ demand
    return LpProblem(
        c=cost,
        lower=np.zeros(cost.size),
        upper=p_max,
        A_eq=np.ones((1, cost.size)),
        b_eq=np.array([demand.sum()]),
        A_le=np.vstack([H, -H]),
        b_le=np.concatenate([limits + base, limits - base]),
    )


def solve_problem(
    problem: LpProblem,
    ptdf_values: np.ndarray,
    gen_node: np.ndarray,
    demand: np.ndarray,
    limits: np.ndarray,
    tolerances: Optional[LpTolerances] = None,
    lazy: bool = True,
) -> DcOpfSolution:
    """Solve a problem from :func:`build_problem` and unpack flows and duals.

    With ``lazy`` the flow-limit rows are generated on demand: only lines that
    were violated in an earlier round enter the LP. Rows left out are slack at
    the final point, so their zero duals are exact for the full problem.
    """
    tol = tolerances or LpTolerances()
    L = limits.size
    if lazy and L:
        sol = _solve_lazy(problem, ptdf_values, gen_node, demand, limits, tol)
    else:
        sol = solve_lp(problem, tol)
    if sol.status is not LpStatus.OPTIMAL:
        raise DcOpfError(sol.status, sol.message)
    p = sol.x
    inj = -demand.copy()
    np.add.at(inj, gen_node, p)
    f = ptdf_values @ inj
    phi_upper = sol.y_le[:L]
    phi_lower = sol.y_le[L:]
    mu = phi_lower - phi_upper
    at_limit = np.abs(f) >= limits * (1.0 - CONGESTION_RTOL)
    mu = np.where(at_limit & (np.abs(mu) >= MU_ZERO), mu, 0.0)
    return DcOpfSolution(
        z=float(sol.objective),
        p=p,
        f=f,
        lambda_slack=float(-sol.y_eq[0]),
        mu=mu,
        eta_lower=sol.eta_lower,
        eta_upper=sol.eta_upper,
        congested=mu != 0.0,
        at_limit=at_limit,
        phi_upper=phi_upper,
        phi_lower=phi_lower,
        problem=problem,
        raw=sol,
    )


def _solve_lazy(problem, ptdf_values, gen_node, demand, limits, tol) -> LpSolution:
    L = limits.size
    active = np.zeros(L, dtype=bool)
    while True:
        rows = np.concatenate([np.flatnonzero(active), L + np.flatnonzero(active)])
        sub = LpProblem(
            c=problem.c, lower=problem.lower, upper=problem.upper,
            A_eq=problem.A_eq, b_eq=problem.b_eq,
            A_le=problem.A_le[rows], b_le=problem.b_le[rows],
        )
        sol = solve_lp(sub, tol)
        if sol.status is not LpStatus.OPTIMAL:
            if sol.status is LpStatus.INFEASIBLE or active.all():
                return sol
            # unbounded or numerical trouble on a relaxation: fall back to all rows
            return solve_lp(problem, tol)
        inj = -demand.copy()
        np.add.at(inj, gen_node, sol.x)
        f = ptdf_values @ inj
        violated = (np.abs(f) > limits + tol.feas) & ~active
        if not violated.any():
            y_le = np.zeros(2 * L)
            y_le[rows] = sol.y_le
            sol.y_le = y_le
            return sol
        active |= violated


def solve_dcopf(
    grid: Grid,
    ptdf: PtdfMatrix,
    tolerances: Optional[LpTolerances] = None,
    lazy: bool = True,
) -> DcOpfSolution:
    """Solve the full-grid DC-OPF.

    Raises :class:`DcOpfError` when the LP is infeasible (usually missing
    backup generation) or unbounded.
    """
    if np.any(grid.gen_cost < 0):
        raise ValueError("negative generator costs are not supported")
    args = (ptdf.values, grid.gen_bus, grid.demand, grid.limits)
    problem = build_problem(*args, grid.gen_cost, grid.gen_pmax)
    return solve_problem(problem, *args, tolerances, lazy=lazy)


def lmp(solution: DcOpfSolution, ptdf: PtdfMatrix) -> np.ndarray:
    """LMP = lambda_slack + PTDF.T mu."""
    return solution.lambda_slack + ptdf.values.T @ solution.mu


def ncp(solution: DcOpfSolution, ptdf: PtdfMatrix) -> np.ndarray:
    """Network congestion prices, N x L: PTDF.T diag(mu)."""
    return ptdf.values.T * solution.mu[None, :]


def stationarity_residual(
    grid: Grid, solution: DcOpfSolution, ptdf: PtdfMatrix
) -> np.ndarray:
    """Per-generator C_g - LMP_bus(g) - eta_lower_g + eta_upper_g (zero at optimum)."""
    prices = lmp(solution, ptdf)
    return grid.gen_cost - prices[grid.gen_bus] - solution.eta_lower + solution.eta_upper
