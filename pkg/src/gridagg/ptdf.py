"""Power transfer distribution factors and an angle-based flow oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .grid import Grid, incidence_matrix

SNAP = 1e-12


class SingularNetworkError(ValueError):
    """Reduced susceptance matrix is singular: the grid is disconnected."""


@dataclass(frozen=True, eq=False)
class PtdfMatrix:
    values: np.ndarray  # (L, N), zero column at the slack bus
    slack_bus: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _reduced_susceptance(grid: Grid):
    K_sba = incidence_matrix(grid, slack_adjusted=True)
    b = grid.susceptance
    B_red = K_sba.T @ (b[:, None] * K_sba)
    try:
        factor = linalg.cho_factor(B_red, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularNetworkError("reduced susceptance matrix is not positive definite") from exc
    return K_sba, b, factor


def build_ptdf(grid: Grid) -> PtdfMatrix:
    """PTDF = diag(b) K_sba (K_sba^T diag(b) K_sba)^-1 with the slack column re-inserted."""
    N, L = grid.n_buses, grid.n_lines
    if N == 1:
        return PtdfMatrix(np.zeros((L, 1)), grid.slack_bus)
    K_sba, b, factor = _reduced_susceptance(grid)
    # inverse is symmetric, so solve against (diag(b) K_sba)^T and transpose back
    ptdf_sba = linalg.cho_solve(factor, (b[:, None] * K_sba).T).T
    values = np.insert(ptdf_sba, grid.slack_bus, 0.0, axis=1)
    values[np.abs(values) < SNAP] = 0.0
    return PtdfMatrix(values, grid.slack_bus)


def net_injection(grid: Grid, dispatch: np.ndarray) -> np.ndarray:
    """Gamma p - D."""
    inj = -grid.demand.copy()
    np.add.at(inj, grid.gen_bus, np.asarray(dispatch, dtype=float))
    return inj


def flows(ptdf: PtdfMatrix, grid: Grid, dispatch: np.ndarray) -> np.ndarray:
    """Line flows PTDF (Gamma p - D); any imbalance is absorbed at the slack."""
    dispatch = np.asarray(dispatch, dtype=float)
    if dispatch.shape != (grid.n_generators,):
        raise ValueError(f"dispatch must have length {grid.n_generators}")
    return ptdf.values @ net_injection(grid, dispatch)


def angle_flow_oracle(grid: Grid, injections: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Flows from the bus-angle formulation: B' theta = P, theta_slack = 0, f = diag(b) K theta."""
    injections = np.asarray(injections, dtype=float)
    scale = max(1.0, np.abs(injections).max(initial=0.0))
    if abs(injections.sum()) > tol * scale:
        raise ValueError("injections must sum to zero")
    K = incidence_matrix(grid)
    b = grid.susceptance
    keep = np.arange(grid.n_buses) != grid.slack_bus
    B = K.T @ (b[:, None] * K)
    theta = np.zeros(grid.n_buses)
    if keep.any():
        B_red = B[np.ix_(keep, keep)]
        try:
            theta[keep] = np.linalg.solve(B_red, injections[keep])
        except np.linalg.LinAlgError as exc:
            raise SingularNetworkError("bus susceptance matrix is singular") from exc
    return b * (K @ theta)
