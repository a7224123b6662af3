"""Aggregated grid models built from a partition via PTDF reduction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dcopf import DcOpfSolution, build_problem, solve_problem
from .grid import Grid
from .lp import LpTolerances
from .partition import PartitionResult
from .ptdf import PtdfMatrix


@dataclass(eq=False)
class AggregatedModel:
    """Reduced network seen by the aggregated DC-OPF.

    Attributes:
        reduced_ptdf: (L~, N~) sensitivities of retained lines to cluster injections.
        demand: total demand per cluster.
        generator_cluster: cluster index of every original generator.
        line_limits: limits of the retained lines.
        provenance: partition the model was built from.
    """

    reduced_ptdf: np.ndarray
    demand: np.ndarray
    generator_cluster: np.ndarray
    line_limits: np.ndarray
    provenance: PartitionResult

    @property
    def n_clusters(self) -> int:
        return self.demand.size


def reduce_ptdf(ptdf_values: np.ndarray, node_map: np.ndarray, line_map: np.ndarray) -> np.ndarray:
    """PTDF^r = M^l PTDF (M^nc)^T (M^nc (M^nc)^T)^-1, the inverse being 1/cluster size."""
    sizes = node_map.sum(axis=1)
    return (line_map @ ptdf_values @ node_map.T) / sizes[None, :]


def build_aggregated(grid: Grid, ptdf: PtdfMatrix, partition: PartitionResult) -> AggregatedModel:
    if partition.labels.size != grid.n_buses:
        raise ValueError("partition does not match the grid")
    M_nc = partition.node_map
    limits = partition.line_limits
    if limits is None:
        limits = partition.line_map @ grid.limits
    return AggregatedModel(
        reduced_ptdf=reduce_ptdf(ptdf.values, M_nc, partition.line_map),
        demand=M_nc @ grid.demand,
        generator_cluster=partition.labels[grid.gen_bus],
        line_limits=np.asarray(limits, dtype=float),
        provenance=partition,
    )


def solve_aggregated(
    am: AggregatedModel,
    grid: Grid,
    tolerances: Optional[LpTolerances] = None,
    lazy: bool = True,
) -> DcOpfSolution:
    """Same DC-OPF LP on the reduced network; generators keep cost and capacity."""
    args = (am.reduced_ptdf, am.generator_cluster, am.demand, am.line_limits)
    problem = build_problem(*args, grid.gen_cost, grid.gen_pmax)
    return solve_problem(problem, *args, tolerances, lazy=lazy)


def aggregated_to_json(am: AggregatedModel, grid: Grid) -> dict:
    part = am.provenance
    retained = part.line_map
    return {
        "name": grid.name,
        "n_clusters": am.n_clusters,
        "buses": [
            {"id": k, "demand": float(d), "members": members}
            for k, (d, members) in enumerate(zip(am.demand, part.clusters))
        ],
        "lines": [
            {
                "id": i,
                "original_lines": [int(l) for l in np.flatnonzero(row)],
                "limit": float(t),
            }
            for i, (row, t) in enumerate(zip(retained, am.line_limits))
        ],
        "generators": [
            {
                "id": g.id,
                "bus": int(am.generator_cluster[g.id]),
                "cost": g.cost,
                "p_max": g.p_max,
                "kind": g.kind.value,
            }
            for g in grid.generators
        ],
        "reduced_ptdf": [[float(v) for v in row] for row in am.reduced_ptdf],
        "partition": part.to_json(),
    }
