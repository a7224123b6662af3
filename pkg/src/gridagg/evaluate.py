"""Full model, aggregation and evaluation sweep: ROVE, MRLLV and partitioning time."""

from __future__ import annotations

import enum
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .aggregate import build_aggregated, solve_aggregated
from .dcopf import DcOpfError, DcOpfSolution, lmp, ncp, solve_dcopf
from .grid import Grid
from .lp import LpStatus, LpTolerances
from .partition import (
    ALL_METHODS,
    AnacHistory,
    FeatureMatrix,
    Method,
    Metric,
    PartitionResult,
    anac_history,
    partition,
)
from .ptdf import PtdfMatrix, build_ptdf, flows


class RecordStatus(str, enum.Enum):
    OK = "ok"
    AGG_INFEASIBLE = "agg_infeasible"


@dataclass
class EvaluationRecord:
    method: str
    n_clusters: int
    z_full: float
    z_agg: float
    rove: float
    mrllv: float
    gpt_seconds: float
    status: RecordStatus = RecordStatus.OK
    congested_lines: list[int] = field(default_factory=list)
    violated_lines: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        def num(v):
            return None if v is None or math.isnan(v) else float(v)

        return {
            "method": self.method,
            "n_clusters": self.n_clusters,
            "status": self.status.value,
            "z_full": num(self.z_full),
            "z_agg": num(self.z_agg),
            "rove": num(self.rove),
            "mrllv": num(self.mrllv),
            "gpt_seconds": self.gpt_seconds,
            "congested_lines": self.congested_lines,
            "violated_lines": self.violated_lines,
        }


def map_flows(full_ptdf: PtdfMatrix, grid: Grid, agg_dispatch: np.ndarray) -> np.ndarray:
    """Flows the aggregated dispatch induces on the full grid: PTDF (Gamma p~ - D)."""
    return flows(full_ptdf, grid, agg_dispatch)


def rove(z_full: float, z_agg: float) -> float:
    """Relative objective-value error (z_agg - z_full) / z_full."""
    if not z_full > 0:
        raise ValueError("z_full must be positive")
    return (z_agg - z_full) / z_full


def mrllv(flow: np.ndarray, limits: np.ndarray) -> float:
    """max_l max((|f_l| - T_l) / T_l, 0)."""
    flow = np.asarray(flow, dtype=float)
    limits = np.asarray(limits, dtype=float)
    if np.any(limits <= 0):
        raise ValueError("limits must be positive")
    if flow.size == 0:
        return 0.0
    return float(max(((np.abs(flow) - limits) / limits).max(), 0.0))


@dataclass
class FullModelRun:
    grid: Grid
    ptdf: PtdfMatrix
    solution: DcOpfSolution
    lmps: np.ndarray
    ncps: np.ndarray

    @classmethod
    def solve(cls, grid: Grid, tolerances: Optional[LpTolerances] = None) -> "FullModelRun":
        ptdf = build_ptdf(grid)
        sol = solve_dcopf(grid, ptdf, tolerances)
        return cls(grid, ptdf, sol, lmp(sol, ptdf), ncp(sol, ptdf))

    def features(self, metric: Metric) -> FeatureMatrix:
        if metric is Metric.LMP:
            return FeatureMatrix(self.lmps, Metric.LMP)
        return FeatureMatrix(self.ncps, Metric.NCP)


def _median_time(fn: Callable[[], object], repeats: int):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


@dataclass
class SweepResult:
    full: FullModelRun
    records: list[EvaluationRecord]

    def to_json(self) -> dict:
        sol = self.full.solution
        return {
            "z_full": sol.z,
            "fm_congested_lines": [int(l) for l in np.flatnonzero(sol.congested)],
            "records": [r.to_json() for r in self.records],
        }


def evaluate_partition(
    full: FullModelRun,
    part: PartitionResult,
    gpt: float,
    tolerances: Optional[LpTolerances] = None,
) -> EvaluationRecord:
    grid = full.grid
    z = full.solution.z
    am = build_aggregated(grid, full.ptdf, part)
    try:
        agg = solve_aggregated(am, grid, tolerances)
    except DcOpfError as exc:
        if exc.status is not LpStatus.INFEASIBLE:
            raise
        nan = float("nan")
        return EvaluationRecord(part.method, part.n_clusters, z, nan, nan, nan, gpt,
                                RecordStatus.AGG_INFEASIBLE)
    f_hat = map_flows(full.ptdf, grid, agg.p)
    retained = part.line_map
    congested = sorted(
        int(l) for row in retained[agg.congested] for l in np.flatnonzero(row)
    )
    tol = (tolerances or LpTolerances()).feas
    violated = [int(l) for l in np.flatnonzero(np.abs(f_hat) > grid.limits + tol)]
    return EvaluationRecord(
        method=part.method,
        n_clusters=part.n_clusters,
        z_full=z,
        z_agg=agg.z,
        rove=rove(z, agg.z),
        mrllv=mrllv(f_hat, grid.limits),
        gpt_seconds=gpt,
        congested_lines=congested,
        violated_lines=violated,
    )


def sweep(
    grid: Grid,
    methods: Iterable[Method | str] = ALL_METHODS,
    n_range: Optional[Sequence[int]] = None,
    seed: int = 1,
    tolerances: Optional[LpTolerances] = None,
    repeats: int = 3,
    jobs: int = 1,
    merge_parallel: bool = False,
    full: Optional[FullModelRun] = None,
) -> SweepResult:
    """Evaluate every (method, N~) cell after a single full-model solve.

    Records are ordered method-major with N~ descending. Partitioning is timed
    serially (median of ``repeats``); for ANAC the merge history down to the
    smallest requested N~ is built once and its cost charged to every N~.
    """
    methods = [Method(m) for m in methods]
    if n_range is None:
        n_range = range(grid.n_buses, 0, -1)
    counts = sorted({int(k) for k in n_range}, reverse=True)
    if not counts or counts[-1] < 1 or counts[0] > grid.n_buses:
        raise ValueError(f"cluster counts must lie in [1, {grid.n_buses}]")
    if full is None:
        full = FullModelRun.solve(grid, tolerances)

    cells: list[tuple[PartitionResult, float]] = []
    for method in methods:
        feats = full.features(method.metric)
        history: Optional[AnacHistory] = None
        anac_gpt = 0.0
        if method.algorithm == "anac":
            history, anac_gpt = _median_time(
                lambda: anac_history(grid, feats, stop=counts[-1]), repeats
            )
        for k in counts:
            def run(k=k, method=method, history=history):
                return partition(
                    grid, method, k, full.lmps, full.ncps, seed=seed,
                    history=history, merge_parallel=merge_parallel,
                )
            if history is not None:
                cells.append((run(), anac_gpt))
            else:
                cells.append(_median_time(run, repeats))

    def work(cell):
        return evaluate_partition(full, cell[0], cell[1], tolerances)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(work, cells))
    else:
        records = [work(c) for c in cells]
    return SweepResult(full, records)


def summarize(records: Sequence[EvaluationRecord]) -> dict[str, dict[str, float]]:
    """Per method: mean |ROVE|, mean MRLLV and mean GPT over successful records."""
    out: dict[str, dict[str, float]] = {}
    for method in dict.fromkeys(r.method for r in records):
        rows = [r for r in records if r.method == method and r.status is RecordStatus.OK]
        out[method] = {
            "mean_abs_rove": float(np.mean([abs(r.rove) for r in rows])) if rows else math.nan,
            "mean_mrllv": float(np.mean([r.mrllv for r in rows])) if rows else math.nan,
            "mean_gpt": float(np.mean([r.gpt_seconds for r in records if r.method == method])),
            "n_records": len(rows),
        }
    return out
