"""Rebuild the shipped JSON fixtures from the vendored MATPOWER cases.

Usage: python3 scripts/build_cases.py [--check]

With --check the fixtures are rebuilt in memory and compared to the files on disk.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from gridagg.caseio import dumps_json, grid_to_json, read_matpower, to_grid
from gridagg.dcopf import solve_dcopf
from gridagg.grid import Bus, Generator, GenKind, Grid, Line, TransformSpec, transform
from gridagg.ptdf import build_ptdf, flows

DATA = Path(__file__).resolve().parents[1] / "src" / "gridagg" / "data"

# 24-bus snapshot: thermal units (bus, p_max MW, cost $/MWh) of the updated RTS data
RTS_UNITS = [
    (1, 152, 13.32), (2, 152, 13.32), (7, 350, 20.70), (13, 591, 20.93),
    (15, 60, 26.11), (15, 155, 10.52), (16, 155, 10.52), (18, 400, 6.02),
    (21, 400, 5.47), (22, 300, 0.00), (23, 310, 10.52), (23, 350, 10.89),
]
RTS_WIND_BUSES = (3, 5, 7, 16, 21, 23)
RTS_WIND_MW = 200.0
RTS_WIND_AVAILABILITY = 1.0
RTS_SYSTEM_LOAD = 2500.0  # single-period snapshot, see decisions ledger
RTS_TRANSFORM = TransformSpec(demand_scale=2.0, wind_scale=2.0,
                              cost_perturb_magnitude=0.01, backup_cost="auto")
RTS_SEED = 7

# 300-bus scenario
IEEE300_LIMIT_SCALE = 3.5
IEEE300_LIMIT_FLOOR = 50.0
IEEE300_DEMAND_SCALE = 1.2
IEEE300_N_WIND = 23
IEEE300_WIND_FRACTION = 1.0
IEEE300_COST_PERTURB = 1.0
IEEE300_SEED = 1


def merge_parallel_lines(lines) -> tuple[Line, ...]:
    """Combine circuits with identical endpoints: susceptances and limits add."""
    merged: dict[tuple[int, int], list[float]] = {}
    for ln in lines:
        key = (ln.from_bus, ln.to_bus)
        if key in merged:
            merged[key][0] += ln.susceptance
            merged[key][1] += ln.limit
        else:
            merged[key] = [ln.susceptance, ln.limit]
    return tuple(Line(i, a, b, s, t) for i, ((a, b), (s, t)) in enumerate(merged.items()))


def build_rts24_raw() -> Grid:
    base = to_grid(read_matpower(DATA / "case24_ieee_rts.m"), linearize_costs=True)
    demand = base.demand * (RTS_SYSTEM_LOAD / base.demand.sum())
    gens = [Generator(i, bus - 1, cost, float(pmax)) for i, (bus, pmax, cost) in enumerate(RTS_UNITS)]
    for bus in RTS_WIND_BUSES:
        gens.append(Generator(len(gens), bus - 1, 0.0, RTS_WIND_MW * RTS_WIND_AVAILABILITY,
                              GenKind.WIND))
    buses = tuple(Bus(i, float(d)) for i, d in enumerate(demand))
    return Grid(buses, merge_parallel_lines(base.lines), tuple(gens), base.slack_bus, "rts24")


def build_rts24(raw: Grid) -> Grid:
    return transform(raw, RTS_TRANSFORM, seed=RTS_SEED)


def build_ieee300_raw() -> Grid:
    """case300 with DC-ready data and synthesized line limits.

    Negative reactances are taken by magnitude, negative loads are clipped to
    zero and costs are linearized at full output. MATPOWER's case300 has no
    binding ratings, so limits come from the flows of a proportional dispatch.
    """
    doc = read_matpower(DATA / "case300.m")
    grid = to_grid(doc, linearize_costs=True, abs_reactance=True)
    in_service = doc.gen[doc.gen[:, 7] > 0]
    costs = doc.gencost[: doc.gen.shape[0]][doc.gen[:, 7] > 0]
    gens = []
    for g, row, crow in zip(grid.generators, in_service, costs):
        ncoef = int(crow[3])
        c2, c1 = (crow[4], crow[5]) if ncoef == 3 else (0.0, crow[4 + ncoef - 2])
        gens.append(replace(g, cost=float(c1 + c2 * row[8])))
    buses = tuple(replace(b, demand=max(b.demand, 0.0)) for b in grid.buses)
    grid = Grid(buses, grid.lines, tuple(gens), grid.slack_bus, "ieee300")

    ptdf = build_ptdf(grid)
    share = grid.gen_pmax * (grid.demand.sum() / grid.gen_pmax.sum())
    base = np.abs(flows(ptdf, grid, share))
    limits = np.maximum(np.round(IEEE300_LIMIT_SCALE * base, 1), IEEE300_LIMIT_FLOOR)
    lines = tuple(replace(ln, limit=float(t)) for ln, t in zip(grid.lines, limits))
    return Grid(grid.buses, lines, grid.generators, grid.slack_bus, "ieee300")


def ieee300_wind_additions(raw: Grid) -> tuple[tuple[int, float], ...]:
    """Wind units at evenly spread buses, sized by the mean limit of adjacent lines."""
    rng = np.random.default_rng(IEEE300_SEED)
    buses = np.sort(rng.choice(raw.n_buses, IEEE300_N_WIND, replace=False))
    ends = raw.line_ends
    out = []
    for b in buses:
        adjacent = raw.limits[(ends[:, 0] == b) | (ends[:, 1] == b)]
        out.append((int(b), float(np.round(IEEE300_WIND_FRACTION * adjacent.mean(), 1))))
    return tuple(out)


def build_ieee300_mod(raw: Grid) -> Grid:
    spec = TransformSpec(
        demand_scale=IEEE300_DEMAND_SCALE,
        cost_perturb_magnitude=IEEE300_COST_PERTURB,
        backup_cost="auto",
        wind_additions=ieee300_wind_additions(raw),
    )
    return transform(raw, spec, seed=IEEE300_SEED)


def build_all() -> dict[str, Grid]:
    rts_raw = build_rts24_raw()
    ieee_raw = build_ieee300_raw()
    return {
        "rts24_raw.json": rts_raw,
        "rts24.json": build_rts24(rts_raw),
        "ieee300_raw.json": ieee_raw,
        "ieee300_mod.json": build_ieee300_mod(ieee_raw),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--check", action="store_true", help="compare with files on disk")
    parser.add_argument("--report", action="store_true", help="solve and print congestion")
    args = parser.parse_args(argv)
    stale = []
    for name, grid in build_all().items():
        text = dumps_json(grid_to_json(grid))
        path = DATA / name
        if args.check:
            if not path.exists() or path.read_text(encoding="utf-8") != text:
                stale.append(name)
        else:
            path.write_text(text, encoding="utf-8")
        if args.report and not name.endswith("_raw.json"):
            sol = solve_dcopf(grid, build_ptdf(grid))
            print(f"{name}: N={grid.n_buses} L={grid.n_lines} G={grid.n_generators} "
                  f"z={sol.z:.4f} congested={int(sol.congested.sum())}")
    if stale:
        print("stale fixtures: " + ", ".join(stale), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
