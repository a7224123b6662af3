"""Command-line interface: ``gridagg {solve,transform,partition,aggregate,evaluate}``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .aggregate import aggregated_to_json, build_aggregated
from .caseio import (
    CaseDataError,
    CaseSyntaxError,
    SchemaError,
    dumps_json,
    grid_to_json,
    load_case,
    write_report_csv,
)
from .dcopf import DcOpfError, lmp, solve_dcopf
from .evaluate import FullModelRun, summarize, sweep
from .grid import Grid, TransformSpec, transform, validate
from .lp import LpStatus, LpTolerances
from .partition import ALL_METHODS, Method, PartitionResult, canonical_labels, derive_line_map, partition
from .ptdf import SingularNetworkError, build_ptdf

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fixture_path(name: str) -> Optional[Path]:
    path = resources.files("gridagg") / "data" / name
    return Path(str(path)) if path.is_file() else None


def _load(args) -> Grid:
    path = Path(args.case)
    if not path.exists():
        shipped = _fixture_path(args.case) if path.name == args.case else None
        if shipped is None:
            raise InputError(f"case file not found: {args.case}")
        path = shipped
    fmt = "auto" if args.format is None else args.format
    kwargs = {}
    if fmt == "matpower" or (fmt == "auto" and path.suffix == ".m"):
        kwargs = {"linearize_costs": args.linearize_costs, "abs_reactance": args.abs_reactance}
    try:
        grid = load_case(path, fmt, **kwargs)
    except SchemaError as exc:
        raise InputError(f"{path}: {exc} (at {exc.pointer})") from exc
    except (CaseSyntaxError, CaseDataError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    report = validate(grid)
    if not report.ok:
        raise InputError(f"{path}: invalid grid: " + "; ".join(report.violations[:5]))
    return grid


def _tolerances(args) -> LpTolerances:
    if args.tol_feas is None:
        return LpTolerances()
    if not args.tol_feas > 0:
        raise UsageError("--tol-feas must be positive")
    return LpTolerances(feas=args.tol_feas)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _methods(spec: str) -> list[Method]:
    if spec == "all":
        return list(ALL_METHODS)
    try:
        return [Method(m.strip()) for m in spec.split(",") if m.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _check_clusters(k: int, grid: Grid, flag: str) -> None:
    if not 1 <= k <= grid.n_buses:
        raise UsageError(f"{flag} must lie in [1, {grid.n_buses}], got {k}")


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    grid = _load(args)
    tol = _tolerances(args)
    ptdf = build_ptdf(grid)
    sol = solve_dcopf(grid, ptdf, tol)
    prices = lmp(sol, ptdf)
    congested = np.flatnonzero(sol.congested)
    print(f"case: {grid.name or args.case}  buses={grid.n_buses} lines={grid.n_lines} "
          f"generators={grid.n_generators}")
    print(f"objective z* = {sol.z:.6f}")
    print(f"congested lines ({congested.size}): " + " ".join(str(l) for l in congested))
    print(f"LMP range: {prices.min():.6f} .. {prices.max():.6f}")
    if args.json_out:
        _emit(dumps_json(sol.to_json()), args.json_out)
    return EXIT_OK


def cmd_transform(args) -> int:
    grid = _load(args)
    backup = args.backup_cost
    if backup is not None and backup != "auto":
        try:
            backup = float(backup)
        except ValueError as exc:
            raise UsageError("--backup-cost must be a number or 'auto'") from exc
    additions = []
    for item in args.wind_add or []:
        try:
            bus, cap = item.split(":")
            additions.append((int(bus), float(cap)))
        except ValueError as exc:
            raise UsageError(f"--wind-add expects BUS:CAPACITY, got {item!r}") from exc
    spec = TransformSpec(
        demand_scale=args.demand_scale,
        wind_scale=args.wind_scale,
        cost_perturb_magnitude=args.perturb_costs,
        backup_cost=backup,
        wind_additions=tuple(additions),
    )
    try:
        out = transform(grid, spec, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(dumps_json(grid_to_json(out)), args.out)
    return EXIT_OK


def cmd_partition(args) -> int:
    grid = _load(args)
    _check_clusters(args.clusters, grid, "--clusters")
    method = _methods(args.method)
    if len(method) != 1:
        raise UsageError("--method takes exactly one method")
    full = FullModelRun.solve(grid, _tolerances(args))
    part = partition(grid, method[0], args.clusters, full.lmps, full.ncps, seed=args.seed,
                     merge_parallel=args.merge_parallel)
    _emit(dumps_json(part.to_json()), args.out)
    return EXIT_OK


def _read_partition(path: str, grid: Grid, merge_parallel: bool) -> PartitionResult:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        labels = np.full(grid.n_buses, -1)
        for k, members in enumerate(data["clusters"]):
            labels[np.asarray(members, dtype=int)] = k
    except (OSError, json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as exc:
        raise InputError(f"{path}: cannot read partition: {exc}") from exc
    if (labels < 0).any():
        raise InputError(f"{path}: partition does not cover every bus")
    labels = canonical_labels(labels)
    M_l, limits = derive_line_map(grid, labels, merge_parallel)
    return PartitionResult(labels, M_l, str(data.get("method", "")), int(data.get("seed", 0)),
                           limits)


def cmd_aggregate(args) -> int:
    grid = _load(args)
    part = _read_partition(args.partition, grid, args.merge_parallel)
    am = build_aggregated(grid, build_ptdf(grid), part)
    _emit(dumps_json(aggregated_to_json(am, grid)), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    grid = _load(args)
    lo = args.to
    hi = args.from_ if args.from_ is not None else grid.n_buses
    _check_clusters(hi, grid, "--from")
    _check_clusters(lo, grid, "--to")
    if lo > hi:
        raise UsageError("--to must not exceed --from")
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    result = sweep(
        grid,
        _methods(args.methods),
        range(hi, lo - 1, -1),
        seed=args.seed,
        tolerances=_tolerances(args),
        repeats=args.repeats,
        jobs=args.jobs,
        merge_parallel=args.merge_parallel,
    )
    if args.out is None or args.out == "-":
        write_report_csv(result.records, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_report_csv(result.records, fh)
        for method, s in summarize(result.records).items():
            print(f"{method:11s} mean|ROVE|={s['mean_abs_rove']:.4f} "
                  f"mean MRLLV={s['mean_mrllv']:.4f} mean GPT={s['mean_gpt']:.4f}s")
    if args.json_out:
        payload = result.to_json()
        payload["seed"] = args.seed
        _emit(dumps_json(payload), args.json_out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--case", required=True,
                        help="case file (.json or MATPOWER .m); bare names also match shipped fixtures")
    shared.add_argument("--format", choices=["matpower", "json"], default=None,
                        help="input format (default: by file suffix)")
    shared.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    shared.add_argument("--out", default=None, help="output file (default stdout)")
    shared.add_argument("--json-out", default=None, help="additional JSON output")
    shared.add_argument("--tol-feas", type=float, default=None, help="LP feasibility tolerance")
    shared.add_argument("--jobs", type=int, default=1, help="concurrent sweep cells (default 1)")
    shared.add_argument("--linearize-costs", action="store_true",
                        help="MATPOWER input: drop quadratic cost terms")
    shared.add_argument("--abs-reactance", action="store_true",
                        help="MATPOWER input: use |x| for negative branch reactances")
    shared.add_argument("--merge-parallel", action="store_true",
                        help="merge inter-cluster lines joining the same cluster pair")

    parser = _Parser(prog="gridagg", description="Congestion-sensitive grid aggregation for DC-OPF.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[shared], help="solve the full-grid DC-OPF")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("transform", parents=[shared], help="create a modified scenario")
    p.add_argument("--demand-scale", type=float, default=1.0)
    p.add_argument("--wind-scale", type=float, default=1.0)
    p.add_argument("--perturb-costs", type=float, default=0.0, metavar="MAGNITUDE",
                   help="add distinct offsets up to MAGNITUDE to thermal costs")
    p.add_argument("--backup-cost", default=None,
                   help="add a backup generator at every bus with this cost, or 'auto'")
    p.add_argument("--wind-add", action="append", metavar="BUS:CAPACITY",
                   help="add a zero-cost wind unit (repeatable)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("partition", parents=[shared], help="partition the grid")
    p.add_argument("--method", required=True, help="|".join(m.value for m in Method))
    p.add_argument("--clusters", type=int, required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("aggregate", parents=[shared], help="build the aggregated model")
    p.add_argument("--partition", required=True, help="partition JSON")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("evaluate", parents=[shared], help="sweep methods and cluster counts")
    p.add_argument("--methods", default="all", help="comma-separated methods or 'all'")
    p.add_argument("--from", dest="from_", type=int, default=None,
                   help="largest cluster count (default N)")
    p.add_argument("--to", type=int, default=1, help="smallest cluster count (default 1)")
    p.add_argument("--repeats", type=int, default=3, help="timing repetitions (median)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gridagg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"gridagg: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DcOpfError as exc:
        print(f"gridagg: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if exc.status is LpStatus.INFEASIBLE else EXIT_NUMERICAL
    except SingularNetworkError as exc:
        print(f"gridagg: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
