"""Network data model, validation and scenario transforms."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np


class GenKind(str, enum.Enum):
    THERMAL = "thermal"
    WIND = "wind"
    BACKUP = "backup"


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    limit: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    cost: float
    p_max: float
    kind: GenKind = GenKind.THERMAL


@dataclass(frozen=True)
class Grid:
    """Single-period network. Ids are dense, 0-based positions in each tuple."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    slack_bus: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @cached_property
    def demand(self) -> np.ndarray:
        return np.array([b.demand for b in self.buses], dtype=float)

    @cached_property
    def susceptance(self) -> np.ndarray:
        return np.array([ln.susceptance for ln in self.lines], dtype=float)

    @cached_property
    def limits(self) -> np.ndarray:
        return np.array([ln.limit for ln in self.lines], dtype=float)

    @cached_property
    def line_ends(self) -> np.ndarray:
        """(L, 2) array of (from_bus, to_bus)."""
        return np.array(
            [(ln.from_bus, ln.to_bus) for ln in self.lines], dtype=int
        ).reshape(-1, 2)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([g.bus for g in self.generators], dtype=int)

    @cached_property
    def gen_cost(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @cached_property
    def gen_pmax(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators], dtype=float)

    def gen_incidence(self) -> np.ndarray:
        """Gamma: (N, G) with a 1 where generator g sits at bus n."""
        gamma = np.zeros((self.n_buses, self.n_generators))
        gamma[self.gen_bus, np.arange(self.n_generators)] = 1.0
        return gamma

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_buses)]
        for ln in self.lines:
            if 0 <= ln.from_bus < self.n_buses and 0 <= ln.to_bus < self.n_buses:
                adj[ln.from_bus].append(ln.to_bus)
                adj[ln.to_bus].append(ln.from_bus)
        return adj


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def codes(self) -> set[str]:
        return {v.split(":", 1)[0] for v in self.violations}


def validate(grid: Grid) -> ValidationReport:
    """Check index integrity, parameter signs and connectivity.

    Each violation is a string ``"<code>: <detail>"``. Codes: ``bus-index``,
    ``line-index``, ``generator-index``, ``self-loop``, ``bad-endpoint``,
    ``susceptance``, ``limit``, ``demand``, ``p-max``, ``cost``, ``slack``,
    ``disconnected``.
    """
    out = []
    N = grid.n_buses
    for pos, bus in enumerate(grid.buses):
        if bus.id != pos:
            out.append(f"bus-index: bus at position {pos} has id {bus.id}")
        if not (bus.demand >= 0.0 and np.isfinite(bus.demand)):
            out.append(f"demand: bus {bus.id} demand {bus.demand}")
    for pos, ln in enumerate(grid.lines):
        if ln.id != pos:
            out.append(f"line-index: line at position {pos} has id {ln.id}")
        if not (0 <= ln.from_bus < N and 0 <= ln.to_bus < N):
            out.append(f"bad-endpoint: line {ln.id} ({ln.from_bus}->{ln.to_bus})")
        elif ln.from_bus == ln.to_bus:
            out.append(f"self-loop: line {ln.id} at bus {ln.from_bus}")
        if not (ln.susceptance > 0.0 and np.isfinite(ln.susceptance)):
            out.append(f"susceptance: line {ln.id} susceptance {ln.susceptance}")
        if not (ln.limit > 0.0):
            out.append(f"limit: line {ln.id} limit {ln.limit}")
    for pos, g in enumerate(grid.generators):
        if g.id != pos:
            out.append(f"generator-index: generator at position {pos} has id {g.id}")
        if not 0 <= g.bus < N:
            out.append(f"bad-endpoint: generator {g.id} at bus {g.bus}")
        if not (g.p_max >= 0.0):
            out.append(f"p-max: generator {g.id} p_max {g.p_max}")
        if not np.isfinite(g.cost):
            out.append(f"cost: generator {g.id} cost {g.cost}")
    if not 0 <= grid.slack_bus < N:
        out.append(f"slack: slack bus {grid.slack_bus} out of range")
    elif N:
        seen = _reachable(grid.neighbors(), grid.slack_bus)
        missing = [n for n in range(N) if not seen[n]]
        if missing:
            out.append(
                f"disconnected: {len(missing)} bus(es) unreachable from slack, "
                f"first {missing[:5]}"
            )
    return ValidationReport(out)


def _reachable(adj: Sequence[Sequence[int]], start: int) -> list[bool]:
    seen = [False] * len(adj)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_connected_subset(adj: Sequence[Sequence[int]], nodes: Sequence[int]) -> bool:
    """True if ``nodes`` induce a connected subgraph."""
    members = set(nodes)
    if not members:
        return False
    start = next(iter(members))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v in members and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(members)


def incidence_matrix(grid: Grid, slack_adjusted: bool = False) -> np.ndarray:
    """Line-node incidence K (L x N): +1 at the from bus, -1 at the to bus.

    With ``slack_adjusted`` the slack column is removed (L x N-1).
    """
    K = np.zeros((grid.n_lines, grid.n_buses))
    if grid.n_lines:
        rows = np.arange(grid.n_lines)
        K[rows, grid.line_ends[:, 0]] = 1.0
        K[rows, grid.line_ends[:, 1]] = -1.0
    if slack_adjusted:
        K = np.delete(K, grid.slack_bus, axis=1)
    return K


@dataclass(frozen=True)
class TransformSpec:
    """Scenario modifications used to create congested test cases.

    ``backup_cost`` of ``None`` adds no backups; ``"auto"`` uses ten times the
    most expensive thermal cost.
    """

    demand_scale: float = 1.0
    wind_scale: float = 1.0
    cost_perturb_magnitude: float = 0.0
    backup_cost: Union[None, float, str] = None
    wind_additions: tuple[tuple[int, float], ...] = ()


def transform(grid: Grid, spec: TransformSpec, seed: int = 1) -> Grid:
    """Return a new grid with ``spec`` applied; ``grid`` is not modified."""
    if spec.demand_scale < 0 or spec.wind_scale < 0:
        raise ValueError("scales must be non-negative")
    if spec.cost_perturb_magnitude < 0:
        raise ValueError("cost perturbation magnitude must be non-negative")
    if isinstance(spec.backup_cost, (int, float)) and spec.backup_cost < 0:
        raise ValueError("backup cost must be non-negative")
    for bus, cap in spec.wind_additions:
        if not 0 <= bus < grid.n_buses or cap < 0:
            raise ValueError(f"invalid wind addition ({bus}, {cap})")

    buses = grid.buses
    if spec.demand_scale != 1.0:
        buses = tuple(replace(b, demand=b.demand * spec.demand_scale) for b in buses)

    gens = list(grid.generators)
    if spec.wind_scale != 1.0:
        gens = [
            replace(g, p_max=g.p_max * spec.wind_scale) if g.kind is GenKind.WIND else g
            for g in gens
        ]
    for bus, cap in spec.wind_additions:
        gens.append(Generator(len(gens), int(bus), 0.0, float(cap), GenKind.WIND))

    if spec.cost_perturb_magnitude > 0:
        gens = _perturb_costs(gens, spec.cost_perturb_magnitude, seed)

    if spec.backup_cost is not None:
        thermal = [g.cost for g in gens if g.kind is GenKind.THERMAL]
        if spec.backup_cost == "auto":
            cost = 10.0 * max(thermal) if thermal else 1000.0
        else:
            cost = float(spec.backup_cost)
        total = float(sum(b.demand for b in buses))
        for bus in buses:
            gens.append(Generator(len(gens), bus.id, cost, total, GenKind.BACKUP))

    if buses is grid.buses and gens == list(grid.generators):
        return grid
    return Grid(buses, grid.lines, tuple(gens), grid.slack_bus, grid.name)


def _perturb_costs(gens: list[Generator], magnitude: float, seed: int) -> list[Generator]:
    idx = [i for i, g in enumerate(gens) if g.kind is GenKind.THERMAL]
    if not idx:
        return gens
    rng = np.random.default_rng(seed)
    k = len(idx)
    base = np.array([gens[i].cost for i in idx])
    for _ in range(1000):
        offsets = magnitude * (rng.permutation(k) + 1) / k
        costs = base + offsets
        if np.unique(costs).size == k:
            break
    else:
        raise RuntimeError("could not find distinct perturbed costs")
    out = list(gens)
    for i, c in zip(idx, costs):
        out[i] = replace(out[i], cost=float(c))
    return out


def total_demand(grid: Grid) -> float:
    return float(grid.demand.sum())


def with_limits(grid: Grid, limits: Sequence[float]) -> Grid:
    """Copy of ``grid`` with new line limits, in line order."""
    lines = tuple(replace(ln, limit=float(t)) for ln, t in zip(grid.lines, limits))
    return Grid(grid.buses, lines, grid.generators, grid.slack_bus, grid.name)
