from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from gridagg.caseio import load_case
from gridagg.grid import Bus, Generator, GenKind, Grid, Line


def data_path(name: str) -> str:
    return str(resources.files("gridagg") / "data" / name)


def make_grid(n_buses, lines, gens, demand=None, slack=0, name="") -> Grid:
    """lines: (from, to, b, limit); gens: (bus, cost, p_max[, kind])."""
    demand = demand if demand is not None else [0.0] * n_buses
    return Grid(
        tuple(Bus(i, float(d)) for i, d in enumerate(demand)),
        tuple(Line(i, a, b, float(s), float(t)) for i, (a, b, s, t) in enumerate(lines)),
        tuple(
            Generator(i, g[0], float(g[1]), float(g[2]), g[3] if len(g) > 3 else GenKind.THERMAL)
            for i, g in enumerate(gens)
        ),
        slack,
        name,
    )


def two_bus(limit=30.0) -> Grid:
    return make_grid(2, [(0, 1, 1.0, limit)], [(0, 10.0, 100.0), (1, 50.0, 100.0)],
                     demand=[0.0, 50.0])


def ring3(limits=(100.0, 100.0, 100.0), demand=(0.0, 0.0, 0.0), gens=None) -> Grid:
    lines = [(0, 1, 1.0, limits[0]), (1, 2, 1.0, limits[1]), (0, 2, 1.0, limits[2])]
    return make_grid(3, lines, gens or [(0, 10.0, 100.0)], demand=list(demand))


def random_grid(rng: np.random.Generator, n: int, extra_edges: int = None,
                tight: bool = True, backups: bool = True) -> Grid:
    """Connected random grid: random spanning tree plus extra edges (parallel lines allowed)."""
    order = rng.permutation(n)
    edges = []
    for i in range(1, n):
        a, b = int(order[i]), int(order[rng.integers(i)])
        edges.append((a, b))
    extra = rng.integers(0, n) if extra_edges is None else extra_edges
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        edges.append((int(a), int(b)))
    demand = np.round(rng.uniform(0, 50, n), 3)
    total = demand.sum()
    hi = 0.6 * total if tight else 10 * total + 1
    lines = [(a, b, float(rng.uniform(1, 10)), float(rng.uniform(0.05 * total + 1, hi + 2)))
             for a, b in edges]
    gens = []
    n_gen = int(rng.integers(1, max(2, n // 2) + 1))
    for _ in range(n_gen):
        gens.append((int(rng.integers(n)), float(np.round(rng.uniform(5, 60), 3)),
                     float(np.round(rng.uniform(0.2, 1.0) * total + 1, 3))))
    if backups:
        for bus in range(n):
            gens.append((bus, 1000.0, float(total + 1), GenKind.BACKUP))
    return make_grid(n, lines, gens, demand=list(demand), slack=int(rng.integers(n)))


def six_bus_single_congestion() -> Grid:
    """Two triangles joined by two lines; only the weak tie 2-3 congests."""
    lines = [
        (0, 1, 2.0, 500.0), (1, 2, 3.0, 500.0), (0, 2, 1.5, 500.0),
        (3, 4, 2.5, 500.0), (4, 5, 1.0, 500.0), (3, 5, 2.0, 500.0),
        (2, 3, 1.0, 40.0), (1, 4, 4.0, 500.0),
    ]
    gens = [(0, 10.0, 400.0), (5, 40.0, 400.0), (4, 55.0, 100.0)]
    demand = [10.0, 20.0, 30.0, 60.0, 50.0, 70.0]
    return make_grid(6, lines, gens, demand=demand)


@pytest.fixture(scope="session")
def rts24() -> Grid:
    return load_case(data_path("rts24.json"))


@pytest.fixture(scope="session")
def ieee300() -> Grid:
    return load_case(data_path("ieee300_mod.json"))
