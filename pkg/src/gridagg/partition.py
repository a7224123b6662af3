"""Node clustering: KMeans, spectral clustering and adjacent-node agglomeration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .grid import Grid, incidence_matrix


class Metric(str, enum.Enum):
    LMP = "lmp"
    NCP = "ncp"


class Method(str, enum.Enum):
    LMP_KMEANS = "lmp-kmeans"
    LMP_SC = "lmp-sc"
    LMP_ANAC = "lmp-anac"
    NCP_KMEANS = "ncp-kmeans"
    NCP_ANAC = "ncp-anac"

    @property
    def metric(self) -> Metric:
        return Metric(self.value.split("-")[0])

    @property
    def algorithm(self) -> str:
        return self.value.split("-")[1]


ALL_METHODS = tuple(Method)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # (N, F)
    metric: Metric

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)


def canonical_labels(labels: Sequence[int]) -> np.ndarray:
    """Relabel clusters in order of their smallest member."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(labels.size, dtype=int)
    for i, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


@dataclass(eq=False)
class PartitionResult:
    labels: np.ndarray  # cluster index of every bus, canonical order
    line_map: np.ndarray  # (L~, L)
    method: str
    seed: int
    line_limits: Optional[np.ndarray] = None  # limits of retained (possibly merged) lines

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def node_map(self) -> np.ndarray:
        """M^nc, (N~, N) with one 1 per column."""
        M = np.zeros((self.n_clusters, self.labels.size))
        M[self.labels, np.arange(self.labels.size)] = 1.0
        return M

    @property
    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for bus, lab in enumerate(self.labels.tolist()):
            out[lab].append(bus)
        return out

    @property
    def retained_lines(self) -> list[int]:
        """Original ids of the lines kept in the aggregated grid."""
        if not self.line_map.size:
            return []
        return [int(l) for l in np.flatnonzero(np.any(self.line_map != 0, axis=0))]

    def same_sets(self, other: "PartitionResult") -> bool:
        return np.array_equal(self.labels, other.labels)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "n_clusters": self.n_clusters,
            "seed": self.seed,
            "clusters": self.clusters,
            "retained_lines": self.retained_lines,
        }


def derive_line_map(
    grid: Grid, labels: Sequence[int], merge_parallel: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Line mapping M^l and the limits of the aggregated lines.

    Lines inside a cluster are dropped and every inter-cluster line becomes its
    own row. With ``merge_parallel`` lines joining the same pair of clusters
    share one row (signed by orientation) whose limit is the sum of theirs.
    """
    labels = np.asarray(labels)
    ends = grid.line_ends
    limits = grid.limits
    L = grid.n_lines
    if L == 0:
        return np.zeros((0, 0)), np.zeros(0)
    inter = labels[ends[:, 0]] != labels[ends[:, 1]]
    keep = np.flatnonzero(inter)
    if not merge_parallel:
        M = np.zeros((keep.size, L))
        M[np.arange(keep.size), keep] = 1.0
        return M, limits[keep].copy()
    rows: dict[tuple[int, int], int] = {}
    entries = []
    for l in keep:
        a, b = int(labels[ends[l, 0]]), int(labels[ends[l, 1]])
        key = (min(a, b), max(a, b))
        if key not in rows:
            rows[key] = len(rows)
        entries.append((rows[key], l, 1.0 if a < b else -1.0))
    M = np.zeros((len(rows), L))
    lim = np.zeros(len(rows))
    for r, l, sign in entries:
        M[r, l] = sign
        lim[r] += limits[l]
    return M, lim


def _result(grid, labels, method, seed, merge_parallel=False) -> PartitionResult:
    labels = canonical_labels(labels)
    M_l, lim = derive_line_map(grid, labels, merge_parallel)
    return PartitionResult(labels, M_l, str(method), seed, lim)


def trivial_partition(grid: Grid, method: str = "trivial", seed: int = 0) -> PartitionResult:
    return _result(grid, np.zeros(grid.n_buses, dtype=int), method, seed)


# ---------------------------------------------------------------- KMeans


def _sq_dist(X, X_sq, C):
    """Squared Euclidean distances (n, k) through the Gram expansion."""
    d = X_sq[:, None] - 2.0 * (X @ C.T) + (C * C).sum(axis=1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _kmeans_pp(X, X_sq, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dist(X, X_sq, X[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            remaining = np.setdiff1d(np.arange(n), centers)
            centers.append(int(remaining[rng.integers(remaining.size)]))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            centers.append(min(idx, n - 1))
        closest = np.minimum(closest, _sq_dist(X, X_sq, X[centers[-1:]])[:, 0])
    return X[centers].copy()


def _repair_empty(X, labels, centers, k):
    """Give each empty cluster the farthest point of the currently largest cluster."""
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        if members.size < 2:
            break
        d = ((X[members] - centers[big]) ** 2).sum(axis=1)
        far = int(members[np.argmax(d)])
        labels[far] = empty
        centers[empty] = X[far]
        counts[big] -= 1
        counts[empty] = 1
    return labels


def _lloyd(X, X_sq, centers, max_iter, tol):
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dist(X, X_sq, centers), axis=1)
        new = _repair_empty(X, new, centers, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        onehot = np.zeros((k, X.shape[0]))
        onehot[labels, np.arange(X.shape[0])] = 1.0
        new_centers = (onehot @ X) / onehot.sum(axis=1)[:, None]
        shift = float(((new_centers - centers) ** 2).sum(axis=1).max())
        centers[:] = new_centers
        if shift <= tol:
            break
    labels = np.argmin(_sq_dist(X, X_sq, centers), axis=1)
    labels = _repair_empty(X, labels, centers, k)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, inertia


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 1,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> tuple[np.ndarray, float]:
    """Lloyd's algorithm with k-means++ seeding; returns (labels, inertia) of the best restart."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"number of clusters must be in [1, {n}], got {k}")
    if k == n:
        return np.arange(n), 0.0
    X = X - X.mean(axis=0)
    # constant columns add nothing to any distance
    X = X[:, np.any(X != 0.0, axis=0)]
    if X.shape[1] == 0:
        X = np.zeros((n, 1))
    X_sq = (X * X).sum(axis=1)
    scale = float(X.var(axis=0).mean()) if X.size else 0.0
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = _kmeans_pp(X, X_sq, k, rng)
        labels, inertia = _lloyd(X, X_sq, centers, max_iter, tol * scale)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels, best_inertia


def kmeans_partition(
    grid: Grid,
    features: FeatureMatrix,
    n_clusters: int,
    seed: int = 1,
    n_init: int = 10,
    merge_parallel: bool = False,
) -> PartitionResult:
    labels, _ = kmeans(features.values, n_clusters, seed, n_init)
    return _result(grid, labels, f"{features.metric.value}-kmeans", seed, merge_parallel)


# ---------------------------------------------------------------- spectral


def inverse_lmp_difference(grid: Grid, lmps: np.ndarray, rho_cap: float = 1e6) -> np.ndarray:
    """rho_l = 1 / |(K LMP)_l|, capped at ``rho_cap`` for equal prices."""
    delta = np.abs(incidence_matrix(grid) @ np.asarray(lmps, dtype=float))
    return 1.0 / np.maximum(delta, 1.0 / rho_cap)


def spectral_embedding(grid: Grid, lmps: np.ndarray, n_clusters: int, rho_cap: float = 1e6):
    """Rows of the eigenvectors for the smallest eigenvalues of the normalized Laplacian."""
    K = incidence_matrix(grid)
    rho = inverse_lmp_difference(grid, lmps, rho_cap)
    lap = K.T @ (rho[:, None] * K)  # parallel lines add up
    deg = np.diag(lap).copy()
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap_sym = inv_sqrt[:, None] * lap * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(lap_sym)
    U = vecs[:, :n_clusters]
    # eigenvector signs are arbitrary; fix them for reproducibility
    pivot = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivot, np.arange(U.shape[1])])[None, :]
    return U


def spectral_partition(
    grid: Grid,
    lmps: np.ndarray,
    n_clusters: int,
    seed: int = 1,
    rho_cap: float = 1e6,
    n_init: int = 10,
    merge_parallel: bool = False,
) -> PartitionResult:
    if not 2 <= n_clusters <= grid.n_buses:
        raise ValueError("spectral clustering needs 2 <= n_clusters <= N")
    U = spectral_embedding(grid, lmps, n_clusters, rho_cap)
    labels, _ = kmeans(U, n_clusters, seed, n_init)
    return _result(grid, labels, Method.LMP_SC.value, seed, merge_parallel)


# ---------------------------------------------------------------- ANAC


@dataclass
class AnacHistory:
    """Merge sequence from N clusters down to ``stop``.

    ``labels[c]`` holds the bus-to-cluster assignment when c clusters remain;
    ``final_features`` are the cluster feature rows after the last merge.
    """

    metric: Metric
    merges: list[tuple[int, int]] = field(default_factory=list)
    labels: dict[int, np.ndarray] = field(default_factory=dict)
    final_features: Optional[np.ndarray] = None

    def labels_at(self, n_clusters: int) -> np.ndarray:
        if n_clusters not in self.labels:
            raise ValueError(f"history does not reach {n_clusters} clusters")
        return self.labels[n_clusters]


def anac_history(grid: Grid, features: FeatureMatrix, stop: int = 1) -> AnacHistory:
    """Adjacent node agglomerative clustering.

    Every iteration recomputes the pairwise Euclidean distances between cluster
    feature rows, penalizes non-adjacent pairs by eps > max distance, merges
    the cheapest pair (ties: lexicographically smallest index pair), and
    replaces the kept row by a weighted average with weights
    ``w_absorbed = 1 / size(merged)`` and ``w_kept = 1 - w_absorbed``.
    """
    X = features.values.astype(float).copy()
    N = grid.n_buses
    if X.shape[0] != N:
        raise ValueError("feature matrix needs one row per bus")
    if not 1 <= stop <= N:
        raise ValueError(f"stop must be in [1, {N}]")
    adj = np.zeros((N, N), dtype=bool)
    ends = grid.line_ends
    adj[ends[:, 0], ends[:, 1]] = True
    adj[ends[:, 1], ends[:, 0]] = True
    np.fill_diagonal(adj, False)
    sizes = np.ones(N)
    member = np.arange(N)  # bus -> current cluster index
    hist = AnacHistory(features.metric)
    hist.labels[N] = member.copy()
    upper = np.triu(np.ones((N, N), dtype=bool), k=1)

    c = N
    while c > stop:
        D = cdist(X, X)
        eps = D.max() * (1.0 + 1e-6) + 1.0
        W = D + np.where(adj, 0.0, eps)
        W[~upper[:c, :c]] = np.inf
        flat = int(np.argmin(W))
        n, m = divmod(flat, c)
        if not adj[n, m]:
            raise RuntimeError("no adjacent clusters left; grid is disconnected")
        sizes[n] += sizes[m]
        w_m = 1.0 / sizes[n]
        X[n] = (1.0 - w_m) * X[n] + w_m * X[m]
        adj[n] |= adj[m]
        adj[:, n] |= adj[:, m]
        adj[n, n] = False
        keep = np.arange(c) != m
        X = X[keep]
        sizes = sizes[keep]
        adj = adj[np.ix_(keep, keep)]
        member = np.where(member == m, n, member)
        member = np.where(member > m, member - 1, member)
        c -= 1
        hist.merges.append((n, m))
        hist.labels[c] = member.copy()
    hist.final_features = X
    return hist


def anac_partition(
    grid: Grid,
    features: FeatureMatrix,
    n_clusters: int,
    history: Optional[AnacHistory] = None,
    merge_parallel: bool = False,
) -> PartitionResult:
    if history is None:
        history = anac_history(grid, features, stop=n_clusters)
    labels = history.labels_at(n_clusters)
    return _result(grid, labels, f"{features.metric.value}-anac", 0, merge_parallel)


def partition(
    grid: Grid,
    method: Method,
    n_clusters: int,
    lmps: np.ndarray,
    ncps: Optional[np.ndarray] = None,
    seed: int = 1,
    history: Optional[AnacHistory] = None,
    rho_cap: float = 1e6,
    merge_parallel: bool = False,
) -> PartitionResult:
    """Run one of the five metric/algorithm combinations.

    Spectral clustering with one cluster falls back to the trivial partition.
    """
    method = Method(method)
    if method.metric is Metric.NCP:
        if ncps is None:
            raise ValueError("NCP methods need the NCP matrix")
        feats = FeatureMatrix(ncps, Metric.NCP)
    else:
        feats = FeatureMatrix(lmps, Metric.LMP)
    if method.algorithm == "kmeans":
        res = kmeans_partition(grid, feats, n_clusters, seed, merge_parallel=merge_parallel)
    elif method.algorithm == "sc":
        if n_clusters == 1:
            res = trivial_partition(grid, method.value, seed)
        else:
            res = spectral_partition(grid, lmps, n_clusters, seed, rho_cap,
                                     merge_parallel=merge_parallel)
    else:
        res = anac_partition(grid, feats, n_clusters, history, merge_parallel)
    res.method = method.value
    res.seed = seed
    return res
