"""
Server-side Clustering

K-means over client loss vectors, minimum-cost matching of the new clusters onto the
existing models, and the weight-space PCA + K-means used by the CFL-AD baselines.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import kmeans_plusplus
from sklearn.decomposition import PCA

from ..exceptions import ConfigurationError, ShapeError
from ..utils.seeding import SeedLike, as_generator

DEFAULT_MAX_ITER = 100
DEFAULT_N_INIT = 10
PCA_COMPONENTS = 8

# client_id -> cluster index
ClusterAssignment = Dict[int, int]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossVector:
    """Benign reconstruction loss of one client under each of the K models."""

    client_id: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ShapeError(f"Loss vector of client {self.client_id} must be finite and >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: List[float] = field(default_factory=list)
    iterations: int = 0


def _inertia(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def _repair_empty(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray, K: int) -> np.ndarray:
    """Give each empty cluster the farthest point of a cluster that has two or more."""
    labels = labels.copy()
    for k in range(K):
        if np.any(labels == k):
            continue
        sizes = np.bincount(labels, minlength=K)
        donors = sizes[labels] >= 2
        if not donors.any():
            break
        dist = ((X - centroids[labels]) ** 2).sum(axis=1)
        dist[~donors] = -1.0
        labels[int(np.argmax(dist))] = k
    return labels


def _lloyd(X: np.ndarray, init: np.ndarray, max_iter: int) -> KMeansResult:
    K = init.shape[0]
    centroids = init.copy()
    labels = None
    history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = _repair_empty(X, np.argmin(d2, axis=1), centroids, K)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            members = X[labels == k]
            if members.shape[0]:
                centroids[k] = members.mean(axis=0)
        history.append(_inertia(X, labels, centroids))
    return KMeansResult(labels, centroids, history[-1], history, iterations)


def kmeans_matrix(
    X: np.ndarray,
    K: int,
    seed: SeedLike = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    n_init: int = DEFAULT_N_INIT,
) -> KMeansResult:
    """
    Lloyd's algorithm from k-means++ seeds, best of n_init restarts by final inertia.

    With fewer rows than K, every row gets its own cluster and the rest stay empty.
    """
    if K <= 0:
        raise ConfigurationError(f"K must be positive (got {K})")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"K-means input must be a matrix (got shape {X.shape})")
    N = X.shape[0]
    if N == 0:
        raise ShapeError("K-means needs at least one vector")
    if N < K:
        logger.warning(f"{N} vectors for {K} clusters; clusters {N}..{K - 1} stay empty")
        centroids = np.vstack([X, np.repeat(X.mean(axis=0, keepdims=True), K - N, axis=0)])
        labels = np.arange(N)
        return KMeansResult(labels, centroids, 0.0, [0.0], 1)

    rng = as_generator(seed)
    best = None
    for _ in range(max(1, n_init)):
        init, _ = kmeans_plusplus(X, n_clusters=K, random_state=int(rng.integers(2**31 - 1)))
        result = _lloyd(X, init.astype(np.float64), max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def kmeans(
    vectors: Sequence[LossVector],
    K: int,
    seed: SeedLike = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    n_init: int = DEFAULT_N_INIT,
) -> Tuple[ClusterAssignment, np.ndarray]:
    """Cluster loss vectors; returns client_id -> cluster and the K centroids."""
    if K <= 0:
        raise ConfigurationError(f"K must be positive (got {K})")
    X = np.vstack([v.values for v in vectors])
    result = kmeans_matrix(X, K, seed, max_iter, n_init)
    assignment = {v.client_id: int(label) for v, label in zip(vectors, result.labels)}
    return assignment, result.centroids


def _validate_square(cost: np.ndarray) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError(f"Cost matrix must be square (got shape {cost.shape})")
    if not np.all(np.isfinite(cost)):
        raise ShapeError("Cost matrix entries must be finite")
    return cost


def _optimum(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def min_cost_matching(cost: np.ndarray) -> np.ndarray:
    """
    Permutation sigma minimising sum_j cost[j, sigma[j]].

    Among optimal permutations the lexicographically smallest is returned: rows are
    fixed in order to the lowest column that still admits an optimal completion.
    """
    cost = _validate_square(cost)
    K = cost.shape[0]
    best = _optimum(cost)
    tolerance = 1e-9 * max(1.0, abs(best))

    sigma = np.empty(K, dtype=np.int64)
    free = list(range(K))
    spent = 0.0
    for row in range(K):
        for col in free:
            rest_cols = [c for c in free if c != col]
            rest = _optimum(cost[np.ix_(range(row + 1, K), rest_cols)])
            if spent + cost[row, col] + rest <= best + tolerance:
                sigma[row] = col
                spent += cost[row, col]
                free.remove(col)
                break
    return sigma


def build_match_cost(
    assignment: Mapping[int, int], vectors: Sequence[LossVector], K: int
) -> np.ndarray:
    """
    cost[j, m] = mean loss on model m over the clients k-means put in new cluster j.

    Rows of empty clusters are filled with a sentinel above every real entry.
    """
    by_client = {v.client_id: v.values for v in vectors}
    missing = [cid for cid in by_client if cid not in assignment]
    if missing:
        raise ShapeError(f"Clients {missing} have loss vectors but no cluster")
    cost = np.full((K, K), np.nan)
    for j in range(K):
        members = [by_client[cid] for cid in sorted(by_client) if assignment[cid] == j]
        if members:
            cost[j] = np.mean(np.vstack(members), axis=0)
    finite = cost[np.isfinite(cost)]
    sentinel = (float(finite.max()) if finite.size else 0.0) + 1.0
    return np.where(np.isnan(cost), sentinel, cost)


def assignment_purity(assignment: Mapping[int, int], truth: Mapping[int, int]) -> float:
    """Fraction of clients whose cluster matches their device under the best relabeling."""
    clients = sorted(assignment)
    if not clients:
        return float("nan")
    clusters = sorted({assignment[c] for c in clients})
    devices = sorted({truth[c] for c in clients})
    table = np.zeros((len(clusters), len(devices)), dtype=np.int64)
    for c in clients:
        table[clusters.index(assignment[c]), devices.index(truth[c])] += 1
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / len(clients)


def weight_pca_kmeans(
    weights: np.ndarray,
    K: int,
    seed: SeedLike = 0,
    components: int = PCA_COMPONENTS,
    n_init: int = DEFAULT_N_INIT,
) -> np.ndarray:
    """Project flattened client weights onto their leading principal components, then K-means."""
    weights = np.asarray(weights, dtype=np.float64)
    n, p = weights.shape
    if n > max(K, 1):
        n_components = min(components, n, p)
        projected = PCA(n_components=n_components, svd_solver="full").fit_transform(weights)
    else:
        projected = weights
    return kmeans_matrix(projected, K, seed, n_init=n_init).labels


def align_labels(
    assignment: Mapping[int, int], previous: Mapping[int, int], K: int
) -> ClusterAssignment:
    """
    Relabel clusters to agree as much as possible with a previous assignment.

    New cluster j is renamed sigma[j], where sigma maximises the number of clients that
    keep their label. Without a previous assignment the labels are returned unchanged.
    """
    if not previous:
        return dict(assignment)
    overlap = np.zeros((K, K))
    for cid, j in assignment.items():
        if cid in previous:
            overlap[j, previous[cid]] += 1
    sigma = min_cost_matching(overlap.max() - overlap)
    return {cid: int(sigma[j]) for cid, j in assignment.items()}
