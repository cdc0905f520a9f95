"""
Federated Server

Server state for K cluster models, weighted per-cluster aggregation, the stabilization
rule, and the two CLAD round types: the clustering round (broadcast all K models,
collect loss vectors, K-means, match clusters onto models, train, aggregate) and the
stabilized round (each client receives only its own cluster's model).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..evaluation.accounting import Phase, fingerprint_flops, training_flops
from ..exceptions import ShapeError
from ..models.dm2a import DM2AConfig, DM2AModel, build_model
from ..utils.seeding import STREAM_KMEANS, STREAM_MODEL_INIT, rng_for
from .client import (
    ClientState,
    ClientUpdate,
    TrainHyper,
    compute_loss_vector,
    feature_mean,
    local_train,
)
from .clustering import (
    ClusterAssignment,
    LossVector,
    build_match_cost,
    kmeans,
    min_cost_matching,
)

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


@dataclass
class ServerState:
    """K cluster models plus the assignment history that drives stabilization."""

    models: List[DM2AModel]
    round: int = 0
    assignment_history: List[ClusterAssignment] = field(default_factory=list)
    stabilized: bool = False

    @property
    def K(self) -> int:
        return len(self.models)

    @property
    def assignment(self) -> ClusterAssignment:
        return self.assignment_history[-1] if self.assignment_history else {}

    @property
    def memberships(self) -> Dict[int, List[int]]:
        groups: Dict[int, List[int]] = {j: [] for j in range(self.K)}
        for cid, j in sorted(self.assignment.items()):
            groups[j].append(cid)
        return groups

    def model_for(self, client_id: int) -> DM2AModel:
        return self.models[self.assignment.get(client_id, 0)]


@dataclass
class RoundLog:
    """What happened in one round; metrics and cumulative costs are filled in by the driver."""

    round: int
    phase: Phase
    assignment: ClusterAssignment = field(default_factory=dict)
    stabilized: bool = False
    loss_vectors: Dict[int, np.ndarray] = field(default_factory=dict)
    flops: Dict[int, int] = field(default_factory=dict)
    skipped: List[int] = field(default_factory=list)
    model_vectors: List[np.ndarray] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    cumulative_bytes: float = 0.0
    cumulative_flops: float = 0.0


def map_clients(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Apply fn to every item; results come back in input order whatever the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def init_server(config: DM2AConfig, K: int, seed: int) -> ServerState:
    """K independently seeded models; model j depends only on (seed, j)."""
    if K < 1:
        raise ValueError(f"K must be at least 1 (got {K})")
    models = [build_model(config, rng_for(seed, j, STREAM_MODEL_INIT)) for j in range(K)]
    return ServerState(models=models)


def aggregate_cluster(
    updates: Sequence[ClientUpdate], fallback: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Sample-weighted mean of client weights, summed in ascending client_id order.

    An empty update list returns the fallback (the cluster's previous weights).
    """
    if not updates:
        if fallback is None:
            raise ShapeError("Cannot aggregate an empty cluster without its previous weights")
        return np.array(fallback, copy=True)
    ordered = sorted(updates, key=lambda u: u.client_id)
    length = ordered[0].weights.shape
    if any(u.weights.shape != length for u in ordered):
        raise ShapeError("Client updates disagree on the parameter vector length")
    total = float(sum(u.n_samples for u in ordered))
    result = np.zeros_like(ordered[0].weights)
    for update in ordered:
        result += (update.n_samples / total) * update.weights
    return result


def aggregate_models(
    models: Sequence[DM2AModel], updates: Sequence[ClientUpdate]
) -> List[DM2AModel]:
    """Per-cluster aggregation; clusters without updates keep their model."""
    new_models = []
    for j, model in enumerate(models):
        members = [u for u in updates if u.model_index == j]
        if not members:
            logger.info(f"Cluster {j} received no updates; model carried over")
            new_models.append(model)
            continue
        new_models.append(model.with_vector(aggregate_cluster(members)))
    return new_models


def check_stabilization(history: Sequence[ClusterAssignment], patience: int = 3) -> bool:
    """True iff the last `patience` assignments are identical for every client."""
    if len(history) < patience or patience < 1:
        return False
    recent = history[-patience:]
    return all(a == recent[0] for a in recent[1:])


def _fallback_assignment(
    orphans: Sequence[ClientState],
    anchored: Sequence[ClientState],
    assignment: ClusterAssignment,
) -> ClusterAssignment:
    """Clients without benign data join the cluster of the nearest client by feature mean."""
    result = dict(assignment)
    if not anchored:
        for state in orphans:
            result[state.client_id] = 0
        return result
    means = np.vstack([feature_mean(s.data) for s in anchored])
    for state in orphans:
        if len(state.data.train) == 0:
            result[state.client_id] = 0
            continue
        distance = np.linalg.norm(means - feature_mean(state.data), axis=1)
        nearest = anchored[int(np.argmin(distance))]
        result[state.client_id] = assignment[nearest.client_id]
        logger.warning(
            f"Client {state.data.label} has no benign samples to fingerprint; "
            f"joined cluster {result[state.client_id]} of client {nearest.data.label}"
        )
    return result


def train_assigned(
    server: ServerState,
    clients: Sequence[ClientState],
    assignment: ClusterAssignment,
    hyper: TrainHyper,
    seed: int,
    round_index: int,
    workers: int,
) -> List[Optional[ClientUpdate]]:
    def work(state: ClientState) -> Optional[ClientUpdate]:
        j = assignment[state.client_id]
        state.assignment = j
        return local_train(state, server.models[j], hyper, seed, round_index, j)

    return map_clients(work, clients, workers)


def clad_round(
    server: ServerState,
    clients: Sequence[ClientState],
    hyper: TrainHyper,
    seed: int,
    workers: int = 1,
) -> Tuple[ServerState, RoundLog]:
    """
    One clustering-phase round.

    Every client receives all K models and reports its benign reconstruction loss under
    each. The server clusters the loss vectors, matches the new clusters onto the
    existing models at minimum total loss, and the clients train their matched model.
    """
    if server.stabilized:
        raise ValueError("Server is stabilized; use stabilized_round")
    t = server.round + 1
    K = server.K
    clients = sorted(clients, key=lambda s: s.client_id)

    anchored = [s for s in clients if len(s.data.train_benign)]
    orphans = [s for s in clients if not len(s.data.train_benign)]
    rows = map_clients(lambda s: compute_loss_vector(s.data, server.models), anchored, workers)
    vectors = [LossVector(s.client_id, row) for s, row in zip(anchored, rows)]

    assignment: ClusterAssignment = {}
    if vectors:
        raw, _ = kmeans(vectors, K, rng_for(seed, t, STREAM_KMEANS))
        sigma = min_cost_matching(build_match_cost(raw, vectors, K))
        assignment = {cid: int(sigma[label]) for cid, label in raw.items()}
    assignment = _fallback_assignment(orphans, anchored, assignment)

    results = train_assigned(server, clients, assignment, hyper, seed, t, workers)
    updates = [u for u in results if u is not None]
    history = [*server.assignment_history, assignment]
    new_server = replace(
        server,
        models=aggregate_models(server.models, updates),
        round=t,
        assignment_history=history,
        stabilized=check_stabilization(history, hyper.stabilization_patience),
    )

    flops = {}
    for state in clients:
        model = server.models[assignment[state.client_id]]
        n_benign = len(state.data.train_benign)
        flops[state.client_id] = fingerprint_flops(model, K, n_benign) + training_flops(
            model, state.data.alpha, len(state.data.train), hyper.local_epochs
        )
    log = RoundLog(
        round=t,
        phase=Phase.CLUSTERING,
        assignment=assignment,
        stabilized=new_server.stabilized,
        loss_vectors={v.client_id: v.values for v in vectors},
        flops=flops,
        skipped=[s.client_id for s, u in zip(clients, results) if u is None],
    )
    if new_server.stabilized:
        logger.info(f"Round {t}: assignments unchanged for {hyper.stabilization_patience} rounds")
    return new_server, log


def stabilized_round(
    server: ServerState,
    clients: Sequence[ClientState],
    hyper: TrainHyper,
    seed: int,
    workers: int = 1,
) -> Tuple[ServerState, RoundLog]:
    """Per-cluster FedAvg with the frozen assignment; no loss vectors, no clustering."""
    if not server.stabilized:
        raise ValueError("Server has not stabilized; use clad_round")
    t = server.round + 1
    clients = sorted(clients, key=lambda s: s.client_id)
    assignment = dict(server.assignment)

    results = train_assigned(server, clients, assignment, hyper, seed, t, workers)
    updates = [u for u in results if u is not None]
    new_server = replace(
        server,
        models=aggregate_models(server.models, updates),
        round=t,
        assignment_history=[*server.assignment_history, assignment],
    )
    flops = {
        s.client_id: training_flops(
            server.models[assignment[s.client_id]],
            s.data.alpha,
            len(s.data.train),
            hyper.local_epochs,
        )
        for s in clients
    }
    log = RoundLog(
        round=t,
        phase=Phase.STABILIZED,
        assignment=assignment,
        stabilized=True,
        flops=flops,
        skipped=[s.client_id for s, u in zip(clients, results) if u is None],
    )
    return new_server, log
