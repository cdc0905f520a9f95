"""
Federated Algorithms

CLAD and the baselines it is compared against, each a FederatedAlgorithm that runs
max_rounds rounds with full participation. Every algorithm evaluates all clients after
every round (and once before training, as round 0) and charges its communication and
computation to a CostLedger.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..data.partition import ClientDataset
from ..evaluation.accounting import (
    Algorithm,
    CostLedger,
    Phase,
    assignment_loss_flops,
    describe_round,
    format_bytes,
    payload_size,
    record_round,
    training_flops,
)
from ..evaluation.metrics import average_over_clients
from ..models.dm2a import DM2AConfig, DM2AModel
from ..utils.seeding import STREAM_KMEANS, rng_for
from .client import (
    AD_PATH_CLASSIFIER,
    AD_PATH_THRESHOLD,
    ClientEvaluation,
    ClientState,
    ClientUpdate,
    TrainHyper,
    evaluate_client,
    local_train,
    train_loss,
)
from .clustering import (
    ClusterAssignment,
    align_labels,
    assignment_purity,
    weight_pca_kmeans,
)
from .server import (
    RoundLog,
    aggregate_models,
    check_stabilization,
    clad_round,
    init_server,
    map_clients,
    stabilized_round,
    train_assigned,
)

METRIC_NAMES = (
    "cls_f1",
    "cls_acc",
    "mcc",
    "ad_f1",
    "ad_f1_classifier",
    "ad_f1_threshold",
    "assignment_purity",
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    """Round logs (round 0 first), final models and the cost ledger of one run."""

    algorithm: Algorithm
    logs: List[RoundLog]
    models: List[DM2AModel]
    ledger: CostLedger
    client_sizes: Dict[int, int] = field(default_factory=dict)

    @property
    def final(self) -> RoundLog:
        return self.logs[-1]


def summarize_round(
    evaluations: Sequence[ClientEvaluation],
    assignment: Optional[ClusterAssignment],
    truth: Dict[int, int],
) -> Dict[str, float]:
    """Client-averaged metrics; CLS metrics over labeled clients, AD over everyone."""
    classifier = [e for e in evaluations if e.ad_path == AD_PATH_CLASSIFIER]
    threshold = [e for e in evaluations if e.ad_path == AD_PATH_THRESHOLD]
    purity = float("nan")
    if assignment:
        purity = assignment_purity(assignment, {cid: truth[cid] for cid in assignment})
    return {
        "cls_f1": average_over_clients([e.cls_f1 for e in evaluations], "cls_f1"),
        "cls_acc": average_over_clients([e.cls_acc for e in evaluations], "cls_acc"),
        "mcc": average_over_clients([e.mcc for e in evaluations], "mcc"),
        "ad_f1": average_over_clients([e.ad_f1 for e in evaluations], "ad_f1"),
        "ad_f1_classifier": average_over_clients([e.ad_f1 for e in classifier]),
        "ad_f1_threshold": average_over_clients([e.ad_f1 for e in threshold]),
        "assignment_purity": purity,
    }


class FederatedAlgorithm:
    """
    Shared driver: round 0 evaluation, then max_rounds of run_round() with accounting
    and evaluation after each.

    Subclasses implement run_round() and may override prepare(), model_for() and
    final_models().
    """

    algorithm: Algorithm = Algorithm.FEDAVG
    ad_only: bool = False

    def __init__(
        self,
        config: DM2AConfig,
        clients: Sequence[ClientDataset],
        hyper: TrainHyper,
        K: int = 1,
        seed: int = 0,
        workers: int = 1,
        record_weights: bool = False,
    ):
        self.logger = logging.getLogger(f"{__name__}.{type(self).__name__}")
        hyper.validate()
        self.config = config
        self.hyper = hyper
        self.K = K
        self.seed = seed
        self.workers = workers
        self.record_weights = record_weights

        self.clients = sorted(self.prepare(clients), key=lambda c: c.client_id)
        self.states = [ClientState(c) for c in self.clients]
        self.truth = {c.client_id: c.device_id for c in self.clients}
        self.server = init_server(config, self.initial_models, seed)
        self.ledger = CostLedger(
            [c.client_id for c in self.clients],
            payload_size(self.server.models[0], include_classifier=not self.ad_only),
        )

    @property
    def initial_models(self) -> int:
        return 1

    def prepare(self, clients: Sequence[ClientDataset]) -> List[ClientDataset]:
        return list(clients)

    def model_for(self, client_id: int) -> DM2AModel:
        return self.server.model_for(client_id)

    def final_models(self) -> List[DM2AModel]:
        return list(self.server.models)

    def current_assignment(self) -> Optional[ClusterAssignment]:
        return self.server.assignment if self.algorithm.clustered else None

    def run_round(self) -> RoundLog:
        raise NotImplementedError

    def _account(self, log: RoundLog) -> None:
        participants = [c.client_id for c in self.clients]
        record_round(self.ledger, self.algorithm, log.phase, self.server.K, participants)
        for cid, flops in log.flops.items():
            self.ledger.charge(cid, flops=flops)
        snapshot = self.ledger.close_round(log.round, log.phase)
        log.cumulative_bytes = snapshot.mean_bytes
        log.cumulative_flops = snapshot.mean_flops

    def _evaluate(self, log: RoundLog) -> None:
        evaluations = map_clients(
            lambda c: evaluate_client(c, self.model_for(c.client_id), self.ad_only),
            self.clients,
            self.workers,
        )
        log.metrics = summarize_round(evaluations, self.current_assignment(), self.truth)
        if self.record_weights:
            log.model_vectors = [m.flatten() for m in self.final_models()]

    def run(self) -> ExperimentResult:
        self.logger.info(
            f"{self.algorithm.value}: {len(self.clients)} clients, K={self.K}, "
            f"{self.hyper.max_rounds} rounds, seed {self.seed}"
        )
        initial = RoundLog(round=0, phase=Phase.INITIAL)
        self._account(initial)
        self._evaluate(initial)
        logs = [initial]
        for _ in range(self.hyper.max_rounds):
            log = self.run_round()
            self._account(log)
            self._evaluate(log)
            logs.append(log)
            self.logger.debug(
                f"round {log.round} [{log.phase.value}] ad_f1={log.metrics['ad_f1']:.4f} "
                f"cls_f1={log.metrics['cls_f1']:.4f} bytes={format_bytes(log.cumulative_bytes)}"
            )
        self.logger.info(
            f"{self.algorithm.value} finished at {describe_round(self.ledger.snapshots[-1])}; "
            f"ad_f1={logs[-1].metrics['ad_f1']:.4f}"
        )
        return ExperimentResult(
            self.algorithm,
            logs,
            self.final_models(),
            self.ledger,
            {c.client_id: len(c.train) for c in self.clients},
        )

    def _train_flops(self, model: DM2AModel, state: ClientState) -> int:
        n = len(state.data.train)
        return training_flops(model, state.data.alpha, n, self.hyper.local_epochs)


class FedAvgAlgorithm(FederatedAlgorithm):
    """One global model averaged over every client."""

    algorithm = Algorithm.FEDAVG

    def run_round(self) -> RoundLog:
        t = self.server.round + 1
        assignment = {c.client_id: 0 for c in self.clients}
        results = train_assigned(
            self.server, self.states, assignment, self.hyper, self.seed, t, self.workers
        )
        model = self.server.models[0]
        self.server = replace(
            self.server,
            models=aggregate_models(self.server.models, [u for u in results if u is not None]),
            round=t,
        )
        return RoundLog(
            round=t,
            phase=Phase.TRAINING,
            flops={s.client_id: self._train_flops(model, s) for s in self.states},
            skipped=[s.client_id for s, u in zip(self.states, results) if u is None],
        )


class CladAlgorithm(FederatedAlgorithm):
    """Loss-vector clustering until assignments stabilize, then per-cluster FedAvg."""

    algorithm = Algorithm.CLAD

    @property
    def initial_models(self) -> int:
        return self.K

    def run_round(self) -> RoundLog:
        step = stabilized_round if self.server.stabilized else clad_round
        self.server, log = step(self.server, self.states, self.hyper, self.seed, self.workers)
        return log


class IfcaAlgorithm(FederatedAlgorithm):
    """
    Each round every client picks the model with the lowest full local loss.

    Stability is declared once assignments hold for stabilization_patience rounds and
    stays declared.
    """

    algorithm = Algorithm.IFCA

    @property
    def initial_models(self) -> int:
        return self.K

    def run_round(self) -> RoundLog:
        t = self.server.round + 1
        models = self.server.models
        losses = map_clients(
            lambda c: np.array([train_loss(c, m) if len(c.train) else np.inf for m in models]),
            self.clients,
            self.workers,
        )
        assignment = {c.client_id: int(np.argmin(row)) for c, row in zip(self.clients, losses)}
        results = train_assigned(
            self.server, self.states, assignment, self.hyper, self.seed, t, self.workers
        )
        history = [*self.server.assignment_history, assignment]
        stabilized = self.server.stabilized or check_stabilization(
            history, self.hyper.stabilization_patience
        )
        if stabilized and not self.server.stabilized:
            self.logger.info(f"IFCA assignments stable after round {t}")
        self.server = replace(
            self.server,
            models=aggregate_models(models, [u for u in results if u is not None]),
            round=t,
            assignment_history=history,
            stabilized=stabilized,
        )
        flops = {}
        for state in self.states:
            model = models[assignment[state.client_id]]
            n = len(state.data.train)
            flops[state.client_id] = assignment_loss_flops(
                model, self.K, n, state.data.alpha
            ) + self._train_flops(model, state)
        return RoundLog(
            round=t,
            phase=Phase.CLUSTERING,
            assignment=assignment,
            stabilized=stabilized,
            flops=flops,
            skipped=[s.client_id for s, u in zip(self.states, results) if u is None],
        )


class LocalAlgorithm(FederatedAlgorithm):
    """No federation: every client trains its own copy of the initial model."""

    algorithm = Algorithm.LOCAL

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.local_models = {c.client_id: self.server.models[0] for c in self.clients}

    def model_for(self, client_id: int) -> DM2AModel:
        return self.local_models[client_id]

    def final_models(self) -> List[DM2AModel]:
        return [self.local_models[c.client_id] for c in self.clients]

    def run_round(self) -> RoundLog:
        t = self.server.round + 1

        def work(state: ClientState) -> Optional[ClientUpdate]:
            return local_train(state, self.local_models[state.client_id], self.hyper, self.seed, t)

        results = map_clients(work, self.states, self.workers)
        flops = {}
        for state, update in zip(self.states, results):
            model = self.local_models[state.client_id]
            flops[state.client_id] = self._train_flops(model, state)
            if update is not None:
                self.local_models[state.client_id] = model.with_vector(update.weights)
        self.server = replace(self.server, round=t)
        return RoundLog(
            round=t,
            phase=Phase.TRAINING,
            flops=flops,
            skipped=[s.client_id for s, u in zip(self.states, results) if u is None],
        )


class CflAdAlgorithm(FederatedAlgorithm):
    """
    Weight-similarity clustering.

    Every clustering round, clients train from their current cluster model (the shared
    initial model in round 1), and the uploaded weights are projected onto their leading
    principal components and K-means-clustered. New cluster labels are matched onto the
    previous round's to keep model identities. Once assignments hold for
    stabilization_patience rounds they are frozen and every later round is per-cluster
    FedAvg. The standard variant is a pure autoencoder: every client trains the
    reconstruction path on benign data with alpha = 0 and uploads the encoder and
    decoder only.
    """

    def __init__(self, *args, variant: str = "enhanced", **kwargs):
        if variant not in ("standard", "enhanced"):
            raise ValueError(f"Unknown CFL-AD variant '{variant}'")
        self.variant = variant
        self.algorithm = Algorithm.CFL_ADS if variant == "standard" else Algorithm.CFL_ADE
        self.ad_only = variant == "standard"
        super().__init__(*args, **kwargs)

    def prepare(self, clients: Sequence[ClientDataset]) -> List[ClientDataset]:
        if not self.ad_only:
            return list(clients)
        return [
            replace(c, train=c.train_benign, labeled=False, alpha=0.0) for c in clients
        ]

    def _cluster(self, updates: List[ClientUpdate], t: int) -> ClusterAssignment:
        width = self.server.models[0].param_count(include_classifier=not self.ad_only)
        vectors = np.vstack([u.weights[:width] for u in updates])
        labels = weight_pca_kmeans(vectors, self.K, rng_for(self.seed, t, STREAM_KMEANS))
        assignment = {u.client_id: int(label) for u, label in zip(updates, labels)}
        previous = self.server.assignment
        for state in self.states:
            assignment.setdefault(state.client_id, previous.get(state.client_id, 0))
        return align_labels(assignment, previous, self.K)

    def run_round(self) -> RoundLog:
        t = self.server.round + 1
        previous = self.server.assignment
        assignment = {c.client_id: previous.get(c.client_id, 0) for c in self.clients}
        results = train_assigned(
            self.server, self.states, assignment, self.hyper, self.seed, t, self.workers
        )
        updates = [u for u in results if u is not None]
        flops = {
            s.client_id: self._train_flops(self.server.models[assignment[s.client_id]], s)
            for s in self.states
        }

        phase = Phase.STABILIZED
        models = self.server.models
        history = [*self.server.assignment_history, assignment]
        stabilized = self.server.stabilized
        if not stabilized:
            phase = Phase.CLUSTERING
            assignment = self._cluster(updates, t)
            if len(models) < self.K:
                models = [models[0]] * self.K
            updates = [replace(u, model_index=assignment[u.client_id]) for u in updates]
            history = [*self.server.assignment_history, assignment]
            stabilized = check_stabilization(history, self.hyper.stabilization_patience)
            sizes = np.bincount(list(assignment.values()), minlength=self.K).tolist()
            self.logger.debug(f"Round {t} weight clustering sizes: {sizes}")
            if stabilized:
                self.logger.info(f"Weight clustering stable after round {t}: sizes {sizes}")
        self.server = replace(
            self.server,
            models=aggregate_models(models, updates),
            round=t,
            assignment_history=history,
            stabilized=stabilized,
        )
        return RoundLog(
            round=t,
            phase=phase,
            assignment=assignment,
            stabilized=stabilized,
            flops=flops,
            skipped=[s.client_id for s, u in zip(self.states, results) if u is None],
        )


ALGORITHMS = {
    Algorithm.CLAD: CladAlgorithm,
    Algorithm.LOCAL: LocalAlgorithm,
    Algorithm.FEDAVG: FedAvgAlgorithm,
    Algorithm.IFCA: IfcaAlgorithm,
}


def build_algorithm(
    algorithm: Algorithm,
    config: DM2AConfig,
    clients: Sequence[ClientDataset],
    hyper: TrainHyper,
    K: int,
    seed: int,
    workers: int = 1,
    record_weights: bool = False,
) -> FederatedAlgorithm:
    algorithm = Algorithm(algorithm)
    kwargs = dict(K=K, seed=seed, workers=workers, record_weights=record_weights)
    if algorithm in (Algorithm.CFL_ADS, Algorithm.CFL_ADE):
        variant = "standard" if algorithm == Algorithm.CFL_ADS else "enhanced"
        return CflAdAlgorithm(config, clients, hyper, variant=variant, **kwargs)
    return ALGORITHMS[algorithm](config, clients, hyper, **kwargs)


def run_experiment(
    algorithm: Algorithm,
    clients: Sequence[ClientDataset],
    hyper: TrainHyper,
    K: int,
    seed: int,
    config: DM2AConfig,
    workers: int = 1,
    record_weights: bool = False,
) -> ExperimentResult:
    """Run one algorithm for hyper.max_rounds rounds and return its logs and ledger."""
    return build_algorithm(
        algorithm, config, clients, hyper, K, seed, workers, record_weights
    ).run()


def run_cfl_ad(
    variant: str,
    clients: Sequence[ClientDataset],
    hyper: TrainHyper,
    K: int,
    seed: int,
    config: DM2AConfig,
    workers: int = 1,
) -> ExperimentResult:
    return CflAdAlgorithm(
        config, clients, hyper, K=K, seed=seed, workers=workers, variant=variant
    ).run()
