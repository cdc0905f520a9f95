"""Tests for local training, server aggregation and the federated algorithms."""

import math
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from clad_sim.data.partition import PartitionSpec, build_population, mark_unlabeled
from clad_sim.data.synthetic import SyntheticSpec, synth_generate
from clad_sim.evaluation.accounting import LOSS_ENTRY_BYTES, Algorithm, Phase, payload_size
from clad_sim.exceptions import ConfigurationError, ShapeError
from clad_sim.federation.algorithms import build_algorithm, run_experiment
from clad_sim.federation.client import (
    AD_PATH_CLASSIFIER,
    AD_PATH_THRESHOLD,
    ClientState,
    ClientUpdate,
    TrainHyper,
    evaluate_client,
    local_train,
    train_loss,
)
from clad_sim.federation.server import (
    aggregate_cluster,
    check_stabilization,
    clad_round,
    init_server,
    map_clients,
    stabilized_round,
)
from clad_sim.models.dm2a import (
    AnomalyStatus,
    DM2AConfig,
    build_model,
    calibrate_threshold,
    infer_unlabeled,
)

METRICS = ("cls_f1", "cls_acc", "ad_f1", "ad_f1_classifier", "ad_f1_threshold")


@pytest.fixture(scope="module")
def config():
    return DM2AConfig(input_dim=20, encoder_widths=(16, 12, 8), num_classes=4)


@pytest.fixture(scope="module")
def clients():
    spec = SyntheticSpec(
        num_clusters=3,
        feature_dim=20,
        attack_classes=3,
        cluster_separation=0.5,
        intra_noise=0.03,
        attack_shift=0.2,
        seed=7,
        samples_per_class=200,
    )
    return build_population(
        synth_generate(spec), PartitionSpec(clients_per_device=2, samples_per_client=100)
    )


@pytest.fixture
def hyper():
    return TrainHyper(local_epochs=1, batch_size=32, max_rounds=3)


def _update(cid, value, n):
    return ClientUpdate(cid, 0, np.array([float(value)]), n)


class TestTrainHyper:
    """Test training hyperparameter validation."""

    def test_defaults_are_valid(self):
        assert TrainHyper().problems() == []

    def test_invalid_values(self):
        hyper = TrainHyper(local_epochs=-1, batch_size=0, learning_rate=0.0)
        assert len(hyper.problems()) == 3
        with pytest.raises(ConfigurationError):
            hyper.validate()


class TestLocalTraining:
    """Test one client's local optimisation."""

    def test_zero_epochs_returns_input_weights(self, config, clients):
        model = build_model(config, 0)
        update = local_train(ClientState(clients[0]), model, TrainHyper(local_epochs=0), 0, 1)
        np.testing.assert_array_equal(update.weights, model.flatten())
        assert update.n_samples == len(clients[0].train)

    def test_unlabeled_client_never_touches_classifier(self, config, clients):
        client = mark_unlabeled(clients, 1.0, 0)[0]
        model = build_model(config, 0)
        update = local_train(ClientState(client), model, TrainHyper(local_epochs=2), 0, 1)
        head = model.param_count() - model.param_count(include_classifier=False)
        np.testing.assert_array_equal(update.weights[-head:], model.flatten()[-head:])
        assert not np.array_equal(update.weights[:-head], model.flatten()[:-head])

    def test_training_lowers_train_loss(self, config, clients):
        model = build_model(config, 0)
        client = clients[0]
        update = local_train(ClientState(client), model, TrainHyper(local_epochs=5), 0, 1)
        assert train_loss(client, model.with_vector(update.weights)) < train_loss(client, model)

    def test_deterministic(self, config, clients, hyper):
        model = build_model(config, 0)
        a = local_train(ClientState(clients[1]), model, hyper, 3, 2)
        b = local_train(ClientState(clients[1]), model, hyper, 3, 2)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_empty_train_set_is_skipped(self, config, clients, hyper):
        client = replace(clients[0], train=clients[0].train.subset([]))
        assert local_train(ClientState(client), build_model(config, 0), hyper, 0, 1) is None


class TestEvaluation:
    """Test the two anomaly-detection paths."""

    def test_labeled_client_uses_classifier(self, config, clients):
        result = evaluate_client(clients[0], build_model(config, 0))
        assert result.ad_path == AD_PATH_CLASSIFIER
        assert 0.0 <= result.cls_f1 <= 1.0
        assert -1.0 <= result.mcc <= 1.0

    def test_unlabeled_client_uses_threshold(self, config, clients):
        client = mark_unlabeled(clients, 1.0, 0)[0]
        result = evaluate_client(client, build_model(config, 0))
        assert result.ad_path == AD_PATH_THRESHOLD
        assert result.cls_f1 is None
        assert result.tau >= 0.0
        assert 0.0 <= result.ad_f1 <= 1.0

    def test_ad_only_forces_threshold(self, config, clients):
        result = evaluate_client(clients[0], build_model(config, 0), ad_only=True)
        assert result.ad_path == AD_PATH_THRESHOLD


class TestAggregation:
    """Test sample-weighted cluster averaging."""

    def test_weighted_mean(self):
        """n = 100 at weight 1 and n = 300 at weight 5 average to 4."""
        result = aggregate_cluster([_update(0, 1.0, 100), _update(1, 5.0, 300)])
        assert result[0] == pytest.approx(4.0)

    def test_single_member_is_verbatim(self):
        update = ClientUpdate(4, 0, np.array([0.1, 0.2, 0.3]), 17)
        np.testing.assert_array_equal(aggregate_cluster([update]), update.weights)

    def test_order_independent(self):
        updates = [_update(i, 0.1 * i + 0.3, 10 + i) for i in range(6)]
        a = aggregate_cluster(updates)
        b = aggregate_cluster(list(reversed(updates)))
        assert a.tobytes() == b.tobytes()

    def test_empty_cluster_keeps_fallback(self):
        fallback = np.array([1.0, 2.0])
        np.testing.assert_array_equal(aggregate_cluster([], fallback), fallback)
        with pytest.raises(ShapeError):
            aggregate_cluster([])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            aggregate_cluster([_update(0, 1.0, 1), ClientUpdate(1, 0, np.zeros(2), 1)])


class TestServer:
    """Test server state and the CLAD round functions."""

    def test_stabilization(self):
        a, b = {0: 0, 1: 1}, {0: 1, 1: 0}
        assert check_stabilization([a, a, a], 3)
        assert check_stabilization([b, a, a, a], 3)
        assert not check_stabilization([a, b, a], 3)
        assert not check_stabilization([a, a], 3)

    def test_init_server(self, config):
        server = init_server(config, 3, 0)
        assert server.K == 3
        assert not np.array_equal(server.models[0].flatten(), server.models[1].flatten())
        again = init_server(config, 3, 0)
        for m, n in zip(server.models, again.models):
            np.testing.assert_array_equal(m.flatten(), n.flatten())
        with pytest.raises(ValueError):
            init_server(config, 0, 0)

    def test_clad_round(self, config, clients, hyper):
        server = init_server(config, 2, 0)
        states = [ClientState(c) for c in clients]
        server, log = clad_round(server, states, hyper, 0)
        assert server.round == 1
        assert log.phase == Phase.CLUSTERING
        assert sorted(log.assignment) == [c.client_id for c in clients]
        assert set(log.assignment.values()) <= {0, 1}
        assert all(v.shape == (2,) for v in log.loss_vectors.values())

    def test_round_functions_follow_phase(self, config, clients, hyper):
        server = init_server(config, 2, 0)
        states = [ClientState(c) for c in clients]
        with pytest.raises(ValueError):
            stabilized_round(server, states, hyper, 0)
        with pytest.raises(ValueError):
            clad_round(replace(server, stabilized=True), states, hyper, 0)

    def test_map_clients_keeps_order(self):
        items = list(range(20))
        assert map_clients(lambda x: x * x, items, workers=4) == [x * x for x in items]


class TestAlgorithms:
    """Test the full round loop of each algorithm."""

    def test_round_zero_and_length(self, config, clients, hyper):
        result = run_experiment(Algorithm.FEDAVG, clients, hyper, 1, 0, config)
        assert [log.round for log in result.logs] == [0, 1, 2, 3]
        assert result.logs[0].phase == Phase.INITIAL
        assert result.logs[0].cumulative_bytes == 0

    def test_clad_with_one_cluster_is_fedavg(self, config, clients):
        """K = 1 CLAD produces bit-identical models to FedAvg, round by round."""
        hyper = TrainHyper(local_epochs=1, max_rounds=5)
        clad = run_experiment(Algorithm.CLAD, clients, hyper, 1, 0, config, record_weights=True)
        fedavg = run_experiment(
            Algorithm.FEDAVG, clients, hyper, 1, 0, config, record_weights=True
        )
        for a, b in zip(clad.logs, fedavg.logs):
            assert a.model_vectors[0].tobytes() == b.model_vectors[0].tobytes()
        assert clad.final.stabilized

    def test_worker_count_does_not_change_results(self, config, clients, hyper):
        one = run_experiment(Algorithm.CLAD, clients, hyper, 2, 0, config, workers=1)
        four = run_experiment(Algorithm.CLAD, clients, hyper, 2, 0, config, workers=4)
        for a, b in zip(one.models, four.models):
            assert a.flatten().tobytes() == b.flatten().tobytes()
        assert one.final.assignment == four.final.assignment

    def test_fedavg_bytes(self, config, clients, hyper):
        result = run_experiment(Algorithm.FEDAVG, clients, hyper, 1, 0, config)
        size = payload_size(result.models[0])
        assert result.final.cumulative_bytes == 2 * size * hyper.max_rounds

    def test_local_bytes(self, config, clients, hyper):
        result = run_experiment(Algorithm.LOCAL, clients, hyper, 1, 0, config)
        assert result.final.cumulative_bytes == payload_size(result.models[0])
        assert len(result.models) == len(clients)

    def test_clad_clustering_round_bytes(self, config, clients, hyper):
        K = 2
        result = run_experiment(Algorithm.CLAD, clients, hyper, K, 0, config)
        size = payload_size(result.models[0])
        assert result.logs[1].cumulative_bytes == K * size + size + K * LOSS_ENTRY_BYTES

    def test_clad_stabilized_rounds_cost_two_models(self, config, clients):
        hyper = TrainHyper(local_epochs=1, max_rounds=5)
        result = run_experiment(Algorithm.CLAD, clients, hyper, 1, 0, config)
        size = payload_size(result.models[0])
        phases = [log.phase for log in result.logs]
        assert phases[-1] == Phase.STABILIZED
        last, previous = result.logs[-1], result.logs[-2]
        assert last.cumulative_bytes - previous.cumulative_bytes == 2 * size

    def test_ifca_picks_lowest_loss_model(self, config, clients, hyper):
        K = 3
        initial = init_server(config, K, 0).models
        result = run_experiment(Algorithm.IFCA, clients, replace(hyper, max_rounds=1), K, 0, config)
        for client in clients:
            losses = [train_loss(client, m) for m in initial]
            assert result.logs[1].assignment[client.client_id] == int(np.argmin(losses))

    def test_cfl_standard_is_detection_only(self, config, clients, hyper):
        algorithm = build_algorithm(Algorithm.CFL_ADS, config, clients, hyper, 2, 0)
        result = algorithm.run()
        assert result.ledger.model_bytes == payload_size(result.models[0], include_classifier=False)
        for log in result.logs:
            assert math.isnan(log.metrics["cls_f1"])
            assert 0.0 <= log.metrics["ad_f1"] <= 1.0

    def test_ifca_stability_is_latched(self, config, clients, hyper):
        """A client switching models after stability was declared does not undo it."""
        algorithm = build_algorithm(Algorithm.IFCA, config, clients, hyper, 2, 0)
        settled = {c.client_id: 0 for c in clients}
        algorithm.server = replace(
            algorithm.server, assignment_history=[settled] * 3, stabilized=True, round=3
        )
        preferred = algorithm.server.models[1]
        with patch(
            "clad_sim.federation.algorithms.train_loss",
            side_effect=lambda client, model: 0.0 if model is preferred else 1.0,
        ):
            log = algorithm.run_round()
        assert set(log.assignment.values()) == {1}
        assert not check_stabilization(algorithm.server.assignment_history, 3)
        assert log.stabilized
        assert algorithm.server.stabilized

    def test_cfl_enhanced_reclusters_until_stable(self, config, clients):
        hyper = TrainHyper(local_epochs=1, max_rounds=8, stabilization_patience=2)
        result = run_experiment(Algorithm.CFL_ADE, clients, hyper, 2, 0, config)
        phases = [log.phase for log in result.logs[1:]]
        assert phases[0] == Phase.CLUSTERING
        clustering = [log for log in result.logs[1:] if log.phase == Phase.CLUSTERING]
        assert len(clustering) >= hyper.stabilization_patience
        # stability needs identical assignments in the last patience clustering rounds
        if Phase.STABILIZED in phases:
            first = phases.index(Phase.STABILIZED)
            assert all(p == Phase.STABILIZED for p in phases[first:])
            window = clustering[-hyper.stabilization_patience :]
            assert all(log.assignment == window[0].assignment for log in window)
            assert clustering[-1].stabilized
            frozen = [log.assignment for log in result.logs[1 + first :]]
            assert all(a == clustering[-1].assignment for a in frozen)
        stabilized = [log.stabilized for log in result.logs[1:]]
        assert stabilized == sorted(stabilized)

    def test_cfl_keeps_clustering_while_assignments_change(self, config, clients, hyper):
        """Alternating weight clusterings never reach stability."""
        flips = iter([0, 1] * 10)

        def alternating(weights, K, seed):
            flip = next(flips)
            return np.array([(i + flip) % K for i in range(len(weights))])

        with patch(
            "clad_sim.federation.algorithms.weight_pca_kmeans", side_effect=alternating
        ), patch(
            "clad_sim.federation.algorithms.align_labels",
            side_effect=lambda assignment, previous, K: dict(assignment),
        ):
            result = run_experiment(Algorithm.CFL_ADE, clients, hyper, 2, 0, config)
        assert [log.phase for log in result.logs[1:]] == [Phase.CLUSTERING] * 3
        assert not result.final.stabilized
        assert result.logs[1].assignment != result.logs[2].assignment

    def test_cfl_freezes_after_patience_identical_clusterings(self, config, clients):
        hyper = TrainHyper(local_epochs=1, max_rounds=4, stabilization_patience=2)
        def fixed(weights, K, seed):
            return np.arange(len(weights)) % K

        with patch("clad_sim.federation.algorithms.weight_pca_kmeans", side_effect=fixed):
            result = run_experiment(Algorithm.CFL_ADE, clients, hyper, 2, 0, config)
        assert [log.phase for log in result.logs[1:]] == [
            Phase.CLUSTERING,
            Phase.CLUSTERING,
            Phase.STABILIZED,
            Phase.STABILIZED,
        ]
        assert [log.stabilized for log in result.logs[1:]] == [False, True, True, True]
        assert len({tuple(sorted(log.assignment.items())) for log in result.logs[1:]}) == 1

    @pytest.mark.parametrize("algorithm", list(Algorithm))
    def test_metrics_in_range(self, config, clients, hyper, algorithm):
        result = run_experiment(algorithm, clients, replace(hyper, max_rounds=2), 2, 0, config)
        for log in result.logs:
            for name in METRICS:
                value = log.metrics[name]
                assert math.isnan(value) or 0.0 <= value <= 1.0
            assert math.isnan(log.metrics["mcc"]) or -1.0 <= log.metrics["mcc"] <= 1.0
        purity = result.final.metrics["assignment_purity"]
        assert math.isnan(purity) != algorithm.clustered


@pytest.mark.slow
class TestClusterRecovery:
    """End-to-end recovery of ground-truth device types."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_clad_recovers_device_types(self, config, seed):
        spec = SyntheticSpec(
            num_clusters=5,
            feature_dim=20,
            attack_classes=3,
            cluster_separation=0.5,
            intra_noise=0.03,
            attack_shift=0.2,
            seed=11,
            samples_per_class=300,
        )
        population = build_population(
            synth_generate(spec),
            PartitionSpec(clients_per_device=5, samples_per_client=100, seed=seed),
        )
        hyper = TrainHyper(local_epochs=1, max_rounds=10)
        result = run_experiment(Algorithm.CLAD, population, hyper, 5, seed, config)
        assert result.final.metrics["assignment_purity"] == 1.0
        assert result.final.stabilized


def _heterogeneous_population(unlabeled_fraction):
    spec = SyntheticSpec(
        num_clusters=5,
        feature_dim=20,
        attack_classes=3,
        cluster_separation=0.5,
        intra_noise=0.03,
        attack_shift=0.2,
        samples_per_class=1000,
        conflicting_attacks=True,
        seed=7,
    )
    partition = PartitionSpec(
        clients_per_device=5, samples_per_client=400, unlabeled_fraction=unlabeled_fraction
    )
    return build_population(synth_generate(spec), partition)


@pytest.mark.slow
class TestHeterogeneityTrends:
    """Clustered training against the baselines on conflicting device types."""

    HYPER = TrainHyper(
        local_epochs=2, batch_size=32, max_rounds=20, learning_rate=0.01, weight_decay=1e-4
    )
    K = 5

    @pytest.fixture(scope="class")
    def labeled(self):
        return _heterogeneous_population(0.0)

    @pytest.fixture(scope="class")
    def mostly_unlabeled(self):
        return _heterogeneous_population(0.8)

    def _final(self, algorithm, clients, config):
        return run_experiment(algorithm, clients, self.HYPER, self.K, 0, config).final.metrics

    def test_clad_beats_fedavg_on_classification(self, config, labeled):
        clad = self._final(Algorithm.CLAD, labeled, config)
        fedavg = self._final(Algorithm.FEDAVG, labeled, config)
        assert clad["cls_f1"] >= fedavg["cls_f1"] + 0.05

    def test_unlabeled_majority(self, config, mostly_unlabeled):
        """With 80% unlabeled clients CLAD still leads on detection and classification."""
        clad = self._final(Algorithm.CLAD, mostly_unlabeled, config)
        fedavg = self._final(Algorithm.FEDAVG, mostly_unlabeled, config)
        local = self._final(Algorithm.LOCAL, mostly_unlabeled, config)
        assert clad["ad_f1"] > fedavg["ad_f1"]
        assert clad["ad_f1"] > local["ad_f1"]
        assert clad["cls_f1"] >= local["cls_f1"] + 0.10

    def test_threshold_path_flags_attacks(self, config, mostly_unlabeled):
        algorithm = build_algorithm(
            Algorithm.CLAD, config, mostly_unlabeled, self.HYPER, self.K, 0
        )
        algorithm.run()
        flagged = attacks = 0
        for client in mostly_unlabeled:
            if client.labeled:
                continue
            model = algorithm.model_for(client.client_id)
            tau = calibrate_threshold(model, client.benign_val.features)
            statuses = infer_unlabeled(model, client.test.features, tau)
            is_attack = client.test.labels != 0
            attacks += int(is_attack.sum())
            flagged += int((statuses[is_attack] == AnomalyStatus.ANOMALOUS).sum())
        assert attacks > 0
        assert flagged / attacks >= 0.9
