"""Tests for communication and computation accounting."""

import pytest

from clad_sim.evaluation.accounting import (
    GFLOP,
    LOSS_ENTRY_BYTES,
    MIB,
    Algorithm,
    CostLedger,
    Phase,
    Resource,
    format_bytes,
    last_within_budget,
    metric_at_budget,
    model_bytes,
    parse_budget,
    record_round,
    round_bytes,
    training_flops,
)
from clad_sim.exceptions import ConfigurationError
from clad_sim.models.dm2a import DM2AConfig, ForwardMode, build_model, training_flops_per_sample

CIC_BYTES = model_bytes(33453)


class TestModelBytes:
    """Test payload sizes."""

    def test_four_bytes_per_parameter(self):
        assert model_bytes(33800) == 135200
        assert model_bytes(33453) == 133812
        assert model_bytes(0) == 0

    def test_format(self):
        assert format_bytes(135200) == "0.129 MB"


class TestRoundBytes:
    """Test per-round download and upload by algorithm and phase."""

    def test_clad_clustering(self):
        """All K models down; one model plus K loss entries up."""
        assert round_bytes(Algorithm.CLAD, Phase.CLUSTERING, 5, 100) == (500, 100 + 5 * 8)

    def test_clad_stabilized(self):
        assert round_bytes(Algorithm.CLAD, Phase.STABILIZED, 5, 100) == (100, 100)

    def test_ifca(self):
        assert round_bytes(Algorithm.IFCA, Phase.CLUSTERING, 3, 100) == (300, 100)

    def test_fedavg_and_cfl(self):
        assert round_bytes(Algorithm.FEDAVG, Phase.TRAINING, 5, 100) == (100, 100)
        assert round_bytes(Algorithm.CFL_ADE, Phase.CLUSTERING, 5, 100) == (100, 100)

    def test_local(self):
        """Local training pays only the initial download."""
        assert round_bytes(Algorithm.LOCAL, Phase.INITIAL, 1, 100) == (100, 0)
        assert round_bytes(Algorithm.LOCAL, Phase.TRAINING, 1, 100) == (0, 0)

    def test_initial_round_is_free_for_federated(self):
        assert round_bytes(Algorithm.FEDAVG, Phase.INITIAL, 1, 100) == (0, 0)


class TestLedger:
    """Test cumulative per-client charging."""

    def _run(self, algorithm, phases, K=1, clients=(0, 1)):
        ledger = CostLedger(list(clients), CIC_BYTES)
        for t, phase in enumerate(phases):
            record_round(ledger, algorithm, phase, K, list(clients))
            ledger.close_round(t, phase)
        return ledger

    def test_fedavg_hundred_rounds(self):
        """100 FedAvg rounds of the CIC model cost 25-27 MB per client."""
        ledger = self._run(Algorithm.FEDAVG, [Phase.INITIAL] + [Phase.TRAINING] * 100)
        assert ledger.total_bytes(0) == 2 * CIC_BYTES * 100
        assert 25 * MIB <= ledger.mean_bytes <= 27 * MIB

    def test_local_pays_once(self):
        ledger = self._run(Algorithm.LOCAL, [Phase.INITIAL] + [Phase.TRAINING] * 10)
        assert ledger.total_bytes(1) == CIC_BYTES

    def test_clad_saves_after_stabilization(self):
        """Each stabilized round costs (K - 1) models plus K loss entries less."""
        K = 5
        clustering = self._run(Algorithm.CLAD, [Phase.INITIAL, Phase.CLUSTERING], K)
        stabilized = self._run(Algorithm.CLAD, [Phase.INITIAL, Phase.STABILIZED], K)
        saving = clustering.total_bytes(0) - stabilized.total_bytes(0)
        assert saving == (K - 1) * CIC_BYTES + K * LOSS_ENTRY_BYTES

    def test_snapshots_are_cumulative(self):
        ledger = self._run(Algorithm.FEDAVG, [Phase.INITIAL] + [Phase.TRAINING] * 3)
        means = [s.mean_bytes for s in ledger.snapshots]
        assert means == [0, 2 * CIC_BYTES, 4 * CIC_BYTES, 6 * CIC_BYTES]

    def test_negative_charge(self):
        ledger = CostLedger([0], 100)
        with pytest.raises(ValueError):
            ledger.charge(0, down=-1)

    def test_flops_mean(self):
        ledger = CostLedger([0, 1], 100)
        ledger.charge(0, flops=30)
        ledger.charge(1, flops=10)
        assert ledger.close_round(1, Phase.TRAINING).mean_flops == 20


class TestTrainingFlops:
    """Test local training FLOPs."""

    def test_epochs_times_samples(self):
        model = build_model(DM2AConfig(input_dim=20, encoder_widths=(16, 12, 8), num_classes=4), 0)
        per_sample = training_flops_per_sample(model, ForwardMode.DUAL)
        assert training_flops(model, 0.8, 100, 5) == 5 * 100 * per_sample

    def test_alpha_zero_skips_classifier(self):
        model = build_model(DM2AConfig(input_dim=20, encoder_widths=(16, 12, 8), num_classes=4), 0)
        per_sample = training_flops_per_sample(model, ForwardMode.RECONSTRUCTION)
        assert training_flops(model, 0.0, 10, 1) == 10 * per_sample


class TestBudgets:
    """Test budget parsing and budget-matched lookups."""

    def test_parse_megabytes(self):
        budget = parse_budget("13MB")
        assert budget.resource == Resource.BYTES
        assert budget.amount == 13 * MIB
        assert budget.label == "13MB"

    def test_parse_gflop(self):
        budget = parse_budget("20GFLOP")
        assert budget.resource == Resource.FLOPS
        assert budget.amount == 20 * GFLOP

    def test_bare_number_is_megabytes(self):
        assert parse_budget("2.5").amount == 2.5 * MIB

    def test_unparseable(self):
        with pytest.raises(ConfigurationError):
            parse_budget("lots")

    def test_last_within_budget(self):
        costs = [0, 10, 20, 30]
        assert last_within_budget(costs, 5) == 0
        assert last_within_budget(costs, 20) == 2
        assert last_within_budget(costs, 100) == 3

    def test_metric_at_budget(self):
        """Picks the last round that fits; falls back to round 0."""
        ledger = CostLedger([0], 100)
        logs = []
        for t in range(4):
            phase = Phase.INITIAL if t == 0 else Phase.TRAINING
            record_round(ledger, Algorithm.FEDAVG, phase, 1, [0])
            ledger.close_round(t, phase)
            logs.append(f"round {t}")
        assert metric_at_budget(logs, ledger, 450) == "round 2"
        assert metric_at_budget(logs, ledger, 50) == "round 0"
        assert metric_at_budget(logs, ledger, 10**9) == "round 3"

    def test_metric_at_budget_misaligned(self):
        ledger = CostLedger([0], 100)
        with pytest.raises(ValueError):
            metric_at_budget(["round 0"], ledger, 10)


class TestAlgorithmEnum:
    def test_clustered(self):
        assert Algorithm.CLAD.clustered
        assert Algorithm.IFCA.clustered
        assert not Algorithm.FEDAVG.clustered
        assert not Algorithm.LOCAL.clustered
