import numpy as np
import pytest

from atras.errors import DimensionMismatch, InvalidConfig
from atras.fgsm import (
    AttackConfig,
    attack_call_count,
    reset_attack_call_count,
    robust_accuracy,
)
from atras.mlp import ArchitectureSpec, evaluate_accuracy, init_params
from atras.transfer import (
    build_transfer_matrix,
    cross_attack_accuracy,
    transfer_report,
    transfer_verdict,
)

from conftest import synth_pair


@pytest.fixture
def models_and_data():
    train_set, test_set = synth_pair(400, 250, dim=32, seed=31)
    archs = [(8,), (16, 16), (32, 32)]
    from atras.pipeline import TrainConfig, train

    models = [
        train(ArchitectureSpec(hidden=h, input_dim=32), (train_set, test_set),
              TrainConfig(epochs=8, batch_size=32, learning_rate=0.1, seed=40 + i))[0]
        for i, h in enumerate(archs)
    ]
    return models, test_set


class TestCrossAttack:
    def test_source_equals_target_reduces_to_robust_accuracy(self, models_and_data):
        models, data = models_and_data
        cfg = AttackConfig(epsilon=0.1)
        assert cross_attack_accuracy(models[0], models[0], data, cfg) == robust_accuracy(
            models[0], data, cfg
        )

    def test_epsilon_zero_equals_clean(self, models_and_data):
        models, data = models_and_data
        cfg = AttackConfig(epsilon=0.0)
        assert cross_attack_accuracy(models[0], models[1], data, cfg) == evaluate_accuracy(
            models[1], data
        )

    def test_dim_mismatch(self, models_and_data):
        models, data = models_and_data
        other = init_params(ArchitectureSpec(hidden=(4,), input_dim=7), seed=0)
        with pytest.raises(DimensionMismatch):
            cross_attack_accuracy(models[0], other, data, AttackConfig(epsilon=0.1))


class TestTransferMatrix:
    def test_diagonal_equals_robust_accuracy_exactly(self, models_and_data):
        models, data = models_and_data
        cfg = AttackConfig(epsilon=0.1)
        tm = build_transfer_matrix(models, data, cfg)
        for i, m in enumerate(models):
            assert tm.cells[i, i] == robust_accuracy(m, data, cfg)

    def test_epsilon_zero_columns_constant_at_clean(self, models_and_data):
        models, data = models_and_data
        tm = build_transfer_matrix(models, data, AttackConfig(epsilon=0.0))
        for j, m in enumerate(models):
            clean = evaluate_accuracy(m, data)
            assert np.all(tm.cells[:, j] == clean)
            assert tm.clean_acc[j] == clean

    def test_attack_generation_reused_across_targets(self, models_and_data):
        models, data = models_and_data
        reset_attack_call_count()
        tm = build_transfer_matrix(models, data, AttackConfig(epsilon=0.1))
        assert tm.cells.shape == (3, 3)
        assert attack_call_count() == 3  # one adversarial set per source

    def test_single_model_matrix(self, models_and_data):
        models, data = models_and_data
        cfg = AttackConfig(epsilon=0.1)
        tm = build_transfer_matrix(models[:1], data, cfg)
        assert tm.cells.shape == (1, 1)
        assert tm.cells[0, 0] == robust_accuracy(models[0], data, cfg)

    def test_deterministic(self, models_and_data):
        models, data = models_and_data
        cfg = AttackConfig(epsilon=0.1)
        a = build_transfer_matrix(models, data, cfg)
        b = build_transfer_matrix(models, data, cfg)
        assert np.array_equal(a.cells, b.cells)

    def test_no_models_rejected(self, models_and_data):
        _, data = models_and_data
        with pytest.raises(InvalidConfig):
            build_transfer_matrix([], data, AttackConfig(epsilon=0.1))

    def test_cells_in_unit_interval(self, models_and_data):
        models, data = models_and_data
        tm = build_transfer_matrix(models, data, AttackConfig(epsilon=0.15))
        assert np.all((tm.cells >= 0.0) & (tm.cells <= 1.0))


class TestTransferReport:
    def test_csv_layout(self, models_and_data):
        models, data = models_and_data
        tm = build_transfer_matrix(models, data, AttackConfig(epsilon=0.1))
        text = transfer_report(tm, format="csv")
        lines = text.strip().split("\n")
        assert len(lines) == 4  # header + one row per source
        assert lines[0].startswith("source\\target,")
        assert "[16, 16]" in lines[0]

    def test_markdown_has_degradation_and_verdict(self, models_and_data):
        models, data = models_and_data
        tm = build_transfer_matrix(models, data, AttackConfig(epsilon=0.1))
        md = transfer_report(tm, format="markdown")
        assert "Degradation view" in md
        assert "verdict:" in md
        assert transfer_verdict(tm) in md

    def test_verdict_single_model(self, models_and_data):
        models, data = models_and_data
        tm = build_transfer_matrix(models[:1], data, AttackConfig(epsilon=0.1))
        assert "single model" in transfer_verdict(tm)
