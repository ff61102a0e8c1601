"""ATRAS: adversarially trained robust architecture search.

Train fully-connected classifiers over a grid of hidden-layer layouts on
MNIST and CIFAR-10, attack them with the fast gradient sign method,
defend them with adversarial training, and report per-architecture and
per-depth-group robustness/recovery statistics plus cross-architecture
attack transferability.
"""

__version__ = "0.1.0"

from .datasets import Dataset, SplitSpec, load_cifar10, load_mnist, subset_split
from .fgsm import AttackConfig, fgsm_batch, robust_accuracy
from .mlp import (
    ArchitectureSpec,
    ModelParams,
    backward,
    evaluate_accuracy,
    forward,
    init_params,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)
from .pipeline import (
    ExperimentRecord,
    TrainConfig,
    adversarial_training,
    run_experiment,
    train,
)
from .sweep import (
    RecoveryStats,
    SweepConfig,
    aggregate_recovery,
    default_grid,
    emit_report,
    load_fixture,
    parse_records_csv,
    run_sweep,
)
from .transfer import TransferMatrix, build_transfer_matrix, cross_attack_accuracy

__all__ = [
    "__version__",
    "Dataset",
    "SplitSpec",
    "load_mnist",
    "load_cifar10",
    "subset_split",
    "AttackConfig",
    "fgsm_batch",
    "robust_accuracy",
    "ArchitectureSpec",
    "ModelParams",
    "init_params",
    "forward",
    "backward",
    "evaluate_accuracy",
    "parameter_count",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "ExperimentRecord",
    "train",
    "adversarial_training",
    "run_experiment",
    "SweepConfig",
    "RecoveryStats",
    "default_grid",
    "run_sweep",
    "aggregate_recovery",
    "emit_report",
    "parse_records_csv",
    "load_fixture",
    "TransferMatrix",
    "cross_attack_accuracy",
    "build_transfer_matrix",
]
