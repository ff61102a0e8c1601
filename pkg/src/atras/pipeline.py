"""Training loop, adversarial-training defense, and the four-phase
experiment protocol that produces one result row.

A full experiment on one architecture runs exactly:

  1. train a baseline on clean data        -> train_acc, test_acc
  2. attack the baseline on the test set   -> acc_when_attacked_before_adv_training
  3. adversarially train a defended model  -> adversarial_train_acc, adversarial_test_acc
  4. attack the defended model             -> acc_when_attacked_after_adv_training

Per-batch defense (the default) augments every minibatch with attacks
crafted against the current parameters; at epsilon = 0 that path
degenerates to plain training on duplicated batches (identical up to
floating-point summation order). Static defense instead crafts one
gradient-sign pass over the whole training set against the baseline,
doubles the training data with it, and retrains from a fresh
seed-derived init. Static is cheaper but measured much weaker: the
retrained model sees only the baseline's fixed perturbations, and a
fresh attack against its own gradients routinely degrades it below the
undefended baseline, while per-batch training recovers most of the
lost accuracy (e.g. 0.28 -> 0.79 attacked accuracy for a [64, 512]
MNIST model at eps 0.1 versus 0.09 for static).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .errors import InvalidConfig, NonFiniteLoss
from .fgsm import AttackConfig, fgsm_batch, robust_accuracy
from .matops import derive_seed, make_rng
from .mlp import (
    ArchitectureSpec,
    Gradients,
    ModelParams,
    backward,
    evaluate_accuracy,
    init_params,
)

log = logging.getLogger("atras.train")

OPTIMIZERS = ("sgd", "sgd_momentum", "adam")
DEFENSE_MODES = ("static", "per_batch")

# Stream tags under one experiment seed (model init uses mlp.INIT_STREAM=1).
SHUFFLE_STREAM = 2
DEFENSE_STREAM = 3

DEFAULT_LEARNING_RATE = {"mnist": 0.05, "cifar10": 0.01}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    Momentum SGD is the default: on the 5000-example MNIST split plain
    SGD at lr 0.05 plateaus near 0.933 test accuracy while momentum 0.9
    reaches 0.95+ in the same 20 epochs.
    """

    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.05
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_rule: str = "he_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfig(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass(frozen=True)
class ExperimentRecord:
    """The six accuracies of one result row plus run provenance."""

    train_acc: float
    test_acc: float
    acc_when_attacked_before_adv_training: float
    adversarial_train_acc: float
    adversarial_test_acc: float
    acc_when_attacked_after_adv_training: float
    hidden: tuple[int, ...]
    epsilon: float | None = None
    seed: int | None = None
    wall_time_seconds: float | None = None

    ACCURACY_FIELDS = (
        "train_acc",
        "test_acc",
        "acc_when_attacked_before_adv_training",
        "adversarial_train_acc",
        "adversarial_test_acc",
        "acc_when_attacked_after_adv_training",
    )

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        for name in self.ACCURACY_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name}={v} outside [0, 1]")

    @property
    def recovery_delta(self) -> float:
        return self.acc_when_attacked_after_adv_training - self.acc_when_attacked_before_adv_training

    @property
    def depth(self) -> int:
        return len(self.hidden)


class _Trainable:
    """Mutable weight holder duck-typed to ModelParams for forward/backward."""

    __slots__ = ("arch", "weights", "biases")

    def __init__(self, arch: ArchitectureSpec, weights, biases):
        self.arch = arch
        self.weights = weights
        self.biases = biases


class _Optimizer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.vel_w = self.vel_b = None
        self.m_w = self.m_b = self.v_w = self.v_b = None
        self.t = 0

    def step(self, weights: list, biases: list, grads: Gradients) -> None:
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            for w, b, gw, gb in zip(weights, biases, grads.weights, grads.biases):
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
        elif cfg.optimizer == "sgd_momentum":
            if self.vel_w is None:
                self.vel_w = [np.zeros_like(w) for w in weights]
                self.vel_b = [np.zeros_like(b) for b in biases]
            for w, b, gw, gb, vw, vb in zip(weights, biases, grads.weights, grads.biases, self.vel_w, self.vel_b):
                vw *= cfg.momentum
                vw += gw
                vb *= cfg.momentum
                vb += gb
                w -= cfg.learning_rate * vw
                b -= cfg.learning_rate * vb
        else:  # adam
            if self.m_w is None:
                self.m_w = [np.zeros_like(w) for w in weights]
                self.v_w = [np.zeros_like(w) for w in weights]
                self.m_b = [np.zeros_like(b) for b in biases]
                self.v_b = [np.zeros_like(b) for b in biases]
            self.t += 1
            b1, b2 = cfg.adam_beta1, cfg.adam_beta2
            corr1 = 1.0 - b1**self.t
            corr2 = 1.0 - b2**self.t
            for w, b, gw, gb, mw, vw, mb, vb in zip(
                weights, biases, grads.weights, grads.biases, self.m_w, self.v_w, self.m_b, self.v_b
            ):
                mw *= b1
                mw += (1 - b1) * gw
                vw *= b2
                vw += (1 - b2) * gw**2
                w -= cfg.learning_rate * (mw / corr1) / (np.sqrt(vw / corr2) + cfg.adam_eps)
                mb *= b1
                mb += (1 - b1) * gb
                vb *= b2
                vb += (1 - b2) * gb**2
                b -= cfg.learning_rate * (mb / corr1) / (np.sqrt(vb / corr2) + cfg.adam_eps)


def _fit(
    arch: ArchitectureSpec,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    init: ModelParams,
    shuffle_rng: np.random.Generator,
    phase: str,
    per_batch_attack=None,
    loss_history: list | None = None,
) -> _Trainable:
    """Minibatch gradient descent with per-epoch seeded shuffling.

    Raises NonFiniteLoss (tagged with ``phase``) the moment a batch loss
    stops being finite, rather than silently training on NaN.
    """
    model = _Trainable(arch, [w.copy() for w in init.weights], [b.copy() for b in init.biases])
    opt = _Optimizer(cfg)
    n = features.shape[0]
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = features[idx], labels[idx]
            if per_batch_attack is not None:
                xb = np.concatenate([xb, per_batch_attack(model, xb, yb)])
                yb = np.concatenate([yb, yb])
            loss, grads, _ = backward(model, xb, yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite loss in {phase} at epoch {epoch + 1}, batch {start // cfg.batch_size}",
                    phase=phase,
                )
            if loss_history is not None:
                loss_history.append(loss)
            opt.step(model.weights, model.biases, grads)
            epoch_loss += loss * len(idx)
        log.info("%s epoch %d/%d mean loss %.6f", phase, epoch + 1, cfg.epochs, epoch_loss / n)
    return model


def _freeze(model: _Trainable, init_seed: int) -> ModelParams:
    return ModelParams(
        arch=model.arch, weights=tuple(model.weights), biases=tuple(model.biases), init_seed=init_seed
    )


def train(
    arch: ArchitectureSpec,
    data: tuple[Dataset, Dataset],
    cfg: TrainConfig,
    loss_history: list | None = None,
) -> tuple[ModelParams, float, float]:
    """Train a baseline model; returns (params, train_acc, test_acc)."""
    train_set, test_set = data
    init = init_params(arch, cfg.seed, cfg.init_rule)
    model = _fit(
        arch,
        train_set.features,
        train_set.labels,
        cfg,
        init,
        make_rng(cfg.seed, SHUFFLE_STREAM),
        phase="train",
        loss_history=loss_history,
    )
    params = _freeze(model, cfg.seed)
    return params, evaluate_accuracy(params, train_set), evaluate_accuracy(params, test_set)


def adversarial_training(
    arch: ArchitectureSpec,
    data: tuple[Dataset, Dataset],
    cfg: TrainConfig,
    attack: AttackConfig,
    mode: str = "per_batch",
    baseline: ModelParams | None = None,
    finetune: bool = False,
    loss_history: list | None = None,
) -> tuple[ModelParams, float, float]:
    """Train a defended model; returns (params, clean train/test accuracy).

    per_batch (default): every minibatch is half clean, half attacks
    crafted against the current parameters; needs no baseline.

    static: one attack pass over the whole training set against the
    baseline model, clean + adversarial concatenated (2n examples, labels
    preserved), fresh model trained from a seed-derived init (or from the
    baseline weights when ``finetune``).
    """
    if mode not in DEFENSE_MODES:
        raise InvalidConfig(f"defense mode must be one of {DEFENSE_MODES}, got {mode!r}")
    train_set, test_set = data
    defense_seed = derive_seed(cfg.seed, DEFENSE_STREAM)
    per_batch_attack = None

    if mode == "static":
        if baseline is None:
            raise InvalidConfig("static adversarial training needs a baseline model to craft attacks against")
        adv = fgsm_batch(baseline, train_set.features, train_set.labels, attack)
        features = np.concatenate([train_set.features, adv])
        labels = np.concatenate([train_set.labels, train_set.labels])
    else:
        features, labels = train_set.features, train_set.labels
        per_batch_attack = lambda model, xb, yb: fgsm_batch(model, xb, yb, attack)

    init = baseline if finetune and baseline is not None else init_params(arch, defense_seed, cfg.init_rule)
    model = _fit(
        arch,
        features,
        labels,
        cfg,
        init,
        make_rng(defense_seed, SHUFFLE_STREAM),
        phase="adversarial_training",
        per_batch_attack=per_batch_attack,
        loss_history=loss_history,
    )
    params = _freeze(model, defense_seed)
    return params, evaluate_accuracy(params, train_set), evaluate_accuracy(params, test_set)


def run_experiment(
    arch: ArchitectureSpec,
    data: tuple[Dataset, Dataset],
    cfg: TrainConfig,
    attack: AttackConfig,
    mode: str = "per_batch",
    checkpoint_dir=None,
    attack_split: str = "test",
) -> ExperimentRecord:
    """Execute the four-phase protocol and assemble one record.

    Attacked accuracies are measured on the test split by default
    (``attack_split="train"`` switches them to the training split). A
    NonFiniteLoss from either training phase propagates with its phase
    tag so sweeps can log the failure and move on. With
    ``checkpoint_dir`` set, the baseline and defended models are
    persisted there per phase.
    """
    if attack_split not in ("test", "train"):
        raise InvalidConfig(f"attack_split must be 'test' or 'train', got {attack_split!r}")
    attacked_set = data[1] if attack_split == "test" else data[0]
    started = time.perf_counter()

    params, train_acc, test_acc = train(arch, data, cfg)
    attacked_before = robust_accuracy(params, attacked_set, attack)
    defended, adv_train_acc, adv_test_acc = adversarial_training(
        arch, data, cfg, attack, mode=mode, baseline=params
    )
    attacked_after = robust_accuracy(defended, attacked_set, attack)

    if checkpoint_dir is not None:
        from pathlib import Path

        from .mlp import save_checkpoint

        out = Path(checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = "-".join(str(w) for w in arch.hidden)
        save_checkpoint(params, out / f"{stem}_baseline.atras")
        save_checkpoint(defended, out / f"{stem}_defended.atras")

    record = ExperimentRecord(
        train_acc=train_acc,
        test_acc=test_acc,
        acc_when_attacked_before_adv_training=attacked_before,
        adversarial_train_acc=adv_train_acc,
        adversarial_test_acc=adv_test_acc,
        acc_when_attacked_after_adv_training=attacked_after,
        hidden=arch.hidden,
        epsilon=attack.epsilon,
        seed=cfg.seed,
        wall_time_seconds=time.perf_counter() - started,
    )
    log.info("experiment %s done in %.1fs", arch.describe(), record.wall_time_seconds)
    return record
