"""Gradient-sign attack generation and robust-accuracy evaluation.

Untargeted mode (the pipeline default) ascends the true-label loss:

    x' = clip(x + eps * sign(grad_x loss(x, y_true)))

Targeted mode descends the loss toward a chosen target label:

    x' = clip(x - eps * sign(grad_x loss(x, t)))

Perturbations are bounded per pixel by eps and the result is clamped to
the valid pixel range, so ||x' - x||_inf <= eps always holds. Pixels
with exactly zero gradient are left untouched (sign(0) = 0).

For the linear (no-hidden-layer) model the untargeted step provably
never decreases any per-sample loss (convexity). No such guarantee
exists for nonlinear models, and a larger eps does not imply lower
robust accuracy either; neither is asserted anywhere.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import container
from .datasets import Dataset
from .errors import InvalidConfig
from .matops import clip, elementwise
from .mlp import ModelParams, accuracy_on, backward

DEFAULT_EPSILON = {"mnist": 0.1, "cifar10": 8.0 / 255.0}


@dataclass(frozen=True)
class AttackConfig:
    """Perturbation budget and mode; target_label=None means untargeted."""

    epsilon: float
    target_label: int | None = None
    clip_lo: float = 0.0
    clip_hi: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidConfig(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.clip_lo < self.clip_hi:
            raise InvalidConfig(f"clip bounds must satisfy lo < hi, got [{self.clip_lo}, {self.clip_hi}]")
        if self.target_label is not None and not 0 <= self.target_label <= 9:
            raise InvalidConfig(f"target_label must lie in 0..9, got {self.target_label}")

    @property
    def targeted(self) -> bool:
        return self.target_label is not None


_attack_calls = 0
_attack_lock = threading.Lock()


def attack_call_count() -> int:
    """Number of fgsm_batch invocations since the last reset (test hook)."""
    return _attack_calls


def reset_attack_call_count() -> None:
    global _attack_calls
    with _attack_lock:
        _attack_calls = 0


def fgsm_batch(params: ModelParams, batch: np.ndarray, labels, cfg: AttackConfig) -> np.ndarray:
    """Perturb a batch along the per-pixel gradient sign.

    ``labels`` are the true labels in untargeted mode; in targeted mode
    they are ignored in favor of cfg.target_label.
    """
    global _attack_calls
    with _attack_lock:
        _attack_calls += 1
    batch = np.asarray(batch, dtype=np.float64)
    if cfg.targeted:
        labels = np.full(batch.shape[0], cfg.target_label, dtype=np.int64)
        direction = -1.0
    else:
        labels = np.asarray(labels)
        direction = 1.0
    _, _, input_grad = backward(params, batch, labels)
    return clip(batch + direction * cfg.epsilon * elementwise(input_grad, "sign"), cfg.clip_lo, cfg.clip_hi)


def robust_accuracy(params: ModelParams, data: Dataset, cfg: AttackConfig, source: ModelParams | None = None) -> float:
    """Accuracy of ``params`` on adversarially perturbed data.

    The attack is crafted against ``params`` itself unless a distinct
    ``source`` model is supplied (the cross-model transfer case).
    """
    crafted_on = params if source is None else source
    adv = fgsm_batch(crafted_on, data.features, data.labels, cfg)
    return accuracy_on(params, adv, data.labels)


def save_adversarial_batch(path, images: np.ndarray, labels, cfg: AttackConfig) -> None:
    """Dump a perturbed batch (with labels and budget) for offline inspection."""
    meta = {
        "epsilon": cfg.epsilon,
        "target_label": cfg.target_label,
        "clip_lo": cfg.clip_lo,
        "clip_hi": cfg.clip_hi,
    }
    arrays = {
        "images": np.asarray(images, dtype=np.float64),
        "labels": np.asarray(labels, dtype=np.float64),
    }
    container.write_container(path, "adversarial_batch", meta, arrays)


def load_adversarial_batch(path) -> tuple[np.ndarray, np.ndarray, AttackConfig]:
    header, arrays = container.read_container(path, expect_kind="adversarial_batch")
    meta = header["meta"]
    cfg = AttackConfig(
        epsilon=meta["epsilon"],
        target_label=meta["target_label"],
        clip_lo=meta["clip_lo"],
        clip_hi=meta["clip_hi"],
    )
    return arrays["images"], arrays["labels"].astype(np.int64), cfg
