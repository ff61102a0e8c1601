"""Dense float64 kernels and the seeded RNG used everywhere else.

Matrices are plain 2-D ``numpy.ndarray`` objects with dtype float64,
row-major. Every public operation returns finite values for finite
inputs; training-level divergence is caught upstream.

Randomness contract: all stochastic behavior in this package flows
through :func:`make_rng`, a Philox 4x64 counter-based generator keyed
by ``numpy.random.SeedSequence(seed, spawn_key=stream)``. Philox and
SeedSequence are published, platform-independent algorithms, so a seed
plus a stream tag pins the exact value sequence. Independent streams
(model init, epoch shuffling, per-experiment substreams, ...) use
distinct stream tags instead of sharing one generator.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidBounds, LabelOutOfRange

ELEMENTWISE_FNS = ("relu", "relu_mask", "sign")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic Philox generator for (seed, stream tag) pairs.

    Two calls with equal arguments yield generators that emit identical
    sequences; distinct stream tags give statistically independent
    streams derived from the same seed.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=stream)))


def derive_seed(seed: int, *stream: int) -> int:
    """Collapse (seed, stream tag) into a fresh 64-bit seed.

    Used where an API takes a scalar seed (e.g. fresh model init for the
    defended network) but the value must be derived reproducibly from a
    parent seed.
    """
    return int(np.random.SeedSequence(seed, spawn_key=stream).generate_state(1, np.uint64)[0])


def as_matrix(m) -> np.ndarray:
    """Coerce to a 2-D float64 array, no copy when already compliant."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product; requires a.cols == b.rows."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"matmul: inner dimensions differ ({a.shape[0]}x{a.shape[1]} times {b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def elementwise(m, fn: str) -> np.ndarray:
    """Apply one of relu / relu_mask / sign entrywise.

    relu(v) = max(v, 0); relu_mask(v) = 1 if v > 0 else 0 (the relu
    derivative, 0 at the kink); sign(v) in {-1, 0, +1} with sign(0) = 0,
    so zero-gradient pixels stay untouched under a sign-based attack.
    """
    m = as_matrix(m)
    if fn == "relu":
        return np.maximum(m, 0.0)
    if fn == "relu_mask":
        return (m > 0.0).astype(np.float64)
    if fn == "sign":
        return np.sign(m)
    raise ValueError(f"unknown elementwise fn {fn!r}; expected one of {ELEMENTWISE_FNS}")


def softmax_cross_entropy(logits, labels: Sequence[int]) -> tuple[float, np.ndarray, np.ndarray]:
    """Fused softmax + mean cross-entropy with its logit gradient.

    Returns ``(loss, probs, dlogits)`` where probs rows are the
    max-subtraction-stabilized softmax of the logit rows, loss is the
    mean over rows of -ln(probs[row, label]), and
    dlogits = (probs - onehot(labels)) / rows is the gradient of that
    mean loss. The loss itself is evaluated through log-sum-exp so
    saturated rows (e.g. logits around +/-1000 from dead or overconfident
    networks) neither overflow nor produce infinities.
    """
    logits = as_matrix(logits)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.ndim != 1 or labels.shape[0] != n:
        raise DimensionMismatch(f"labels length {labels.shape} does not match {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in 0..{k - 1}")
    labels = labels.astype(np.intp)

    shifted = logits - logits.max(axis=1, keepdims=True)
    sumexp = np.exp(shifted).sum(axis=1, keepdims=True)
    logprobs = shifted - np.log(sumexp)
    probs = np.exp(logprobs)

    rows = np.arange(n)
    loss = float(-logprobs[rows, labels].mean())

    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits


def clip(m, lo: float, hi: float) -> np.ndarray:
    """Clamp every entry to [lo, hi]; requires lo <= hi."""
    if lo > hi:
        raise InvalidBounds(f"clip bounds inverted: lo={lo} > hi={hi}")
    return np.clip(as_matrix(m), lo, hi)


def onehot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    """Row-per-label one-hot float64 matrix."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRange(f"labels must lie in 0..{num_classes - 1}")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
