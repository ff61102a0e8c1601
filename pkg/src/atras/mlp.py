"""Fully-connected classifier over a configurable hidden-width list.

One architecture candidate is just the ordered list of hidden-layer
widths; the model is affine -> activation repeated, ending in an affine
map to 10 logits trained with softmax cross-entropy. Besides parameter
gradients, the backward pass returns the gradient of the loss w.r.t.
the input batch, which is what a gradient-sign attack consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .datasets import Dataset
from .errors import DimensionMismatch, InvalidArchitecture
from .matops import elementwise, make_rng, matmul, softmax_cross_entropy

NUM_CLASSES = 10
ACTIVATIONS = ("relu", "tanh")
INIT_RULES = ("he_uniform", "xavier_uniform")

# Stream tag separating parameter-init draws from other consumers of the
# same seed (epoch shuffling etc. use their own tags).
INIT_STREAM = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    """One MLP candidate: hidden widths, input width, class count.

    An empty hidden list is permitted and yields a plain linear softmax
    model, which has closed-form gradients and a convex loss; several
    tests rely on that degenerate case.
    """

    hidden: tuple[int, ...]
    input_dim: int
    num_classes: int = NUM_CLASSES  # both shipped datasets are 10-class
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if any(w < 1 for w in self.hidden):
            raise InvalidArchitecture(f"hidden widths must be >= 1, got {self.hidden}")
        if self.input_dim < 1:
            raise InvalidArchitecture(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise InvalidArchitecture(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArchitecture(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """Per-layer (fan_in, fan_out) chain: input -> hidden... -> classes."""
        widths = [self.input_dim, *self.hidden, self.num_classes]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def depth(self) -> int:
        """Hidden-layer count, the grouping key for recovery statistics."""
        return len(self.hidden)

    def describe(self) -> str:
        return "[" + ", ".join(str(w) for w in self.hidden) + "]"


def parameter_count(arch: ArchitectureSpec) -> int:
    return sum(fi * fo + fo for fi, fo in arch.layer_dims)


@dataclass(frozen=True)
class ModelParams:
    """Trained weights/biases for one architecture; immutable once built."""

    arch: ArchitectureSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    init_seed: int = 0

    def __post_init__(self):
        expected = self.arch.layer_dims
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise InvalidArchitecture(
                f"parameter list length {len(self.weights)} does not match {len(expected)} layers"
            )
        for (fi, fo), w, b in zip(expected, self.weights, self.biases):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise DimensionMismatch(f"layer shapes {w.shape}/{b.shape} do not chain as ({fi}, {fo})")
            w.setflags(write=False)
            b.setflags(write=False)


@dataclass
class ForwardTrace:
    """Backprop bookkeeping: layer inputs and pre-activations for one batch."""

    inputs: list = field(default_factory=list)  # inputs[k] feeds layer k
    pre: list = field(default_factory=list)  # pre[k] = inputs[k] @ W_k + b_k


@dataclass(frozen=True)
class Gradients:
    """Parameter gradients shaped exactly like their ModelParams."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init_params(arch: ArchitectureSpec, seed: int, rule: str = "he_uniform") -> ModelParams:
    """Seeded uniform init: He bound sqrt(6/fan_in) (default, matched to
    relu) or Xavier bound sqrt(6/(fan_in+fan_out)); biases zero."""
    if rule not in INIT_RULES:
        raise InvalidArchitecture(f"init rule must be one of {INIT_RULES}, got {rule!r}")
    rng = make_rng(seed, INIT_STREAM)
    weights = []
    biases = []
    for fi, fo in arch.layer_dims:
        bound = np.sqrt(6.0 / fi) if rule == "he_uniform" else np.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return ModelParams(arch=arch, weights=tuple(weights), biases=tuple(biases), init_seed=seed)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return elementwise(z, "relu") if activation == "relu" else np.tanh(z)


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return elementwise(z, "relu_mask")
    return 1.0 - np.tanh(z) ** 2


def forward(params: ModelParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Logits (rows x num_classes) plus the trace needed for backward."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.arch.input_dim:
        raise DimensionMismatch(
            f"batch shape {batch.shape} does not match input_dim {params.arch.input_dim}"
        )
    trace = ForwardTrace()
    a = batch
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        trace.inputs.append(a)
        z = matmul(a, w) + b
        trace.pre.append(z)
        a = z if k == last else _activate(z, params.arch.activation)
    return a, trace


def backward(params: ModelParams, batch: np.ndarray, labels) -> tuple[float, Gradients, np.ndarray]:
    """Mean cross-entropy loss with gradients w.r.t. parameters and input."""
    logits, trace = forward(params, batch)
    loss, _, delta = softmax_cross_entropy(logits, labels)

    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for k in range(len(params.weights) - 1, -1, -1):
        grads_w[k] = matmul(trace.inputs[k].T, delta)
        grads_b[k] = delta.sum(axis=0)
        delta = matmul(delta, params.weights[k].T)
        if k > 0:
            delta = delta * _activation_grad(trace.pre[k - 1], params.arch.activation)
    return loss, Gradients(weights=tuple(grads_w), biases=tuple(grads_b)), delta


def predict(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    logits, _ = forward(params, batch)
    return np.argmax(logits, axis=1)


def accuracy_on(params: ModelParams, features: np.ndarray, labels) -> float:
    return float(np.mean(predict(params, features) == np.asarray(labels)))


def evaluate_accuracy(params: ModelParams, data: Dataset) -> float:
    """Fraction of examples whose argmax logit matches the label."""
    return accuracy_on(params, data.features, data.labels)


def save_checkpoint(params: ModelParams, path) -> None:
    """Persist a model to the versioned binary container format."""
    arrays = {}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{k}"] = w
        arrays[f"b{k}"] = b
    meta = {
        "hidden": list(params.arch.hidden),
        "input_dim": params.arch.input_dim,
        "num_classes": params.arch.num_classes,
        "activation": params.arch.activation,
        "init_seed": params.init_seed,
    }
    container.write_container(path, "model", meta, arrays)


def load_checkpoint(path) -> ModelParams:
    header, arrays = container.read_container(path, expect_kind="model")
    meta = header["meta"]
    arch = ArchitectureSpec(
        hidden=tuple(meta["hidden"]),
        input_dim=meta["input_dim"],
        num_classes=meta["num_classes"],
        activation=meta.get("activation", "relu"),
    )
    layers = len(arch.layer_dims)
    weights = tuple(arrays[f"w{k}"] for k in range(layers))
    biases = tuple(arrays[f"b{k}"] for k in range(layers))
    return ModelParams(arch=arch, weights=weights, biases=biases, init_seed=meta.get("init_seed", 0))
