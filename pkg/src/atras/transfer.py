"""Cross-architecture attack transferability.

Adversarial examples are crafted once per source model and every target
model is evaluated on them, filling an n x n accuracy matrix whose
diagonal is each model's own robust accuracy. Transfer strength is
reported as target accuracy (lower = stronger transfer); the markdown
view adds the derived success-rate view (clean accuracy minus cell) and
a one-line verdict comparing how much small-source rows degrade targets
versus large-source rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .errors import DimensionMismatch, InvalidConfig
from .fgsm import AttackConfig, fgsm_batch
from .mlp import ModelParams, accuracy_on, evaluate_accuracy, parameter_count


@dataclass(frozen=True)
class TransferMatrix:
    """cells[i][j] = accuracy of target j on examples crafted against source i."""

    archs: tuple
    clean_acc: tuple[float, ...]
    cells: np.ndarray
    epsilon: float
    param_counts: tuple[int, ...]

    def __post_init__(self):
        n = len(self.archs)
        if self.cells.shape != (n, n):
            raise DimensionMismatch(f"cells shape {self.cells.shape} does not match {n} models")
        self.cells.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.archs)

    def degradation(self) -> np.ndarray:
        """Success-rate view: clean accuracy of the target minus the cell."""
        return np.asarray(self.clean_acc)[None, :] - self.cells


def cross_attack_accuracy(
    source: ModelParams, target: ModelParams, data: Dataset, cfg: AttackConfig
) -> float:
    """Accuracy of ``target`` on examples crafted with ``source`` gradients."""
    if source.arch.input_dim != target.arch.input_dim:
        raise DimensionMismatch(
            f"source input_dim {source.arch.input_dim} != target input_dim {target.arch.input_dim}"
        )
    adv = fgsm_batch(source, data.features, data.labels, cfg)
    return accuracy_on(target, adv, data.labels)


def build_transfer_matrix(models, data: Dataset, cfg: AttackConfig) -> TransferMatrix:
    """Fill all n^2 cells, crafting each source's adversarial set once.

    A single model is permitted and yields a 1x1 matrix holding its own
    robust accuracy.
    """
    models = list(models)
    if not models:
        raise InvalidConfig("transfer matrix needs at least one model")
    dims = {m.arch.input_dim for m in models}
    if len(dims) > 1 or data.dim not in dims:
        raise DimensionMismatch(f"models/data input dims do not agree: {sorted(dims)} vs data {data.dim}")

    n = len(models)
    cells = np.zeros((n, n))
    for i, source in enumerate(models):
        adv = fgsm_batch(source, data.features, data.labels, cfg)
        for j, target in enumerate(models):
            cells[i, j] = accuracy_on(target, adv, data.labels)
    return TransferMatrix(
        archs=tuple(m.arch for m in models),
        clean_acc=tuple(evaluate_accuracy(m, data) for m in models),
        cells=cells,
        epsilon=cfg.epsilon,
        param_counts=tuple(parameter_count(m.arch) for m in models),
    )


def transfer_verdict(tm: TransferMatrix) -> str:
    """Compare mean off-diagonal degradation for the smaller-half sources
    against the larger-half sources (by parameter count)."""
    if tm.n < 2:
        return "verdict: single model, no cross-model transfer to compare"
    order = np.argsort(tm.param_counts, kind="stable")
    half = tm.n // 2
    small, large = set(order[:half].tolist()), set(order[half:].tolist())
    deg = tm.degradation()
    off = ~np.eye(tm.n, dtype=bool)

    def mean_for(rows):
        mask = np.zeros_like(off)
        mask[list(rows), :] = True
        sel = mask & off
        return float(deg[sel].mean()) if sel.any() else float("nan")

    small_deg, large_deg = mean_for(small), mean_for(large)
    comparison = (
        "small-source attacks transfer at least as strongly as large-source attacks"
        if small_deg >= large_deg
        else "small-source attacks transfer less strongly than large-source attacks here"
    )
    return (
        f"verdict: mean off-diagonal degradation {small_deg:.4f} from smaller sources vs "
        f"{large_deg:.4f} from larger sources; {comparison}"
    )


def transfer_report(tm: TransferMatrix, format: str = "csv") -> str:
    """CSV (rows = sources, columns = targets) or markdown with the
    degradation view and verdict line."""
    names = [a.describe() for a in tm.archs]
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["source\\target", *names])
        for i, name in enumerate(names):
            writer.writerow([name, *(repr(float(v)) for v in tm.cells[i])])
        return buf.getvalue()
    if format != "markdown":
        raise InvalidConfig(f"unknown report format {format!r}; expected 'csv' or 'markdown'")

    lines = [f"## Transfer matrix (target accuracy under attack, epsilon={tm.epsilon})", ""]
    lines.append("| source \\ target | " + " | ".join(names) + " |")
    lines.append("|" + " --- |" * (tm.n + 1))
    for i, name in enumerate(names):
        lines.append(f"| {name} | " + " | ".join(f"{v:.4f}" for v in tm.cells[i]) + " |")
    lines += ["", "clean accuracy per target: " + ", ".join(f"{name}={a:.4f}" for name, a in zip(names, tm.clean_acc)), ""]
    deg = tm.degradation()
    lines.append("## Degradation view (clean accuracy minus attacked accuracy)")
    lines.append("")
    lines.append("| source \\ target | " + " | ".join(names) + " |")
    lines.append("|" + " --- |" * (tm.n + 1))
    for i, name in enumerate(names):
        lines.append(f"| {name} | " + " | ".join(f"{v:+.4f}" for v in deg[i]) + " |")
    lines += ["", transfer_verdict(tm)]
    return "\n".join(lines) + "\n"
