"""Matplotlib renderings that accompany the text reports.

Everything draws through the Agg backend straight to files; nothing here
opens a window. The report path writes these next to its delimited
output so a sweep's CSV, markdown, and figures land together.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sweep import DEPTH_GROUPS, RecoveryStats, aggregate_recovery, format_hidden
from .transfer import TransferMatrix


def render_recovery_figure(stats: RecoveryStats, path) -> Path:
    """Bar chart of mean recovery delta per depth group."""
    groups = [g for g in DEPTH_GROUPS if stats.means[g] is not None]
    means = [stats.means[g] for g in groups]
    counts = [len(stats.members[g]) for g in groups]

    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(groups, means, color="steelblue", alpha=0.85)
    ax.axhline(0.0, color="black", linewidth=0.8)
    for bar, mean, count in zip(bars, means, counts):
        ax.annotate(
            f"{mean:+.4f}\n(n={count})",
            (bar.get_x() + bar.get_width() / 2, mean),
            ha="center",
            va="bottom" if mean >= 0 else "top",
            fontsize=8,
        )
    ax.set_xlabel("hidden-layer count")
    ax.set_ylabel("mean recovery delta (accuracy points)")
    ax.set_title("Recovery from adversarial training by architecture depth")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_accuracy_figure(records, path) -> Path:
    """Clean vs attacked accuracies across the grid, in record order."""
    records = list(records)
    x = np.arange(len(records))
    clean = [r.test_acc for r in records]
    before = [r.acc_when_attacked_before_adv_training for r in records]
    after = [r.acc_when_attacked_after_adv_training for r in records]

    fig, ax = plt.subplots(figsize=(max(7.0, 0.28 * len(records)), 4.5))
    ax.plot(x, clean, "o-", label="clean test", color="tab:blue", markersize=4)
    ax.plot(x, before, "s--", label="attacked before defense", color="tab:red", markersize=4)
    ax.plot(x, after, "^--", label="attacked after defense", color="tab:green", markersize=4)
    ax.set_xticks(x)
    ax.set_xticklabels([format_hidden(r.hidden) for r in records], rotation=90, fontsize=6)
    ax.set_ylabel("accuracy")
    ax.set_title("Per-architecture accuracy under attack and defense")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_transfer_heatmap(tm: TransferMatrix, path) -> Path:
    """Heatmap of target accuracy per (source, target) pair."""
    names = [a.describe() for a in tm.archs]
    fig, ax = plt.subplots(figsize=(1.2 * tm.n + 3, 1.0 * tm.n + 2.5))
    im = ax.imshow(tm.cells, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(tm.n), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(tm.n), names, fontsize=8)
    ax.set_xlabel("target model")
    ax.set_ylabel("attack source model")
    ax.set_title(f"Transfer matrix (accuracy under attack, eps={tm.epsilon:g})")
    for i in range(tm.n):
        for j in range(tm.n):
            ax.text(j, i, f"{tm.cells[i, j]:.3f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8, label="accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_report_figures(records, out_dir, stem: str, stats: RecoveryStats | None = None) -> list[Path]:
    """Write the standard report figures for a record set into out_dir."""
    records = list(records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if stats is None:
        stats = aggregate_recovery(records)
    return [
        render_recovery_figure(stats, out_dir / f"{stem}_recovery.png"),
        render_accuracy_figure(records, out_dir / f"{stem}_accuracies.png"),
    ]
