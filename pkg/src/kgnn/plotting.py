"""Figures for the sweep tables (Agg backend, written straight to files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweeps import SweepTable  # noqa: E402


def plot_layer_sweep(table: SweepTable, path: str | Path) -> Path:
    ts = [r["T"] for r in table.rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(ts, [100 * r["em"] for r in table.rows], "o-", label="answer EM")
    ax.plot(ts, [100 * r["joint_f1"] for r in table.rows], "s-", label="joint F1")
    chance = [100 * r["chance"] for r in table.rows]
    ax.plot(ts, chance, "k--", lw=1, label="chance EM")
    ax.set_xticks(ts)
    ax.set_xlabel("reasoning steps T")
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_paragraph_sweep(table: SweepTable, path: str | Path) -> Path:
    counts = [r["paragraphs"] for r in table.rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(counts, [100 * r["kgnn_joint_f1"] for r in table.rows], "o-", label="KGNN")
    ax.plot(counts, [100 * r["ablation_joint_f1"] for r in table.rows], "s-", label="no-graph ablation")
    ax.set_xticks(counts)
    ax.set_xlabel("paragraphs per question")
    ax.set_ylabel("joint F1 (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
