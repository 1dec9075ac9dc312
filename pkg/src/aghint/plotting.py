"""Figures written next to the CSV/JSON outputs of the command-line tools."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _bucket_labels(boundaries: Sequence[float]) -> list[str]:
    return [f"{lo:.1f}-{hi:.1f}" for lo, hi in zip(boundaries[:-1], boundaries[1:])]


def plot_profile(counts: Sequence[int], boundaries: Sequence[float], path,
                 accuracy: Optional[Sequence[Optional[float]]] = None) -> Path:
    """Node count per disparity bucket, with per-bucket accuracy if predictions were given."""
    labels = _bucket_labels(boundaries)
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x, counts, color="#8fb3d9", label="targets")
    ax.set_xticks(x, labels)
    ax.set_xlabel("normalized neighborhood disparity")
    ax.set_ylabel("number of targets")
    if accuracy is not None:
        ax2 = ax.twinx()
        acc = [np.nan if a is None else a for a in accuracy]
        ax2.plot(x, acc, "o-", color="#c0392b", label="accuracy")
        ax2.set_ylim(0, 1.05)
        ax2.set_ylabel("accuracy")
    return _save(fig, path)


def plot_case_study(study, path, labels: tuple[str, str] = ("a", "b")) -> Path:
    """Grouped per-bucket Micro-F1 bars of both models, with the delta annotated."""
    rows = study.rows
    x = np.arange(len(rows))
    a = [np.nan if r.micro_a is None else r.micro_a for r in rows]
    b = [np.nan if r.micro_b is None else r.micro_b for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(x - 0.2, a, 0.4, label=labels[0])
    ax.bar(x + 0.2, b, 0.4, label=labels[1])
    for xi, r in zip(x, rows):
        if r.delta is not None:
            ax.annotate(f"{100 * r.delta:+.1f}", (xi, max(r.micro_a, r.micro_b)),
                        textcoords="offset points", xytext=(0, 3), ha="center", fontsize=8)
    ax.set_xticks(x, [f"{r.lower:.1f}-{r.upper:.1f}\n(n={r.count})" for r in rows])
    ax.set_ylim(0, 1.1)
    ax.set_xlabel("normalized neighborhood disparity")
    ax.set_ylabel("test Micro-F1")
    ax.legend(loc="lower left")
    return _save(fig, path)


def plot_training(loss_history: Sequence[float], val_history: Sequence[float], path,
                  best_epoch: Optional[int] = None) -> Path:
    """Training loss and validation Macro-F1 per epoch."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lines = ax.plot(np.arange(len(loss_history)), loss_history, color="#34495e", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if len(val_history):
        ax2 = ax.twinx()
        lines += ax2.plot(np.arange(len(val_history)), val_history, color="#27ae60", label="val Macro-F1")
        ax2.set_ylabel("validation Macro-F1")
        ax2.set_ylim(0, 1.05)
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    if best_epoch is not None and best_epoch >= 0:
        ax.axvline(best_epoch, ls="--", color="grey", lw=1)
    return _save(fig, path)


def plot_sweep(cells: Sequence[dict], path, metric: str = "micro_f1") -> Path:
    """One panel per swept parameter: metric averaged over the other parameters."""
    keys = [k for k in cells[0]["params"]] if cells else []
    keys = [k for k in keys if len({c["params"][k] for c in cells}) > 1] or keys[:1]
    fig, axes = plt.subplots(1, max(len(keys), 1), figsize=(3.2 * max(len(keys), 1), 3.2),
                             squeeze=False)
    for ax, key in zip(axes[0], keys):
        values = sorted({c["params"][key] for c in cells})
        means = [np.mean([c[metric] for c in cells if c["params"][key] == v]) for v in values]
        ax.plot(range(len(values)), means, "o-")
        ax.set_xticks(range(len(values)), [str(v) for v in values])
        ax.set_xlabel(key)
        ax.set_ylabel(metric)
    return _save(fig, path)
