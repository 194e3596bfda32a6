"""Static plot emission: loss/F1 curves and confusion heatmaps.

Every figure has a CSV twin holding the plotted data, so downstream
checks assert on numbers, never on pixels.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import ConfusionMatrix, NUM_CLASSES
from .trainer import TrainingHistory

CURVES = (
    ("train_loss", "training loss"),
    ("val_loss", "validation loss"),
    ("val_macro_f1", "validation macro-F1"),
)


def write_curves_csv(histories: Mapping[str, TrainingHistory], path: str | Path) -> Path:
    """Long-form `model,epoch,...` rows for every per-epoch series."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["model", "epoch", "train_loss", "val_loss", "val_macro_f1", "val_accuracy"])
        for model in sorted(histories):
            for e in histories[model].entries:
                writer.writerow(
                    [model, e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.val_macro_f1), repr(e.val_accuracy)]
                )
    return path


def plot_history(histories: Mapping[str, TrainingHistory], out_dir: str | Path) -> list[Path]:
    """One line plot per curve (multi-series when comparing models)."""
    if not histories or any(not h.entries for h in histories.values()):
        raise ValueError("history must be nonempty to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for attr, label in CURVES:
        fig, ax = plt.subplots(figsize=(6, 4))
        for model in sorted(histories):
            entries = histories[model].entries
            ax.plot([e.epoch for e in entries], [getattr(e, attr) for e in entries], marker="o", label=model)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.set_title(f"{label} per epoch")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{attr}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_confusion(confusion: ConfusionMatrix, path: str | Path, title: str = "confusion matrix") -> Path:
    """Heatmap of raw counts, rows = true level, columns = predicted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    counts = confusion.counts
    fig, ax = plt.subplots(figsize=(4.5, 4))
    image = ax.imshow(counts, cmap="Blues")
    threshold = counts.max() / 2 if counts.max() > 0 else 0
    for i in range(NUM_CLASSES):
        for j in range(NUM_CLASSES):
            ax.text(
                j, i, str(int(counts[i, j])),
                ha="center", va="center",
                color="white" if counts[i, j] > threshold else "black",
            )
    ax.set_xticks(np.arange(NUM_CLASSES))
    ax.set_yticks(np.arange(NUM_CLASSES))
    ax.set_xlabel("predicted level")
    ax.set_ylabel("true level")
    ax.set_title(title)
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
