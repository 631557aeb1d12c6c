"""Matplotlib figures rendered next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_threshold_sweep(rows, path) -> None:
    """Accuracy vs threshold, annotated with avg regions/image per point."""
    thresholds = [r[0] for r in rows]
    accuracies = [r[1] for r in rows]
    regions = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thresholds, accuracies, marker="o", color="tab:blue")
    for t, acc, avg in zip(thresholds, accuracies, regions):
        ax.annotate(f"{avg:.2f}", (t, acc), textcoords="offset points",
                    xytext=(0, 8), ha="center", fontsize=8)
    ax.set_xlabel("threshold T")
    ax.set_ylabel("accuracy (%)")
    ax.set_title("Accuracy vs selection threshold\n"
                 "(labels: avg regions per image)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_class_region_stats(rows, path) -> None:
    """Horizontal bars of mean selected regions per image for each class."""
    rows = sorted(rows, key=lambda r: r[1])
    labels = [r[0] for r in rows]
    means = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.4 * len(rows) + 1.5)))
    ax.barh(labels, means, color="tab:green")
    for i, mean in enumerate(means):
        ax.text(mean, i, f" {mean:.2f}", va="center", fontsize=8)
    ax.set_xlabel("mean regions per image")
    ax.set_title("Adaptive region counts by class")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
