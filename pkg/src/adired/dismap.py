"""Discriminative maps: weighted sums of activation maps, normalized to [0,255].

The map for class c at grid cell (x, y) is the classifier-weighted sum of
the filter activations at that cell; its mean over the grid equals the
class score of the GAP classifier (bias fixed at zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adired.backends import ActivationStack, ClassifierWeights, ShapeMismatchError

GROUND_TRUTH = "ground-truth"
PREDICTED = "predicted"


@dataclass(frozen=True)
class DisMap:
    """Raw and [0,255]-normalized discriminative grid for one chosen class."""

    raw: np.ndarray
    normalized: np.ndarray
    class_used: int
    class_source: str  # GROUND_TRUTH | PREDICTED

    @property
    def grid_size(self) -> int:
        return self.raw.shape[0]


def compute_dismap(acts: ActivationStack, w: ClassifierWeights, c: int) -> np.ndarray:
    """Class-c discriminative grid: sum_f w[c, f] * maps[f] (shape l x l)."""
    if w.num_filters != acts.num_filters:
        raise ShapeMismatchError(
            f"{acts.num_filters} activation maps vs {w.num_filters} weight columns"
        )
    if not 0 <= c < w.num_classes:
        raise IndexError(f"class index {c} out of range [0, {w.num_classes})")
    return np.tensordot(w.weights[c], acts.maps, axes=1)


def gap_score(acts: ActivationStack, w: ClassifierWeights, c: int) -> float:
    """Class score of the GAP classifier (bias 0): mean of the class-c grid."""
    grid = compute_dismap(acts, w, c)
    return float(grid.sum() / grid.size)


def normalize_map(grid: np.ndarray) -> np.ndarray:
    """Affine min-max rescale to [0, 255]; a constant grid maps to all zeros."""
    grid = np.asarray(grid, dtype=np.float64)
    lo = grid.min()
    hi = grid.max()
    if hi == lo:
        return np.zeros_like(grid)
    return (grid - lo) * (255.0 / (hi - lo))


def select_dismap_class(ground_truth, disnet_labels, predicted: int):
    """Class to build the map from: ground truth when the DisNet knows the
    label, otherwise the DisNet's own prediction."""
    if ground_truth is not None:
        labels = list(disnet_labels)
        if ground_truth in labels:
            return labels.index(ground_truth), GROUND_TRUTH
    return predicted, PREDICTED


def make_dismap(acts, w, ground_truth, predicted) -> DisMap:
    """Full per-image map construction: class choice, raw grid, normalization."""
    c, source = select_dismap_class(ground_truth, w.class_labels, predicted)
    raw = compute_dismap(acts, w, c)
    return DisMap(raw=raw, normalized=normalize_map(raw), class_used=c,
                  class_source=source)


def dump_dismap_csv(dismap: DisMap, path, which: str = "normalized") -> None:
    """Write a grid as CSV, row-major, six decimal places."""
    grid = dismap.normalized if which == "normalized" else dismap.raw
    with open(path, "w", encoding="utf-8") as fh:
        for row in grid:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")
