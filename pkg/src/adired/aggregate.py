"""Multi-scale feature aggregation.

One vector per scale: the global scale comes from the whole image, the two
local scales from element-wise max pooling over their patch features.  Each
scale vector is L2-normalized and the three are concatenated in the fixed
order [global, coarse, fine].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adired.backends import BackendDescriptor, FeatureVector, extract_features
from adired.regions import COARSE, FINE, RegionSet, crop_region

GLOBAL = "global"
SCALE_ORDER = (GLOBAL, COARSE, FINE)


@dataclass(frozen=True)
class ScaleSpec:
    scale_id: str  # GLOBAL | COARSE | FINE
    extractor: BackendDescriptor

    def __post_init__(self):
        if self.scale_id not in SCALE_ORDER:
            raise ValueError(f"unknown scale {self.scale_id!r}")


@dataclass(frozen=True)
class ImageRepresentation:
    per_scale: dict  # scale_id -> L2-normalized np.ndarray
    concatenated: np.ndarray
    image_id: str = ""

    @property
    def dim(self) -> int:
        return self.concatenated.shape[0]


def intra_scale_pool(vectors) -> FeatureVector:
    """Element-wise maximum over a non-empty list of equal-dim vectors."""
    if not vectors:
        raise ValueError("cannot pool an empty feature list")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"mixed feature dimensions {sorted(dims)}")
    stacked = np.stack([v.values for v in vectors])
    return FeatureVector(stacked.max(axis=0), vectors[0].extractor_id)


def l2_normalize(values: np.ndarray) -> np.ndarray:
    """v / ||v||; the all-zero vector stays zero."""
    values = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(values)
    if norm == 0.0:
        return values.copy()
    return values / norm


def build_representation(image: np.ndarray, regions: RegionSet,
                         scales, image_id: str = "",
                         include_local: bool = True) -> ImageRepresentation:
    """Assemble [global, coarse, fine] normalized blocks for one image.

    With include_local=False only the global block is produced (single-scale
    baseline).
    """
    by_scale = {s.scale_id: s for s in scales}
    per_scale = {}
    blocks = []
    order = SCALE_ORDER if include_local else (GLOBAL,)
    for scale_id in order:
        spec = by_scale[scale_id]
        if scale_id == GLOBAL:
            pooled = extract_features(image, spec.extractor).values
        else:
            feats = [extract_features(crop_region(image, p), spec.extractor)
                     for p in regions.per_scale(scale_id)]
            pooled = intra_scale_pool(feats).values
        block = l2_normalize(pooled)
        per_scale[scale_id] = block
        blocks.append(block)
    return ImageRepresentation(per_scale=per_scale,
                               concatenated=np.concatenate(blocks),
                               image_id=image_id)
