"""Adaptive region selection from a normalized discriminative map.

Local maxima of the l x l grid (3x3 window, stride 1, ties on the border
treated as maxima) are deduplicated when equal-valued maxima share a
window, thresholded, mapped to pixel centers, and cropped as square
patches at the coarse (1/4-area) and fine (1/16-area) scales, shifted to
stay inside the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COARSE = "coarse"
FINE = "fine"

# patch side as a fraction of min(H, W): sqrt of the area fraction
SCALE_FRACTIONS = {COARSE: 0.5, FINE: 0.25}

DEFAULT_T_COARSE = 150.0
DEFAULT_T_FINE = 100.0


@dataclass(frozen=True)
class GridPeak:
    gx: int
    gy: int
    score: float


@dataclass(frozen=True)
class SelectionConfig:
    t_coarse: float = DEFAULT_T_COARSE
    t_fine: float = DEFAULT_T_FINE
    fallback_on_empty: bool = True

    def __post_init__(self):
        for name, t in (("t_coarse", self.t_coarse), ("t_fine", self.t_fine)):
            if not 0.0 <= t <= 255.0:
                raise ValueError(f"{name} must lie in [0, 255], got {t}")

    def threshold(self, scale: str) -> float:
        return self.t_coarse if scale == COARSE else self.t_fine


@dataclass(frozen=True)
class Patch:
    left: int
    top: int
    side: int
    scale: str  # COARSE | FINE
    score: float
    source_peak: GridPeak | None = None


@dataclass
class RegionSet:
    patches: list
    image_id: str = ""
    thresholds: tuple | None = None  # (t_coarse, t_fine) when adaptive

    def per_scale(self, scale: str) -> list:
        return [p for p in self.patches if p.scale == scale]

    def __len__(self):
        return len(self.patches)


def patch_side(scale: str, width: int, height: int) -> int:
    """Square side: round(fraction * min(H, W)), half-up rounding."""
    return int(math.floor(SCALE_FRACTIONS[scale] * min(width, height) + 0.5))


def find_local_maxima(grid: np.ndarray) -> list:
    """All 3x3-window local maxima of the grid, after equal-value dedup.

    A cell qualifies when its value is >= every existing neighbor (missing
    neighbors at the border count as -inf).  Result is sorted by descending
    score, ties by (gy, gx) ascending.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValueError(f"grid must be square 2-D, got shape {grid.shape}")
    l = grid.shape[0]
    if l < 3:
        raise ValueError(f"grid must be at least 3x3, got {l}x{l}")
    padded = np.full((l + 2, l + 2), -np.inf)
    padded[1:-1, 1:-1] = grid
    candidates = []
    for gy in range(l):
        for gx in range(l):
            window = padded[gy:gy + 3, gx:gx + 3]
            if grid[gy, gx] >= window.max():
                candidates.append(GridPeak(gx=gx, gy=gy, score=float(grid[gy, gx])))
    kept = dedup_equal_peaks(candidates)
    kept.sort(key=lambda p: (-p.score, p.gy, p.gx))
    return kept


def dedup_equal_peaks(candidates) -> list:
    """Row-major greedy dedup: drop a candidate whose score equals an
    already-kept peak's score within Chebyshev distance 1 (shared window)."""
    kept = []
    for cand in candidates:
        redundant = any(
            k.score == cand.score
            and max(abs(k.gx - cand.gx), abs(k.gy - cand.gy)) <= 1
            for k in kept
        )
        if not redundant:
            kept.append(cand)
    return kept


def threshold_peaks(peaks, t: float, fallback_on_empty: bool = True) -> list:
    """Peaks scoring strictly above t; optionally fall back to the single
    best peak (ties by (gy, gx)) so a scale is never left empty."""
    kept = [p for p in peaks if p.score > t]
    if not kept and fallback_on_empty and peaks:
        kept = [min(peaks, key=lambda p: (-p.score, p.gy, p.gx))]
    return kept


def grid_to_pixel(peak: GridPeak, grid_size: int, width: int, height: int):
    """Center pixel of a grid cell: floor((g + 0.5) * dim / l) per axis."""
    cx = (2 * peak.gx + 1) * width // (2 * grid_size)
    cy = (2 * peak.gy + 1) * height // (2 * grid_size)
    return cx, cy


def crop_patch(center, scale: str, width: int, height: int,
               score: float = 0.0, source_peak=None) -> Patch:
    """Square patch around a center, shifted to fall inside the image."""
    cx, cy = center
    side = patch_side(scale, width, height)
    if side > min(width, height):
        raise ValueError(f"patch side {side} exceeds image {width}x{height}")
    left = min(max(cx - side // 2, 0), width - side)
    top = min(max(cy - side // 2, 0), height - side)
    return Patch(left=left, top=top, side=side, scale=scale,
                 score=score, source_peak=source_peak)


def select_regions(normalized_grid: np.ndarray, config: SelectionConfig,
                   width: int, height: int, image_id: str = "") -> RegionSet:
    """Thresholded local maxima of the map, cropped at both local scales."""
    peaks = find_local_maxima(normalized_grid)
    l = np.asarray(normalized_grid).shape[0]
    patches = []
    for scale in (COARSE, FINE):
        kept = threshold_peaks(peaks, config.threshold(scale),
                               config.fallback_on_empty)
        for peak in kept:
            center = grid_to_pixel(peak, l, width, height)
            patches.append(crop_patch(center, scale, width, height,
                                      score=peak.score, source_peak=peak))
    return RegionSet(patches=patches, image_id=image_id,
                     thresholds=(config.t_coarse, config.t_fine))


def _grid_centers(ncols: int, nrows: int, width: int, height: int):
    for row in range(nrows):
        for col in range(ncols):
            yield ((2 * col + 1) * width // (2 * ncols),
                   (2 * row + 1) * height // (2 * nrows))


# fixed-count baselines: dense coverage grids and seeded random centers

DENSE_COARSE_GRID = (5, 2)  # cols x rows -> 10 patches
DENSE_FINE_GRID = (10, 5)  # -> 50 patches
RANDOM_PER_SCALE = 5


def sample_dense(width: int, height: int, image_id: str = "") -> RegionSet:
    """10 coarse + 50 fine patches on uniform center grids."""
    patches = []
    for scale, (ncols, nrows) in ((COARSE, DENSE_COARSE_GRID),
                                  (FINE, DENSE_FINE_GRID)):
        for center in _grid_centers(ncols, nrows, width, height):
            patches.append(crop_patch(center, scale, width, height))
    return RegionSet(patches=patches, image_id=image_id)


def sample_random(width: int, height: int, seed: int, image_id: str = "") -> RegionSet:
    """5 uniformly random patch centers per local scale, seed-reproducible."""
    rng = np.random.default_rng(seed)
    patches = []
    for scale in (COARSE, FINE):
        for _ in range(RANDOM_PER_SCALE):
            center = (int(rng.integers(0, width)), int(rng.integers(0, height)))
            patches.append(crop_patch(center, scale, width, height))
    return RegionSet(patches=patches, image_id=image_id)


def crop_region(image: np.ndarray, patch: Patch) -> np.ndarray:
    """Slice a patch out of an (H, W, 3) raster."""
    return image[patch.top:patch.top + patch.side,
                 patch.left:patch.left + patch.side]
