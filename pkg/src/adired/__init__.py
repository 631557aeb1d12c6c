"""Adaptive discriminative-region discovery for scene recognition.

The pipeline turns a GAP-classifier's activation maps into a per-image
discriminative map, selects a variable number of square regions from its
thresholded local maxima, aggregates multi-scale deep features by max
pooling, and classifies with a one-vs-rest linear SVM.
"""

from adired.backends import (
    ActivationStack,
    BackendDescriptor,
    BackendError,
    ClassifierWeights,
    FeatureVector,
    load_model,
)
from adired.dismap import (
    DisMap,
    compute_dismap,
    gap_score,
    normalize_map,
    select_dismap_class,
)
from adired.regions import (
    GridPeak,
    Patch,
    RegionSet,
    SelectionConfig,
    crop_patch,
    dedup_equal_peaks,
    find_local_maxima,
    grid_to_pixel,
    sample_dense,
    sample_random,
    select_regions,
    threshold_peaks,
)
from adired.aggregate import (
    ImageRepresentation,
    ScaleSpec,
    build_representation,
    intra_scale_pool,
    l2_normalize,
)
from adired.svm import SvmModel, TrainConfig, accuracy, predict, train

__all__ = [
    "ActivationStack",
    "BackendDescriptor",
    "BackendError",
    "ClassifierWeights",
    "FeatureVector",
    "load_model",
    "DisMap",
    "compute_dismap",
    "gap_score",
    "normalize_map",
    "select_dismap_class",
    "GridPeak",
    "Patch",
    "RegionSet",
    "SelectionConfig",
    "crop_patch",
    "dedup_equal_peaks",
    "find_local_maxima",
    "grid_to_pixel",
    "sample_dense",
    "sample_random",
    "select_regions",
    "threshold_peaks",
    "ImageRepresentation",
    "ScaleSpec",
    "build_representation",
    "intra_scale_pool",
    "l2_normalize",
    "SvmModel",
    "TrainConfig",
    "accuracy",
    "predict",
    "train",
]
