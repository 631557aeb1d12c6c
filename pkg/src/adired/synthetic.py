"""Bundled synthetic dataset: four classes of color-motif images.

Each class plants a fixed number of colored square motifs (34 px) on a
noisy gray background.  Motif colors share the same grayscale intensity,
so a grayscale global view carries little class signal while color seen
up close is decisive -- the setup that separates adaptive region picking
from whole-image baselines.  Class motif counts differ (1/2/3/5) to give
per-class region statistics something to measure.

The generator also writes matched toy model fixtures (a color-detector
DisNet and three extractors) plus a manifest and a ready-to-run config.
"""

from __future__ import annotations

import csv
import os

import numpy as np
from PIL import Image

from adired.backends import write_toy_file

IMAGE_SIZE = 224
MOTIF_SIDE = 34
SLOT_JITTER = 10

# (class label, motif RGB in [0,1], motifs per image)
# colors chosen with equal channel means so grayscale pooling can't separate them
CLASS_SPECS = (
    ("ember", (0.85, 0.15, 0.15), 1),
    ("meadow", (0.15, 0.85, 0.15), 2),
    ("lagoon", (0.15, 0.15, 0.85), 3),
    ("bazaar", (0.55, 0.55, 0.05), 5),
)

BACKGROUND = 0.2
NOISE = 0.02


def _slot_centers(size: int):
    step = size / 3.0
    return [(int((i + 0.5) * step), int((j + 0.5) * step))
            for j in range(3) for i in range(3)]


def render_image(color, count: int, rng, size: int = IMAGE_SIZE) -> np.ndarray:
    """One (size, size, 3) uint8 image with `count` well-separated motifs."""
    img = BACKGROUND + rng.uniform(-NOISE, NOISE, size=(size, size, 3))
    slots = _slot_centers(size)
    chosen = rng.choice(len(slots), size=count, replace=False)
    half = MOTIF_SIDE // 2
    for idx in chosen:
        cx, cy = slots[idx]
        cx += int(rng.integers(-SLOT_JITTER, SLOT_JITTER + 1))
        cy += int(rng.integers(-SLOT_JITTER, SLOT_JITTER + 1))
        patch = np.asarray(color) + rng.uniform(
            -NOISE, NOISE, size=(MOTIF_SIDE, MOTIF_SIDE, 3))
        img[cy - half:cy - half + MOTIF_SIDE,
            cx - half:cx - half + MOTIF_SIDE] = patch
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def write_toy_models(models_dir) -> dict:
    """Write the DisNet + extractor fixtures; returns name -> path."""
    os.makedirs(models_dir, exist_ok=True)
    paths = {}

    # DisNet: four color-detector filters over a 14x14 cell grid, GAP + linear.
    # Each filter reads exactly zero on the flat gray background.
    disnet_path = os.path.join(models_dir, "disnet.toy")
    write_toy_file(disnet_path, {
        "input_resolution": np.array([IMAGE_SIZE, IMAGE_SIZE]),
        "grid_size": np.array(14.0),
        "channel_weights": np.array([
            [2.5, -1.0, -1.0],   # red
            [-1.0, 2.5, -1.0],   # green
            [-1.0, -1.0, 2.5],   # blue
            [1.5, 1.5, -2.5],    # yellow
        ]),
        "filter_bias": np.array([-0.1, -0.1, -0.1, -0.45]),
        "class_weights": np.eye(4),
    })
    with open(disnet_path + ".labels", "w", encoding="utf-8") as fh:
        fh.write("\n".join(spec[0] for spec in CLASS_SPECS) + "\n")
    paths["disnet"] = disnet_path

    # Global extractor: 8 sparse grayscale bins -- intentionally color-blind.
    global_path = os.path.join(models_dir, "global.toy")
    bins = [[r, c, 8, 8] for r in (8, 40) for c in (4, 20, 36, 52)]
    write_toy_file(global_path, {
        "input_resolution": np.array([64, 64]),
        "bins": np.array(bins, dtype=float),
        "channel_mix": np.array([[1 / 3, 1 / 3, 1 / 3]]),
    })
    paths["global"] = global_path

    # Local extractors: thresholded color detectors (same mixes as the
    # DisNet filters) over the central window of the resized patch.  The
    # ReLU zeroes the gray background so class directions stay near
    # orthogonal instead of sharing a large common component.
    detector_mix = np.array([
        [2.5, -1.0, -1.0],   # red
        [-1.0, 2.5, -1.0],   # green
        [-1.0, -1.0, 2.5],   # blue
        [1.5, 1.5, -2.5],    # yellow
    ])
    detector_bias = np.array([-0.1, -0.1, -0.1, -0.45])

    coarse_path = os.path.join(models_dir, "coarse.toy")
    write_toy_file(coarse_path, {
        "input_resolution": np.array([64, 64]),
        "bins": np.array([[16.0, 16.0, 32.0, 32.0]]),
        "channel_mix": detector_mix,
        "mix_bias": detector_bias,
        "relu": np.array(1.0),
    })
    paths["coarse"] = coarse_path

    fine_path = os.path.join(models_dir, "fine.toy")
    write_toy_file(fine_path, {
        "input_resolution": np.array([48, 48]),
        "bins": np.array([[12.0, 12.0, 24.0, 24.0]]),
        "channel_mix": detector_mix,
        "mix_bias": detector_bias,
        "relu": np.array(1.0),
    })
    paths["fine"] = fine_path
    return paths


def make_dataset(root, images_per_class_per_split: int = 50,
                 seed: int = 20240801) -> str:
    """Generate images, manifest, toy models, and config under `root`.

    Returns the manifest path.  Layout:
        root/images/<split>/<class>_<idx>.png
        root/models/{disnet,global,coarse,fine}.toy
        root/manifest.csv
        root/config.yaml
    """
    root = str(root)
    rng = np.random.default_rng(seed)
    rows = []
    for split in ("train", "test"):
        split_dir = os.path.join(root, "images", split)
        os.makedirs(split_dir, exist_ok=True)
        for label, color, count in CLASS_SPECS:
            for idx in range(images_per_class_per_split):
                rel = f"images/{split}/{label}_{idx:03d}.png"
                img = render_image(color, count, rng)
                Image.fromarray(img).save(os.path.join(root, rel))
                rows.append((rel, label, split))

    manifest_path = os.path.join(root, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["relative_path", "label", "split"])
        writer.writerows(rows)

    write_toy_models(os.path.join(root, "models"))

    with open(os.path.join(root, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(DEFAULT_CONFIG)
    return manifest_path


DEFAULT_CONFIG = """\
mode: adired            # adired | dense | random | global
seed: 7
workers: 1
cache_dir: cache
selection:
  t_coarse: 150
  t_fine: 100
  fallback_on_empty: true
models:
  disnet: models/disnet.toy
  global: models/global.toy
  coarse: models/coarse.toy
  fine: models/fine.toy
svm:
  c: 0.02
  max_epochs: 200
  tol: 1.0e-8
  seed: 7
"""
