import os

import numpy as np
import pytest

from adired import backends as be
from adired import pipeline as pl
from adired.synthetic import make_dataset


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    """The bundled 4-class planted-motif dataset: 200 train / 200 test."""
    root = tmp_path_factory.mktemp("synthetic")
    make_dataset(root, images_per_class_per_split=50)
    return str(root)


@pytest.fixture(scope="session")
def synthetic_manifest(synthetic_root):
    return pl.ingest_dataset(os.path.join(synthetic_root, "manifest.csv"))


@pytest.fixture(scope="session")
def synthetic_config(synthetic_root):
    return pl.load_config(os.path.join(synthetic_root, "config.yaml"))


def make_toy_disnet(path, channel_weights, filter_bias, class_weights,
                    grid_size=4, resolution=(64, 64), labels=None):
    be.write_toy_file(path, {
        "input_resolution": np.array(resolution, dtype=float),
        "grid_size": np.array(float(grid_size)),
        "channel_weights": np.asarray(channel_weights, dtype=float),
        "filter_bias": np.asarray(filter_bias, dtype=float),
        "class_weights": np.asarray(class_weights, dtype=float),
    })
    if labels:
        with open(str(path) + ".labels", "w", encoding="utf-8") as fh:
            fh.write("\n".join(labels) + "\n")
    return be.load_model(path, "disnet")


def make_toy_extractor(path, bins, channel_mix, resolution=(64, 64),
                       mix_bias=None, relu=False):
    tensors = {
        "input_resolution": np.array(resolution, dtype=float),
        "bins": np.asarray(bins, dtype=float),
        "channel_mix": np.asarray(channel_mix, dtype=float),
    }
    if mix_bias is not None:
        tensors["mix_bias"] = np.asarray(mix_bias, dtype=float)
    if relu:
        tensors["relu"] = np.array(1.0)
    be.write_toy_file(path, tensors)
    return be.load_model(path, "feature-extractor")


def random_toy_instance(rng, n_filters=None, grid=None, n_classes=None):
    """A random (ActivationStack, ClassifierWeights) pair for oracle checks."""
    n_filters = n_filters or int(rng.integers(1, 6))
    grid = grid or int(rng.integers(3, 15))
    n_classes = n_classes or int(rng.integers(2, 5))
    acts = be.ActivationStack(rng.normal(size=(n_filters, grid, grid)))
    weights = be.ClassifierWeights(
        rng.normal(size=(n_classes, n_filters)),
        tuple(f"c{i}" for i in range(n_classes)))
    return acts, weights
