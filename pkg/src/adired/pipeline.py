"""Experiment orchestration: manifests, configuration, caching, reports.

A pipeline run is: per image, pick regions (adaptive, dense grid, random,
or none for the global-only baseline), build the multi-scale
representation, cache it keyed by a config hash, then train and score the
one-vs-rest SVM on the manifest's train/test split.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import yaml

from adired import backends as be
from adired.aggregate import GLOBAL, ScaleSpec, build_representation
from adired.cache import _atomic_write, read_feature_cache, write_feature_cache
from adired.dismap import make_dismap
from adired.regions import (
    COARSE,
    FINE,
    RegionSet,
    SelectionConfig,
    crop_region,
    sample_dense,
    sample_random,
    select_regions,
)
from adired.svm import TrainConfig, accuracy, predict, train

MODES = ("adired", "dense", "random", "global")
CACHE_ENV_VAR = "ADIRED_CACHE_DIR"


class ConfigError(Exception):
    pass


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    relative_path: str
    label: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple

    def for_split(self, split: str):
        return [e for e in self.entries if e.split == split]

    def image_path(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.relative_path)

    @property
    def labels(self):
        return sorted({e.label for e in self.entries})


def ingest_dataset(manifest_path, root=None) -> DatasetManifest:
    """Parse and validate a manifest CSV (relative_path,label,split).

    The first row must be the header.  Rows are kept in file order.
    """
    root = os.path.abspath(root or os.path.dirname(os.path.abspath(manifest_path)))
    entries = []
    seen = set()
    with open(manifest_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["relative_path", "label", "split"]:
            raise ManifestError(
                f"{manifest_path}:1: expected header relative_path,label,split")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(
                    f"{manifest_path}:{lineno}: expected 3 fields, got {len(row)}")
            rel, label, split = (f.strip() for f in row)
            if not rel or not label or not split:
                raise ManifestError(
                    f"{manifest_path}:{lineno}: empty field")
            if rel in seen:
                raise ManifestError(
                    f"{manifest_path}:{lineno}: duplicate relative_path {rel!r}")
            seen.add(rel)
            full = os.path.join(root, rel)
            if not os.path.isfile(full):
                raise ManifestError(
                    f"{manifest_path}:{lineno}: missing file {full}")
            entries.append(ManifestEntry(rel, label, split))
    return DatasetManifest(root=root, entries=tuple(entries))


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "adired"
    seed: int = 0
    selection: SelectionConfig = SelectionConfig()
    model_paths: dict = None  # disnet/global/coarse/fine -> path
    svm: TrainConfig = TrainConfig()
    cache_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.selection.fallback_on_empty and (
                self.selection.t_coarse >= 255 or self.selection.t_fine >= 255):
            raise ConfigError(
                "fallback_on_empty=false requires thresholds below 255, "
                "otherwise a scale can end up with no regions")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def feature_hash(self) -> str:
        """Hash of every field that affects cached representations."""
        digest = hashlib.sha256()
        payload = {
            "mode": self.mode,
            "seed": self.seed,
            "selection": [self.selection.t_coarse, self.selection.t_fine,
                          self.selection.fallback_on_empty],
        }
        digest.update(json.dumps(payload, sort_keys=True).encode())
        for key in sorted(self.model_paths or {}):
            path = self.model_paths[key]
            digest.update(key.encode())
            with open(path, "rb") as fh:
                digest.update(hashlib.sha256(fh.read()).digest())
        return digest.hexdigest()[:16]


def load_config(path) -> PipelineConfig:
    """Read a YAML config; relative model/cache paths resolve against it."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    sel = raw.get("selection", {})
    selection = SelectionConfig(
        t_coarse=float(sel.get("t_coarse", 150)),
        t_fine=float(sel.get("t_fine", 100)),
        fallback_on_empty=bool(sel.get("fallback_on_empty", True)),
    )
    models = {k: resolve(str(v)) for k, v in raw.get("models", {}).items()}
    svm_raw = raw.get("svm", {})
    svm = TrainConfig(
        c=float(svm_raw.get("c", 0.02)),
        max_epochs=int(svm_raw.get("max_epochs", 1000)),
        tol=float(svm_raw.get("tol", 1e-8)),
        seed=int(svm_raw.get("seed", raw.get("seed", 0))),
    )
    cache_dir = os.environ.get(CACHE_ENV_VAR) or raw.get("cache_dir")
    if cache_dir:
        cache_dir = resolve(str(cache_dir))
    return PipelineConfig(
        mode=str(raw.get("mode", "adired")),
        seed=int(raw.get("seed", 0)),
        selection=selection,
        model_paths=models,
        svm=svm,
        cache_dir=cache_dir,
        workers=int(raw.get("workers", 1)),
    )


@dataclass
class LoadedBackends:
    disnet: be.BackendDescriptor | None
    scales: dict  # scale_id -> ScaleSpec


def load_backends(config: PipelineConfig) -> LoadedBackends:
    paths = config.model_paths or {}
    needed = [GLOBAL]
    if config.mode != "global":
        needed += [COARSE, FINE]
    scales = {}
    for scale_id in needed:
        if scale_id not in paths:
            raise ConfigError(f"config is missing models.{scale_id}")
        scales[scale_id] = ScaleSpec(
            scale_id, be.load_model(paths[scale_id], "feature-extractor"))
    disnet = None
    if config.mode == "adired":
        if "disnet" not in paths:
            raise ConfigError("adired mode requires models.disnet")
        disnet = be.load_model(paths["disnet"], "disnet")
    return LoadedBackends(disnet=disnet, scales=scales)


def _image_seed(seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def regions_for_image(image: np.ndarray, image_id: str, ground_truth,
                      config: PipelineConfig, loaded: LoadedBackends) -> RegionSet:
    """Region set under the configured sampling mode.

    `ground_truth` should be None for test images: the discriminative map
    then falls back to the DisNet's predicted class.
    """
    height, width = image.shape[:2]
    if config.mode == "dense":
        return sample_dense(width, height, image_id)
    if config.mode == "random":
        return sample_random(width, height,
                             _image_seed(config.seed, image_id), image_id)
    if config.mode == "global":
        return RegionSet(patches=[], image_id=image_id)
    acts, predicted, _scores = be.disnet_forward(image, loaded.disnet)
    dismap = make_dismap(acts, loaded.disnet.backend.classifier,
                         ground_truth, predicted)
    return select_regions(dismap.normalized, config.selection,
                          width, height, image_id)


def _compute_one(manifest, entry, config, loaded):
    image = be.load_image(manifest.image_path(entry))
    ground_truth = entry.label if entry.split == "train" else None
    regions = regions_for_image(image, entry.relative_path, ground_truth,
                                config, loaded)
    rep = build_representation(
        image, regions, loaded.scales.values(), image_id=entry.relative_path,
        include_local=(config.mode != "global"))
    return (rep.concatenated.astype(np.float32),
            len(regions.per_scale(COARSE)), len(regions.per_scale(FINE)))


def _counts_path(cache_dir, key):
    return os.path.join(cache_dir, f"regions_{key}.csv")


def _features_path(cache_dir, key):
    return os.path.join(cache_dir, f"features_{key}.bin")


def _read_counts(path) -> dict:
    counts = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for image_id, nc, nf in reader:
            counts[image_id] = (int(nc), int(nf))
    return counts


def _write_counts(path, counts: dict) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "n_coarse", "n_fine"])
    for image_id, (nc, nf) in counts.items():
        writer.writerow([image_id, nc, nf])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def materialize_features(config: PipelineConfig, manifest: DatasetManifest,
                         loaded: LoadedBackends | None = None):
    """Compute (or resume from cache) every representation and patch count.

    Returns (features: image_id -> float32 vector, counts: image_id ->
    (n_coarse, n_fine)), both in manifest order.
    """
    loaded = loaded or load_backends(config)
    features, counts = {}, {}
    fpath = cpath = None
    if config.cache_dir:
        os.makedirs(config.cache_dir, exist_ok=True)
        key = config.feature_hash()
        fpath = _features_path(config.cache_dir, key)
        cpath = _counts_path(config.cache_dir, key)
        if os.path.exists(fpath) and os.path.exists(cpath):
            features = read_feature_cache(fpath)
            counts = _read_counts(cpath)

    missing = [e for e in manifest.entries
               if e.relative_path not in features
               or e.relative_path not in counts]
    if missing:
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(
                    lambda e: _compute_one(manifest, e, config, loaded), missing))
        else:
            results = [_compute_one(manifest, e, config, loaded)
                       for e in missing]
        for entry, (vec, nc, nf) in zip(missing, results):
            features[entry.relative_path] = vec
            counts[entry.relative_path] = (nc, nf)

    # re-key in manifest order so cache bytes are deterministic
    features = {e.relative_path: features[e.relative_path]
                for e in manifest.entries}
    counts = {e.relative_path: counts[e.relative_path]
              for e in manifest.entries}
    if missing and fpath:
        write_feature_cache(fpath, features)
        _write_counts(cpath, counts)
    return features, counts


@dataclass(frozen=True)
class ExperimentReport:
    mode: str
    t_coarse: float
    t_fine: float
    accuracy: float
    avg_patches_per_image: float
    n_train: int
    n_test: int

    def csv_bytes(self) -> bytes:
        header = "mode,t_coarse,t_fine,accuracy,avg_patches_per_image,n_train,n_test\n"
        row = (f"{self.mode},{self.t_coarse:g},{self.t_fine:g},"
               f"{self.accuracy:.4f},{self.avg_patches_per_image:.4f},"
               f"{self.n_train},{self.n_test}\n")
        return (header + row).encode("utf-8")


def run_experiment(config: PipelineConfig, manifest: DatasetManifest,
                   report_path=None, train_split: str = "train",
                   test_split: str = "test") -> ExperimentReport:
    """Features -> SVM -> accuracy, plus patch-count accounting."""
    loaded = load_backends(config)
    features, counts = materialize_features(config, manifest, loaded)

    train_entries = manifest.for_split(train_split)
    test_entries = manifest.for_split(test_split)
    if not train_entries or not test_entries:
        raise ManifestError(
            f"manifest needs both {train_split!r} and {test_split!r} rows")
    model = train([(features[e.relative_path], e.label) for e in train_entries],
                  config.svm)
    predictions = [predict(model, features[e.relative_path])
                   for e in test_entries]
    acc = accuracy(predictions, [e.label for e in test_entries])
    avg = float(np.mean([sum(counts[e.relative_path])
                         for e in manifest.entries]))
    report = ExperimentReport(
        mode=config.mode, t_coarse=config.selection.t_coarse,
        t_fine=config.selection.t_fine, accuracy=acc,
        avg_patches_per_image=avg,
        n_train=len(train_entries), n_test=len(test_entries))
    if report_path:
        _atomic_write(report_path, report.csv_bytes())
    return report


def sweep_threshold(config: PipelineConfig, manifest: DatasetManifest,
                    t_values, out_csv=None):
    """Run the experiment at each threshold (applied to both local scales).

    Returns rows of (T, accuracy, avg regions/image).
    """
    rows = []
    for t in t_values:
        t = float(t)
        cfg = replace(config,
                      selection=replace(config.selection, t_coarse=t, t_fine=t))
        report = run_experiment(cfg, manifest)
        rows.append((t, report.accuracy, report.avg_patches_per_image))
    if out_csv:
        buf = "threshold,accuracy,avg_regions_per_image\n" + "".join(
            f"{t:g},{acc:.4f},{avg:.4f}\n" for t, acc, avg in rows)
        _atomic_write(out_csv, buf.encode("utf-8"))
    return rows


def per_class_region_stats(config: PipelineConfig, manifest: DatasetManifest,
                           out_csv=None):
    """Mean selected regions per image (both scales summed) for each class."""
    loaded = load_backends(config)
    per_class = {}
    for entry in manifest.entries:
        image = be.load_image(manifest.image_path(entry))
        ground_truth = entry.label if entry.split == "train" else None
        regions = regions_for_image(image, entry.relative_path, ground_truth,
                                    config, loaded)
        per_class.setdefault(entry.label, []).append(len(regions))
    rows = [(label, float(np.mean(counts)))
            for label, counts in sorted(per_class.items())]
    if out_csv:
        buf = "class,mean_regions_per_image\n" + "".join(
            f"{label},{mean:.4f}\n" for label, mean in rows)
        _atomic_write(out_csv, buf.encode("utf-8"))
    return rows


def dump_patches(config: PipelineConfig, manifest: DatasetManifest,
                 out_dir, max_images=None):
    """Write selected patches as PNG crops plus an index CSV.

    Crops are named <imageid>_<scale>_<rank>_<score>.png with path
    separators in the image id flattened to double underscores.
    """
    from PIL import Image  # noqa: PLC0415

    loaded = load_backends(config)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    entries = manifest.entries[:max_images] if max_images else manifest.entries
    for entry in entries:
        image = be.load_image(manifest.image_path(entry))
        ground_truth = entry.label if entry.split == "train" else None
        regions = regions_for_image(image, entry.relative_path, ground_truth,
                                    config, loaded)
        safe_id = entry.relative_path.replace(os.sep, "__").replace("/", "__")
        if safe_id.endswith(".png") or safe_id.endswith(".jpg"):
            safe_id = safe_id.rsplit(".", 1)[0]
        for scale in (COARSE, FINE):
            for rank, patch in enumerate(regions.per_scale(scale)):
                name = f"{safe_id}_{scale}_{rank}_{patch.score:.1f}.png"
                Image.fromarray(crop_region(image, patch)).save(
                    os.path.join(out_dir, name))
                rows.append((entry.relative_path, scale, patch.left,
                             patch.top, patch.side, patch.score))
    index = os.path.join(out_dir, "patches.csv")
    buf = "image_id,scale,left,top,side,score\n" + "".join(
        f"{iid},{scale},{left},{top},{side},{score:.4f}\n"
        for iid, scale, left, top, side, score in rows)
    _atomic_write(index, buf.encode("utf-8"))
    return rows
