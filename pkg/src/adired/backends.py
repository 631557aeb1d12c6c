"""Model backends: discriminative-map networks and per-scale feature extractors.

Two backend families share one contract:

* a DisNet produces the stack of final-layer activation maps together with
  the GAP classifier's weight matrix and a predicted class, and
* a feature extractor turns an RGB region into a fixed-dimension vector.

Both have a deterministic pure-arithmetic "toy" implementation driven by a
plain-text fixture file (header ``ADIRTOY v1``), used throughout the test
suite, and an ONNX-file implementation for real exported models (requires
the optional ``onnxruntime`` dependency).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

TOY_MAGIC = "ADIRTOY v1"


class BackendError(Exception):
    """Base error for model loading and inference failures."""


class ModelFormatError(BackendError):
    """Model file is missing, truncated, or otherwise unparseable."""


class ShapeMismatchError(BackendError):
    """Tensor shapes disagree with the backend contract."""


@dataclass(frozen=True)
class ActivationStack:
    """The N final-layer activation maps of a DisNet, shape (N, l, l)."""

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.float64)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ShapeMismatchError(
                f"activation stack must be (N, l, l), got {m.shape}"
            )
        if m.shape[1] < 3:
            raise ShapeMismatchError(
                f"grid size must be >= 3 for 3x3 maxima windows, got {m.shape[1]}"
            )
        object.__setattr__(self, "maps", m)

    @property
    def num_filters(self) -> int:
        return self.maps.shape[0]

    @property
    def grid_size(self) -> int:
        return self.maps.shape[1]


@dataclass(frozen=True)
class ClassifierWeights:
    """Per-class, per-filter weights of the GAP classifier, shape (C, N)."""

    weights: np.ndarray
    class_labels: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeMismatchError(f"classifier weights must be 2-D, got {w.shape}")
        if len(self.class_labels) != w.shape[0]:
            raise ShapeMismatchError(
                f"{len(self.class_labels)} labels for {w.shape[0]} weight rows"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "class_labels", tuple(self.class_labels))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_filters(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    extractor_id: str

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64).ravel()
        )

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BackendDescriptor:
    """Loaded backend plus the metadata callers key on."""

    kind: str  # "disnet" | "feature-extractor"
    input_resolution: tuple  # (H, W)
    source: str  # "toy" | "model-file"
    backend: object = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("disnet", "feature-extractor"):
            raise BackendError(f"unknown backend kind {self.kind!r}")


# ---------------------------------------------------------------------------
# image helpers


def load_image(path) -> np.ndarray:
    """Decode an image file to an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise BackendError(f"cannot decode image {path}: {exc}") from exc


def resize_image(image: np.ndarray, resolution) -> np.ndarray:
    """Bilinear-resize an (H, W, 3) uint8 array to (H', W'), no aspect keep."""
    h, w = resolution
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise BackendError(f"expected RGB raster, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise BackendError("zero-area region")
    if image.shape[:2] == (h, w):
        return image
    return np.asarray(
        Image.fromarray(image.astype(np.uint8)).resize((w, h), Image.BILINEAR)
    )


def _cell_means(image_f: np.ndarray, grid: int) -> np.ndarray:
    """Mean RGB per cell of a grid x grid partition, shape (grid, grid, 3)."""
    h, w = image_f.shape[:2]
    ys = [h * i // grid for i in range(grid + 1)]
    xs = [w * i // grid for i in range(grid + 1)]
    out = np.empty((grid, grid, 3), dtype=np.float64)
    for gy in range(grid):
        for gx in range(grid):
            cell = image_f[ys[gy]:ys[gy + 1], xs[gx]:xs[gx + 1]]
            out[gy, gx] = cell.mean(axis=(0, 1))
    return out


# ---------------------------------------------------------------------------
# toy fixture format


def _parse_toy_file(path) -> dict:
    """Parse an ADIRTOY v1 fixture into a dict of named float arrays.

    Format: a header line, then named tensors as whitespace-separated
    tokens ``name rank dims... values...``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            body = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if header != TOY_MAGIC:
        raise ModelFormatError(f"{path}: bad header {header!r}")
    tokens = body.split()
    tensors = {}
    i = 0
    try:
        while i < len(tokens):
            name = tokens[i]
            rank = int(tokens[i + 1])
            i += 2
            dims = [int(tokens[i + k]) for k in range(rank)]
            i += rank
            count = int(np.prod(dims)) if rank else 1
            values = [float(tokens[i + k]) for k in range(count)]
            i += count
            arr = np.array(values, dtype=np.float64)
            tensors[name] = arr.reshape(dims) if rank else arr[0]
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: truncated or malformed tensor data") from exc
    return tensors


def write_toy_file(path, tensors: dict) -> None:
    """Serialize named arrays to the ADIRTOY v1 plain-text format."""
    lines = [TOY_MAGIC]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        parts = [name, str(arr.ndim)]
        parts += [str(d) for d in arr.shape]
        parts += [repr(float(v)) for v in arr.ravel()]
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_labels(model_path, num_classes: int) -> tuple:
    """Class labels from the optional ``<model>.labels`` sidecar file."""
    sidecar = str(model_path) + ".labels"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            labels = [line.strip() for line in fh if line.strip()]
        if len(labels) != num_classes:
            raise ModelFormatError(
                f"{sidecar}: {len(labels)} labels for {num_classes} classes"
            )
        return tuple(labels)
    return tuple(f"class_{i}" for i in range(num_classes))


class ToyDisNet:
    """Hand-specified DisNet: per-cell channel-mix filters + ReLU + GAP + linear.

    Every quantity is small closed-form arithmetic so tests can verify the
    score decomposition by brute force.
    """

    def __init__(self, tensors: dict, labels: tuple):
        try:
            res = tensors["input_resolution"]
            self.grid_size = int(tensors["grid_size"])
            self.channel_weights = np.atleast_2d(tensors["channel_weights"])
            self.filter_bias = np.atleast_1d(tensors["filter_bias"])
        except KeyError as exc:
            raise ModelFormatError(f"toy disnet missing tensor {exc}") from exc
        if "class_weights" not in tensors:
            raise ModelFormatError(
                "toy disnet is missing the classifier weight tensor 'class_weights'"
            )
        self.input_resolution = (int(res[0]), int(res[1]))
        cw = np.atleast_2d(tensors["class_weights"])
        if cw.shape[1] != self.channel_weights.shape[0]:
            raise ShapeMismatchError(
                f"class_weights has {cw.shape[1]} columns for "
                f"{self.channel_weights.shape[0]} filters"
            )
        self.classifier = ClassifierWeights(cw, labels or _pad_labels(cw.shape[0]))

    @property
    def class_labels(self) -> tuple:
        return self.classifier.class_labels

    def forward(self, image: np.ndarray):
        """Run the toy net: (ActivationStack, predicted class, class scores)."""
        resized = resize_image(image, self.input_resolution)
        cells = _cell_means(resized.astype(np.float64) / 255.0, self.grid_size)
        pre = (
            np.einsum("fc,yxc->fyx", self.channel_weights, cells)
            + self.filter_bias[:, None, None]
        )
        maps = np.maximum(pre, 0.0)
        acts = ActivationStack(maps)
        # GAP then linear, bias fixed at zero
        scores = self.classifier.weights @ maps.mean(axis=(1, 2))
        return acts, int(np.argmax(scores)), scores


def _pad_labels(n):
    return tuple(f"class_{i}" for i in range(n))


class ToyFeatureExtractor:
    """Pooling extractor: per spatial bin, per channel mix, mean response.

    Bins are (top, left, height, width) windows on the resized input; pixels
    outside every bin never influence the features.  An optional per-mix
    bias plus ReLU (tensors ``mix_bias`` and ``relu``) turns the mixes into
    thresholded detectors.
    """

    def __init__(self, tensors: dict, extractor_id: str):
        try:
            res = tensors["input_resolution"]
            self.bins = np.atleast_2d(tensors["bins"]).astype(int)
            self.channel_mix = np.atleast_2d(tensors["channel_mix"])
        except KeyError as exc:
            raise ModelFormatError(f"toy extractor missing tensor {exc}") from exc
        self.input_resolution = (int(res[0]), int(res[1]))
        self.extractor_id = extractor_id
        n_mix = self.channel_mix.shape[0]
        self.mix_bias = np.atleast_1d(tensors.get("mix_bias", np.zeros(n_mix)))
        if self.mix_bias.shape[0] != n_mix:
            raise ShapeMismatchError(
                f"{self.mix_bias.shape[0]} biases for {n_mix} channel mixes")
        self.relu = bool(tensors.get("relu", 0.0))
        self.dim = self.bins.shape[0] * n_mix

    def extract(self, region: np.ndarray) -> FeatureVector:
        resized = resize_image(region, self.input_resolution)
        img = resized.astype(np.float64) / 255.0
        feats = np.empty(self.dim, dtype=np.float64)
        k = 0
        for top, left, hgt, wid in self.bins:
            window = img[top:top + hgt, left:left + wid]
            if window.size == 0:
                raise ShapeMismatchError("extractor bin falls outside the input")
            mean_rgb = window.mean(axis=(0, 1))
            for mix, bias in zip(self.channel_mix, self.mix_bias):
                value = float(mix @ mean_rgb) + bias
                feats[k] = max(value, 0.0) if self.relu else value
                k += 1
        return FeatureVector(feats, self.extractor_id)


# ---------------------------------------------------------------------------
# ONNX backends (optional dependency)


def _onnx_session(path):
    try:
        import onnxruntime  # noqa: PLC0415
    except ImportError as exc:
        raise BackendError(
            "ONNX model files require the optional 'onnxruntime' dependency "
            "(pip install adired[onnx])"
        ) from exc
    try:
        return onnxruntime.InferenceSession(
            str(path), providers=["CPUExecutionProvider"]
        )
    except Exception as exc:
        raise ModelFormatError(f"cannot load ONNX model {path}: {exc}") from exc


def _session_input(session):
    inp = session.get_inputs()[0]
    shape = inp.shape  # NCHW
    return inp.name, (int(shape[2]), int(shape[3]))


class OnnxDisNet:
    """DisNet exported to ONNX.

    Contract: one NCHW float32 input in [0, 1]; a graph output named
    ``activations`` of shape (1, N, l, l); a graph output named
    ``classifier_weights`` of shape (C, N) carrying the final linear
    layer (exporters can surface the FC initializer as an extra output).
    """

    def __init__(self, path):
        self.session = _onnx_session(path)
        self.input_name, self.input_resolution = _session_input(self.session)
        outputs = {o.name for o in self.session.get_outputs()}
        if "activations" not in outputs:
            raise ModelFormatError(f"{path}: no 'activations' output")
        if "classifier_weights" not in outputs:
            raise ModelFormatError(
                f"{path}: missing classifier-weight output 'classifier_weights'"
            )
        (weights,) = self.session.run(
            ["classifier_weights"],
            {self.input_name: np.zeros(
                (1, 3) + self.input_resolution, dtype=np.float32)},
        )
        labels = _load_labels(path, weights.shape[0])
        self.classifier = ClassifierWeights(np.asarray(weights, np.float64), labels)

    @property
    def class_labels(self) -> tuple:
        return self.classifier.class_labels

    def forward(self, image: np.ndarray):
        resized = resize_image(image, self.input_resolution)
        x = (resized.astype(np.float32) / 255.0).transpose(2, 0, 1)[None]
        (acts,) = self.session.run(["activations"], {self.input_name: x})
        maps = np.asarray(acts[0], dtype=np.float64)
        stack = ActivationStack(maps)
        if self.classifier.num_filters != stack.num_filters:
            raise ShapeMismatchError(
                f"{stack.num_filters} activation maps vs "
                f"{self.classifier.num_filters} classifier columns"
            )
        scores = self.classifier.weights @ maps.mean(axis=(1, 2))
        return stack, int(np.argmax(scores)), scores


class OnnxFeatureExtractor:
    """Feature extractor exported to ONNX; first output is the pooled vector."""

    def __init__(self, path):
        self.session = _onnx_session(path)
        self.input_name, self.input_resolution = _session_input(self.session)
        self.output_name = self.session.get_outputs()[0].name
        self.extractor_id = os.path.basename(str(path))

    def extract(self, region: np.ndarray) -> FeatureVector:
        resized = resize_image(region, self.input_resolution)
        x = (resized.astype(np.float32) / 255.0).transpose(2, 0, 1)[None]
        (feats,) = self.session.run([self.output_name], {self.input_name: x})
        return FeatureVector(np.asarray(feats, np.float64).ravel(), self.extractor_id)


# ---------------------------------------------------------------------------
# loading and the uniform operation surface


def load_model(path, kind: str) -> BackendDescriptor:
    """Load a model file (toy fixture or ONNX) as a BackendDescriptor."""
    if kind not in ("disnet", "feature-extractor"):
        raise BackendError(f"unknown backend kind {kind!r}")
    if not os.path.exists(path):
        raise ModelFormatError(f"model file not found: {path}")
    if str(path).endswith(".onnx"):
        backend = OnnxDisNet(path) if kind == "disnet" else OnnxFeatureExtractor(path)
        return BackendDescriptor(
            kind=kind,
            input_resolution=backend.input_resolution,
            source="model-file",
            backend=backend,
        )
    tensors = _parse_toy_file(path)
    if kind == "disnet":
        n_classes = np.atleast_2d(tensors.get("class_weights", np.zeros((1, 1)))).shape[0]
        labels = _load_labels(path, n_classes) if "class_weights" in tensors else ()
        backend = ToyDisNet(tensors, labels)
    else:
        backend = ToyFeatureExtractor(tensors, os.path.basename(str(path)))
    return BackendDescriptor(
        kind=kind,
        input_resolution=backend.input_resolution,
        source="toy",
        backend=backend,
    )


def disnet_forward(image: np.ndarray, descriptor: BackendDescriptor):
    """(ActivationStack, predicted class index, class score vector)."""
    if descriptor.kind != "disnet":
        raise BackendError("descriptor is not a disnet backend")
    return descriptor.backend.forward(image)


def extract_features(region: np.ndarray, descriptor: BackendDescriptor) -> FeatureVector:
    if descriptor.kind != "feature-extractor":
        raise BackendError("descriptor is not a feature-extractor backend")
    return descriptor.backend.extract(region)
