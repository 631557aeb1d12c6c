"""Binary containers for feature caches and SVM models.

Shared conventions: ASCII magic, a 32-bit little-endian format version,
length-prefixed UTF-8 strings, and vectors stored as little-endian 32-bit
floats.  All writes go to a temp file in the target directory followed by
an atomic rename, so readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

FEATURE_MAGIC = b"ADIR"
SVM_MAGIC = b"ADIRSVM"
FORMAT_VERSION = 1


class CacheFormatError(Exception):
    """Container file is truncated or carries the wrong magic/version."""


def _atomic_write(path, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".adir-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CacheFormatError(f"{self.path}: truncated container")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def f32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").copy()

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def _check_header(reader: _Reader, magic: bytes) -> None:
    if reader.take(len(magic)) != magic:
        raise CacheFormatError(f"{reader.path}: bad magic, expected {magic!r}")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{reader.path}: unsupported version {version}")


# ---------------------------------------------------------------------------
# feature cache: image_id -> float32 vector


def write_feature_cache(path, features: dict) -> None:
    parts = [FEATURE_MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for image_id, vector in features.items():
        vector = np.asarray(vector, dtype="<f4")
        parts.append(_pack_str(image_id))
        parts.append(struct.pack("<I", vector.size))
        parts.append(vector.tobytes())
    _atomic_write(path, b"".join(parts))


def read_feature_cache(path) -> dict:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    _check_header(reader, FEATURE_MAGIC)
    features = {}
    while not reader.exhausted:
        image_id = reader.string()
        dim = reader.u32()
        features[image_id] = reader.f32_array(dim)
    return features


# ---------------------------------------------------------------------------
# SVM model container


def write_svm_container(path, weights: np.ndarray, bias: np.ndarray,
                        class_labels, c_value: float) -> None:
    weights = np.asarray(weights, dtype="<f4")
    bias = np.asarray(bias, dtype="<f4")
    k, d = weights.shape
    parts = [SVM_MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<I", k), struct.pack("<I", d),
             struct.pack("<f", c_value)]
    for label in class_labels:
        parts.append(_pack_str(label))
    parts.append(weights.tobytes())
    parts.append(bias.tobytes())
    _atomic_write(path, b"".join(parts))


def read_svm_container(path):
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    _check_header(reader, SVM_MAGIC)
    k = reader.u32()
    d = reader.u32()
    c_value = struct.unpack("<f", reader.take(4))[0]
    labels = tuple(reader.string() for _ in range(k))
    weights = reader.f32_array(k * d).reshape(k, d)
    bias = reader.f32_array(k)
    if not reader.exhausted:
        raise CacheFormatError(f"{path}: trailing bytes")
    return weights, bias, labels, c_value
