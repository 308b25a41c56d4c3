"""Datasets: the IDX files MNIST ships in, and Gaussian blobs for desk-scale runs."""
from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxError(ValueError):
    code = "idx_error"

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


class BadMagicError(IdxError):
    code = "bad_magic"


class TruncatedError(IdxError):
    code = "truncated"


class CountMismatchError(IdxError):
    code = "count_mismatch"


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    name: str = "dataset"
    n_classes: int = 0
    _fingerprint: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        self.x_train = np.asarray(self.x_train, dtype=np.float64)
        self.x_test = np.asarray(self.x_test, dtype=np.float64)
        self.y_train = np.asarray(self.y_train, dtype=np.intp)
        self.y_test = np.asarray(self.y_test, dtype=np.intp)
        if not self.n_classes:
            labels = np.concatenate([self.y_train, self.y_test])
            self.n_classes = int(labels.max()) + 1 if labels.size else 0
        if self.x_train.ndim != 2 or self.x_test.ndim != 2 or self.x_train.shape[1] != self.x_test.shape[1]:
            raise ValueError("train and test features must be 2-D with the same feature count")
        if len(self.x_train) != len(self.y_train) or len(self.x_test) != len(self.y_test):
            raise ValueError("feature and label counts differ")
        for y in (self.y_train, self.y_test):
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise ValueError("labels must lie in [0, n_classes)")

    @property
    def n_features(self) -> int:
        return self.x_train.shape[1]

    def fingerprint(self) -> str:
        """SHA-256 over the arrays, used in config digests."""
        if not self._fingerprint:
            h = hashlib.sha256()
            for a in (self.x_train, self.y_train, self.x_test, self.y_test):
                h.update(str(a.shape).encode())
                h.update(np.ascontiguousarray(a).tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint


def _read_bytes(path) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(path, raw: bytes, magic: int, n_dims: int) -> tuple[np.ndarray, tuple[int, ...]]:
    header = 4 + 4 * n_dims
    if len(raw) < 4:
        raise TruncatedError(path, "file shorter than the magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(path, f"bad magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedError(path, "truncated header")
    dims = struct.unpack(f">{n_dims}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise TruncatedError(path, f"truncated: {len(raw) - header} data bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header)
    return data, dims


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label file pair.

    Images come back flattened row-major and scaled to [0, 1]; labels as
    integer class indices.  Raises ``BadMagicError``, ``TruncatedError`` or
    ``CountMismatchError``.
    """
    pixels, (count, rows, cols) = _parse_idx(images_path, _read_bytes(images_path), IMAGES_MAGIC, 3)
    labels, (n_labels,) = _parse_idx(labels_path, _read_bytes(labels_path), LABELS_MAGIC, 1)
    if count != n_labels:
        raise CountMismatchError(labels_path, f"{count} images but {n_labels} labels")
    images = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return images, labels.astype(np.intp)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a uint8 array of shape (count, rows, cols) as an IDX image file."""
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">4I", IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">2I", LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def _find(directory, stem):
    for name in (stem, stem + ".gz"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(os.path.join(directory, stem))


def load_mnist(directory) -> Dataset:
    """MNIST from the four standard IDX files (optionally gzipped) in ``directory``."""
    paths = {key: _find(directory, stem) for key, stem in MNIST_FILES.items()}
    x_train, y_train = load_idx(paths["train_images"], paths["train_labels"])
    x_test, y_test = load_idx(paths["test_images"], paths["test_labels"])
    return Dataset(x_train, y_train, x_test, y_test, name="mnist", n_classes=10)


def blob_centers(classes: int, dims: int, separation: float) -> np.ndarray:
    """Class centres with nearest-neighbour distance ``separation``.

    Up to ``dims`` classes sit on the scaled standard simplex
    ``(separation / sqrt 2) * e_k``; more classes than dimensions go on a
    regular polygon in the first two coordinates (or a line when ``dims == 1``).
    """
    centers = np.zeros((classes, dims))
    if classes <= dims:
        centers[np.arange(classes), np.arange(classes)] = separation / np.sqrt(2.0)
    elif dims == 1:
        centers[:, 0] = separation * np.arange(classes)
    else:
        radius = separation / (2.0 * np.sin(np.pi / classes))
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers[:, 0] = radius * np.cos(angles)
        centers[:, 1] = radius * np.sin(angles)
    return centers


def synth_dataset(classes: int = 2, per_class: int = 100, dims: int = 2, seed: int = 0,
                  separation: float = 6.0, test_frac: float = 0.2) -> Dataset:
    """Unit-covariance Gaussian blobs, split per class into train and test."""
    if classes < 1 or per_class < 1 or dims < 1:
        raise ValueError("classes, per_class and dims must be >= 1")
    gen = rng.generator(seed, rng.SYNTH)
    centers = blob_centers(classes, dims, separation)
    n_test = int(round(test_frac * per_class))
    parts = {"train": ([], []), "test": ([], [])}
    for k in range(classes):
        x = centers[k] + gen.standard_normal((per_class, dims))
        parts["test"][0].append(x[:n_test])
        parts["train"][0].append(x[n_test:])
        parts["test"][1].append(np.full(n_test, k))
        parts["train"][1].append(np.full(per_class - n_test, k))
    out = {}
    for key, (xs, ys) in parts.items():
        x, y = np.concatenate(xs), np.concatenate(ys)
        order = gen.permutation(len(x))
        out[key] = (x[order], y[order])
    return Dataset(*out["train"], *out["test"], name=f"blobs{classes}x{per_class}d{dims}s{seed}", n_classes=classes)
