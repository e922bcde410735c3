"""Datasets: XTSR images, XLBL labels, class-weight files, synthetic gratings."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DataError, FormatError, ParameterError
from .tensor import Rng, load_tensor, save_tensor

SINGLE = "single-label"
MULTI = "multi-label"


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    class_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"images must be (n, c, h, w), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.ndim == 1:
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DataError(f"label index outside [0, {self.num_classes})")
        elif self.labels.ndim == 2:
            if self.labels.shape[1] != self.num_classes:
                raise DataError("multi-hot rows must have num_classes columns")
        else:
            raise DataError("labels must be a vector of indices or a multi-hot matrix")
        if self.class_weights is not None and len(self.class_weights) != self.num_classes:
            raise DataError("class_weights must have one entry per class")

    @property
    def task(self) -> str:
        return SINGLE if self.labels.ndim == 1 else MULTI

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], self.num_classes,
                       self.split, self.class_weights)


# ---------------------------------------------------------------------------
# XLBL label files
#
#   b"XLBL" | u8 version=1 | u8 mode (0 single, 1 multi-hot) | u32 count |
#   u32 num_classes | count * u32 indices  or  count * num_classes u8 (0/1)

XLBL_MAGIC = b"XLBL"
XLBL_VERSION = 1
_XLBL_HEADER = struct.Struct("<4sBBII")


def encode_labels(labels: np.ndarray, num_classes: int) -> bytes:
    labels = np.asarray(labels)
    mode = 0 if labels.ndim == 1 else 1
    head = _XLBL_HEADER.pack(XLBL_MAGIC, XLBL_VERSION, mode, len(labels), num_classes)
    if mode == 0:
        return head + labels.astype("<u4").tobytes()
    return head + (labels != 0).astype(np.uint8).tobytes()


def decode_labels(data: bytes) -> tuple[np.ndarray, int]:
    if len(data) < _XLBL_HEADER.size:
        raise FormatError("truncated XLBL header")
    magic, version, mode, count, num_classes = _XLBL_HEADER.unpack_from(data)
    if magic != XLBL_MAGIC:
        raise FormatError("not an XLBL file (bad magic)")
    if version != XLBL_VERSION:
        raise FormatError(f"unsupported XLBL version {version}")
    body = data[_XLBL_HEADER.size:]
    if mode == 0:
        if len(body) != 4 * count:
            raise FormatError("XLBL payload length mismatch")
        return np.frombuffer(body, dtype="<u4").astype(np.int64), num_classes
    if mode == 1:
        if len(body) != count * num_classes:
            raise FormatError("XLBL payload length mismatch")
        return np.frombuffer(body, dtype=np.uint8).reshape(count, num_classes).copy(), num_classes
    raise FormatError(f"unknown XLBL mode {mode}")


def save_labels(path, labels: np.ndarray, num_classes: int) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_labels(labels, num_classes))


def load_labels(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        return decode_labels(fh.read())


def load_class_weights(path, num_classes: int) -> np.ndarray:
    """Two-column text file ``class_index weight``; unlisted classes get 0."""
    weights = np.zeros(num_classes, dtype=np.float64)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'class_index weight'")
            idx, w = int(parts[0]), float(parts[1])
            if not 0 <= idx < num_classes:
                raise DataError(f"{path}:{lineno}: class {idx} out of range")
            weights[idx] = w
    return weights


def save_class_weights(path, weights) -> None:
    with open(path, "w") as fh:
        for i, w in enumerate(weights):
            fh.write(f"{i} {float(w)!r}\n")


def load_dataset(image_path, label_path, split: str = "train", class_weights_path=None) -> Dataset:
    images = load_tensor(image_path)
    if images.dtype == np.uint8:
        images = images.astype(np.float32) / 255.0
    labels, num_classes = load_labels(label_path)
    weights = load_class_weights(class_weights_path, num_classes) if class_weights_path else None
    return Dataset(images, labels, num_classes, split, weights)


def save_dataset(ds: Dataset, image_path, label_path) -> None:
    save_tensor(image_path, ds.images)
    save_labels(label_path, ds.labels, ds.num_classes)


# ---------------------------------------------------------------------------
# synthetic gratings


def _class_patterns(num_classes: int):
    c = np.arange(num_classes)
    theta = np.pi * c / num_classes
    freq = 2.0 + 1.5 * (c % 3)
    hue = 2 * np.pi * c / num_classes
    color = 0.6 + 0.4 * np.stack([np.cos(hue), np.cos(hue + 2 * np.pi / 3),
                                  np.cos(hue + 4 * np.pi / 3)], axis=1)
    return theta, freq, color


def synth_dataset(num_classes: int, n: int, hw: int, seed: int, *, noise: float = 0.5,
                  multi_label: bool = False, max_labels: int = 3, split: str = "train") -> Dataset:
    """Class-conditional oriented color gratings plus Gaussian noise.

    Class ``c`` has orientation ``pi*c/K``, a frequency from a 3-cycle and a
    hue; each image gets a random phase and amplitude.  Single-label sets
    are balanced (labels cycle through classes, then are shuffled).  In
    multi-label mode an image superposes 1..max_labels distinct classes.
    """
    if num_classes < 1 or n < 1 or hw < 1:
        raise ParameterError("num_classes, n and hw must be >= 1")
    rng = Rng(seed)
    theta, freq, color = _class_patterns(num_classes)
    yy, xx = np.meshgrid(np.arange(hw) / hw, np.arange(hw) / hw, indexing="ij")

    def grating(cls: np.ndarray) -> np.ndarray:
        phase = rng.uniform(0, 2 * np.pi, len(cls))
        amp = rng.uniform(0.7, 1.3, len(cls))
        proj = (np.cos(theta[cls])[:, None, None] * xx + np.sin(theta[cls])[:, None, None] * yy)
        wave = np.sin(2 * np.pi * freq[cls][:, None, None] * proj + phase[:, None, None])
        return (amp[:, None, None, None] * color[cls][:, :, None, None] * wave[:, None])

    if not multi_label:
        labels = (np.arange(n) % num_classes)[rng.permutation(n)]
        images = grating(labels)
    else:
        counts = 1 + rng.integers(min(max_labels, num_classes), n)
        labels = np.zeros((n, num_classes), dtype=np.uint8)
        images = np.zeros((n, 3, hw, hw))
        for j in range(int(counts.max())):
            active = counts > j
            for i in np.flatnonzero(active):
                free = np.flatnonzero(labels[i] == 0)
                labels[i, free[rng.integers(len(free), 1)[0]]] = 1
        for i in range(n):
            cls = np.flatnonzero(labels[i])
            images[i] = grating(cls).sum(axis=0) / len(cls)
    images = images + noise * rng.normal(images.shape)
    return Dataset(images.astype(np.float32), labels, num_classes, split)


# ---------------------------------------------------------------------------
# batching


def epoch_permutation(n: int, shuffle_seed: int | None, epoch: int) -> np.ndarray:
    if shuffle_seed is None:
        return np.arange(n)
    epoch_seed = int(Rng(shuffle_seed).next_u64(epoch + 1)[-1])
    return Rng(epoch_seed).permutation(n)


def batch_indices(n: int, batch_size: int, shuffle_seed: int | None = None,
                  epoch: int = 0) -> Iterator[np.ndarray]:
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    order = epoch_permutation(n, shuffle_seed, epoch)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def batch_iter(dataset: Dataset, batch_size: int, shuffle_seed: int | None = None,
               epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Deterministic (images, labels) batches; the last batch may be short."""
    for idx in batch_indices(len(dataset), batch_size, shuffle_seed, epoch):
        yield dataset.images[idx], dataset.labels[idx]
