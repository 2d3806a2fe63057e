"""Datasets: synthetic Gaussian blobs and IDX-format image files."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..numerics import Matrix

_IDX_IMAGE_MAGIC = 2051
_IDX_LABEL_MAGIC = 2049


@dataclass
class Dataset:
    """A labelled split. norm_mean/norm_std record any normalization that
    was applied to the inputs (per dimension), None when raw."""

    inputs: Matrix
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size != self.inputs.shape[0]:
            raise ValueError(f"{self.labels.size} labels for "
                             f"{self.inputs.shape[0]} samples")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels out of range [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def blob_means(d: int, classes: int, separation: float) -> Matrix:
    """Class means with pairwise l-infinity distance >= separation.

    Class k sits at separation * (1 + k // d) along axis k mod d, a fixed
    lattice so train and test splits of the same geometry always agree.
    """
    means = np.zeros((classes, d))
    for k in range(classes):
        means[k, k % d] = separation * (1.0 + k // d)
    return means


def make_blobs(n: int, d: int, classes: int, separation: float, seed,
               split: str = "train") -> Dataset:
    """Balanced unit-variance Gaussian blobs, deterministic per seed."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if n < 1:
        raise ValueError(f"need at least 1 sample, got {n}")
    if d < 1:
        raise ValueError(f"need at least 1 dimension, got {d}")
    if separation <= 0:
        raise ValueError(f"separation must be positive, got {separation}")
    means = blob_means(d, classes, separation)
    base, extra = divmod(n, classes)
    labels = np.concatenate([np.full(base + (1 if k < extra else 0), k, dtype=np.int64)
                             for k in range(classes)])
    rng = np.random.default_rng(seed)
    inputs = means[labels] + rng.standard_normal((n, d))
    perm = rng.permutation(n)
    return Dataset(inputs=inputs[perm], labels=labels[perm],
                   num_classes=classes, split=split)


def _read_idx(path: str, expected_magic: int, kind: str):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated {kind} file (no header)")
    magic, count = struct.unpack(">ii", raw[:8])
    if magic != expected_magic:
        raise ValueError(f"{path}: bad magic number {magic}, "
                         f"expected {expected_magic} for {kind} data")
    if kind == "images":
        if len(raw) < 16:
            raise ValueError(f"{path}: truncated image header")
        rows, cols = struct.unpack(">ii", raw[8:16])
        payload = np.frombuffer(raw, dtype=np.uint8, offset=16)
        if payload.size != count * rows * cols:
            raise ValueError(f"{path}: {payload.size} pixels for "
                             f"{count} x {rows} x {cols} images")
        return payload.reshape(count, rows * cols)
    payload = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if payload.size != count:
        raise ValueError(f"{path}: {payload.size} labels, header says {count}")
    return payload


def load_idx_subset(images_path: str, labels_path: str, max_n: int,
                    normalization: tuple[float, float] | None = None,
                    split: str = "train") -> Dataset:
    """Load up to max_n samples from an IDX image/label file pair.

    Pixels are scaled to [0, 1] and then normalized as (v - mean) / std when
    a (mean, std) pair is supplied.
    """
    images = _read_idx(images_path, _IDX_IMAGE_MAGIC, "images")
    labels = _read_idx(labels_path, _IDX_LABEL_MAGIC, "labels")
    if images.shape[0] != labels.size:
        raise ValueError(f"{images.shape[0]} images but {labels.size} labels")
    take = min(int(max_n), images.shape[0])
    inputs = images[:take].astype(np.float64) / 255.0
    labels = labels[:take].astype(np.int64)
    d = inputs.shape[1]
    mean_vec = std_vec = None
    if normalization is not None:
        mean, std = normalization
        if std <= 0:
            raise ValueError(f"normalization std must be positive, got {std}")
        inputs = (inputs - mean) / std
        mean_vec = np.full(d, float(mean))
        std_vec = np.full(d, float(std))
    return Dataset(inputs=inputs, labels=labels,
                   num_classes=int(labels.max()) + 1 if labels.size else 0,
                   split=split, norm_mean=mean_vec, norm_std=std_vec)
