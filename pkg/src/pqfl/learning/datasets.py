"""Dataset container, synthetic blob generator, and IDX file ingestion.

The IDX layout is the big-endian container used by the original MNIST
distribution: a magic number, big-endian u32 dimension sizes, then raw
unsigned bytes. Images use magic 0x00000803 (u8 data, 3 dimensions), labels
use 0x00000801 (u8 data, 1 dimension).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from ..errors import ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Immutable (features, labels) table.

    ``labels`` take values in ``[0, n_classes)``. Full datasets produced by
    :func:`make_synthetic` / :func:`load_idx` carry at least one sample of
    every class; shards obtained through :meth:`take` may cover fewer classes
    (that is the point of a non-IID partition).
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError(
                f"labels shape {labels.shape} does not match {features.shape[0]} samples"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"labels out of range [0, {self.n_classes})")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        """Shard view: the selected rows, keeping the parent's class count."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def _require_full_coverage(labels: np.ndarray, n_classes: int) -> None:
    counts = np.bincount(labels, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"classes with no samples: {missing.tolist()}")


def make_synthetic(
    seed: int,
    n_samples: int,
    n_classes: int,
    dim: int,
    class_separation: float,
) -> Dataset:
    """Gaussian blobs, one unit-variance cluster per class.

    Class centers are drawn once and rescaled so their minimum pairwise
    distance is at least ``class_separation``. Labels cycle ``0,1,...,C-1``
    so every class holds either ``floor(n/C)`` or ``ceil(n/C)`` samples.
    Identical seeds give byte-identical datasets.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if n_samples < n_classes:
        raise ValueError("need at least one sample per class")
    if not (np.isfinite(class_separation) and class_separation > 0):
        raise ValueError("class_separation must be positive and finite")

    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, dim))
    pairwise = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    min_dist = pairwise[~np.eye(n_classes, dtype=bool)].min()
    if min_dist == 0.0:  # measure-zero under a continuous draw
        raise ValueError("degenerate center draw; use a different seed")
    if min_dist < class_separation:
        centers = centers * (class_separation / min_dist)

    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    features = centers[labels] + rng.standard_normal((n_samples, dim))
    _require_full_coverage(labels, n_classes)
    return Dataset(features, labels, n_classes)


def _read_exact(raw: bytes, offset: int, count: int, path: Path) -> bytes:
    if offset + count > len(raw):
        raise ParseError(
            f"{path}: expected {count} bytes at offset {offset}, file has {len(raw)}",
            reason="truncated",
        )
    return raw[offset : offset + count]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1]; the class count is ``max(label) + 1`` and
    every class below it must appear at least once.

    Raises :class:`ParseError` with reason ``bad_magic``, ``truncated`` or
    ``count_mismatch``.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    raw_images = images_path.read_bytes()
    raw_labels = labels_path.read_bytes()

    (magic,) = struct.unpack(">I", _read_exact(raw_images, 0, 4, images_path))
    if magic != IDX_IMAGES_MAGIC:
        raise ParseError(
            f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}",
            reason="bad_magic",
        )
    n_images, rows, cols = struct.unpack(
        ">III", _read_exact(raw_images, 4, 12, images_path)
    )
    pixel_bytes = n_images * rows * cols
    pixels = _read_exact(raw_images, 16, pixel_bytes, images_path)
    if len(raw_images) != 16 + pixel_bytes:
        raise ParseError(
            f"{images_path}: {len(raw_images) - 16 - pixel_bytes} trailing bytes",
            reason="truncated",
        )

    (magic,) = struct.unpack(">I", _read_exact(raw_labels, 0, 4, labels_path))
    if magic != IDX_LABELS_MAGIC:
        raise ParseError(
            f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}",
            reason="bad_magic",
        )
    (n_labels,) = struct.unpack(">I", _read_exact(raw_labels, 4, 4, labels_path))
    label_bytes = _read_exact(raw_labels, 8, n_labels, labels_path)
    if len(raw_labels) != 8 + n_labels:
        raise ParseError(
            f"{labels_path}: {len(raw_labels) - 8 - n_labels} trailing bytes",
            reason="truncated",
        )

    if n_images != n_labels:
        raise ParseError(
            f"{n_images} images but {n_labels} labels", reason="count_mismatch"
        )
    if n_images == 0:
        raise ParseError("empty IDX pair", reason="count_mismatch")

    features = (
        np.frombuffer(pixels, dtype=np.uint8)
        .reshape(n_images, rows * cols)
        .astype(np.float64)
        / 255.0
    )
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    n_classes = int(labels.max()) + 1
    _require_full_coverage(labels, n_classes)
    return Dataset(features, labels, n_classes)


def write_idx(dataset: Dataset, images_path, labels_path, side: int | None = None) -> None:
    """Serialize a dataset back to an IDX pair (features clipped to [0,1] and
    quantized to u8). ``side`` forces the rows=cols image side; by default the
    feature dimension must be a perfect square."""
    if side is None:
        side = int(round(np.sqrt(dataset.dim)))
    if side * side != dataset.dim:
        raise ValueError(f"dim {dataset.dim} is not a {side}x{side} image")
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, dataset.n_samples, side, side))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, dataset.n_samples))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def write_csv(dataset: Dataset, stream: TextIO) -> None:
    """Debug export: header ``label,f0,f1,...`` then one row per sample."""
    writer = csv.writer(stream)
    writer.writerow(["label"] + [f"f{j}" for j in range(dataset.dim)])
    for label, row in zip(dataset.labels, dataset.features):
        writer.writerow([int(label)] + [float(v) for v in row])
