"""Dataset synthesis, loading, and partitioning across clients."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import CounterRng, stream_key

__all__ = [
    "Dataset",
    "Partition",
    "synth_blobs",
    "partition_iid",
    "partition_by_label",
    "load_idx",
    "load_csv",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Immutable sample matrix with one label per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, copy=True)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Partition:
    """Disjoint index shards covering a dataset, with size-based weights."""

    shards: tuple[np.ndarray, ...]
    weights: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        shards = tuple(np.asarray(s, dtype=np.int64) for s in self.shards)
        total = sum(len(s) for s in shards)
        combined = np.concatenate(shards) if shards else np.array([], dtype=np.int64)
        if len(np.unique(combined)) != total:
            raise ValueError("shards overlap")
        for i, s in enumerate(shards):
            if len(s) == 0:
                raise ValueError(f"shard {i} is empty")
        weights = tuple(len(s) / total for s in shards)
        object.__setattr__(self, "shards", shards)
        object.__setattr__(self, "weights", weights)

    @property
    def num_shards(self) -> int:
        return len(self.shards)

    def min_shard_size(self) -> int:
        return min(len(s) for s in self.shards)


def synth_blobs(num_classes: int, samples_per_class: int, input_dim: int,
                spread: float, seed: int) -> Dataset:
    """Gaussian class clusters around well-separated centroids.

    Centroid for class c is the unit basis vector e_c for c < input_dim,
    its negation for c < 2*input_dim, and a seeded random unit vector
    beyond that.  Samples add isotropic Gaussian offsets of standard
    deviation ``spread``; spread = 0 duplicates the centroids exactly.
    Samples are ordered class-major.
    """
    if num_classes < 1 or samples_per_class < 1 or input_dim < 1:
        raise ValueError("num_classes, samples_per_class, and input_dim "
                         "must all be >= 1")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    rng = CounterRng(stream_key(seed, "synth-blobs"))
    centroids = np.zeros((num_classes, input_dim))
    for c in range(num_classes):
        if c < input_dim:
            centroids[c, c] = 1.0
        elif c < 2 * input_dim:
            centroids[c, c - input_dim] = -1.0
        else:
            direction = rng.gaussians(input_dim, 1.0)
            centroids[c] = direction / np.linalg.norm(direction)
    n = num_classes * samples_per_class
    features = np.repeat(centroids, samples_per_class, axis=0)
    if spread > 0:
        features = features + rng.gaussians(n * input_dim, spread) \
            .reshape(n, input_dim)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64),
                       samples_per_class)
    return Dataset(features=features, labels=labels)


def partition_iid(dataset: Dataset, num_shards: int, seed: int) -> Partition:
    """Shuffled near-equal shards (sizes differ by at most one)."""
    n = len(dataset)
    if num_shards < 1:
        raise ValueError(f"num_shards must be >= 1, got {num_shards}")
    if num_shards > n:
        raise ValueError(
            f"cannot split {n} samples into {num_shards} shards")
    rng = CounterRng(stream_key(seed, "partition-iid"))
    order = rng.permutation(n)
    return Partition(shards=tuple(np.sort(part) for part in
                                  np.array_split(order, num_shards)))


def partition_by_label(dataset: Dataset, num_shards: int,
                       seed: int) -> Partition:
    """Label-sorted contiguous shards: a deliberately skewed split.

    Each shard sees only a narrow label range.  This is an exploratory
    stress split beyond the baseline uniform setup; the privacy and bound
    machinery do not model it specially.
    """
    n = len(dataset)
    if num_shards < 1:
        raise ValueError(f"num_shards must be >= 1, got {num_shards}")
    if num_shards > n:
        raise ValueError(
            f"cannot split {n} samples into {num_shards} shards")
    rng = CounterRng(stream_key(seed, "partition-label"))
    order = rng.permutation(n)
    by_label = order[np.argsort(dataset.labels[order], kind="stable")]
    return Partition(shards=tuple(np.sort(part) for part in
                                  np.array_split(by_label, num_shards)))


def _read_header(data: bytes, path: str, magic: int,
                 num_dims: int) -> tuple[tuple[int, ...], int]:
    header_len = 4 * (1 + num_dims)
    if len(data) < header_len:
        raise ValueError(f"{path}: truncated header, {len(data)} bytes")
    fields = struct.unpack(f">{1 + num_dims}I", data[:header_len])
    if fields[0] != magic:
        raise ValueError(f"{path}: magic 0x{fields[0]:08X}, "
                         f"expected 0x{magic:08X}")
    return fields[1:], header_len


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Load a big-endian byte-tensor image/label file pair.

    Images use magic 0x00000803 with dimensions (count, rows, cols) and
    are flattened to rows*cols features scaled to [0, 1]; labels use magic
    0x00000801.  Counts must match across the two files.
    """
    with open(images_path, "rb") as f:
        raw = f.read()
    (count, rows, cols), offset = _read_header(raw, images_path,
                                               IDX_IMAGE_MAGIC, 3)
    expected = count * rows * cols
    pixels = raw[offset:]
    if len(pixels) != expected:
        raise ValueError(f"{images_path}: expected {expected} pixel bytes "
                         f"for {count} images, got {len(pixels)}")
    features = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64)
    features = features.reshape(count, rows * cols) / 255.0

    with open(labels_path, "rb") as f:
        raw = f.read()
    (label_count,), offset = _read_header(raw, labels_path,
                                          IDX_LABEL_MAGIC, 1)
    body = raw[offset:]
    if len(body) != label_count:
        raise ValueError(f"{labels_path}: expected {label_count} label "
                         f"bytes, got {len(body)}")
    if label_count != count:
        raise ValueError(f"image count {count} does not match label "
                         f"count {label_count}")
    labels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    return Dataset(features=features, labels=labels)


def load_csv(path: str, label_column: str) -> Dataset:
    """Load a numeric CSV with a header row.

    The named column becomes the labels (integers when every value is
    integral); every other column is a feature.  A non-numeric cell
    reports its row and column.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}; "
                             f"header is {header}")
        label_idx = header.index(label_column)
        features = []
        labels = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {row_num} has {len(row)} "
                                 f"cells, header has {len(header)}")
            parsed = []
            for col, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r} at row "
                        f"{row_num}, column {col!r}") from None
            labels.append(parsed.pop(label_idx))
            features.append(parsed)
    if not features:
        raise ValueError(f"{path}: no data rows")
    y = np.asarray(labels)
    if np.all(y == np.floor(y)):
        y = y.astype(np.int64)
    return Dataset(features=np.asarray(features), labels=y)
