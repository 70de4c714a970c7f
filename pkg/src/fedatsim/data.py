"""Synthetic dataset generation and client partitioners (iid and skewed non-iid).

The non-iid split mirrors the majority-class construction: classes are divided
equally among K clients as mutually exclusive majority sets, and a skew
percentage s gives every non-owning client s% of each foreign class while the
owner keeps the remaining (100 - (K-1)*s)%.
"""

import csv as _csv
from dataclasses import dataclass, field

import numpy as np

from .nn import Batch


@dataclass
class Dataset:
    """Immutable sample store with per-class index lists."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    input_range: tuple[float, float] = (0.0, 1.0)
    class_indices: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.input_range = tuple(float(v) for v in self.input_range)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs must be (n, d) with one label per row")
        if self.labels.size == 0:
            raise ValueError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError("labels out of range for class_count")
        lo, hi = self.input_range
        if self.inputs.min() < lo or self.inputs.max() > hi:
            raise ValueError("inputs fall outside the declared input range")
        self.class_indices = [np.flatnonzero(self.labels == c) for c in range(self.class_count)]
        empty = [c for c, idx in enumerate(self.class_indices) if idx.size == 0]
        if empty:
            raise ValueError(f"classes with no samples: {empty}")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def batch(self, indices=None) -> Batch:
        if indices is None:
            return Batch(self.inputs, self.labels)
        return Batch(self.inputs[indices], self.labels[indices])

    def subset(self, indices) -> "Dataset":
        return Dataset(
            self.inputs[indices], self.labels[indices], self.class_count, self.input_range
        )


def _class_directions(class_count: int, input_dim: int) -> np.ndarray:
    """Unit direction per class on a deterministic simplex-like arrangement."""
    if class_count <= input_dim:
        dirs = np.zeros((class_count, input_dim))
        dirs[np.arange(class_count), np.arange(class_count)] = 1.0
        dirs -= dirs.mean(axis=0)  # centered simplex vertices
    else:
        angles = 2.0 * np.pi * np.arange(class_count) / class_count
        dirs = np.zeros((class_count, input_dim))
        dirs[:, 0] = np.cos(angles)
        dirs[:, 1] = np.sin(angles)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def make_synthetic(
    class_count: int,
    per_class: int,
    input_dim: int,
    separation: float,
    seed: int,
    noise: float = 0.1,
) -> Dataset:
    """Gaussian blobs at 0.5 + separation * direction_c, clipped to [0, 1].

    Larger separation spreads the class centers further apart relative to the
    fixed noise scale, so the problem becomes linearly separable.
    """
    if class_count < 2:
        raise ValueError("class_count must be at least 2")
    if per_class < 1 or input_dim < 2:
        raise ValueError("per_class must be >= 1 and input_dim >= 2")
    if separation < 0 or noise < 0:
        raise ValueError("separation and noise must be non-negative")
    rng = np.random.default_rng(seed)
    centers = 0.5 + separation * _class_directions(class_count, input_dim)
    inputs = np.empty((class_count * per_class, input_dim))
    labels = np.empty(class_count * per_class, dtype=np.int64)
    for c in range(class_count):
        block = slice(c * per_class, (c + 1) * per_class)
        inputs[block] = centers[c] + rng.normal(0.0, noise, size=(per_class, input_dim))
        labels[block] = c
    np.clip(inputs, 0.0, 1.0, out=inputs)
    return Dataset(inputs, labels, class_count)


@dataclass(frozen=True)
class PartitionSpec:
    """Client count and skew percentage for the non-iid split."""

    clients: int
    skew: float
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("client count must be >= 1")
        if self.skew < 0:
            raise ValueError("skew must be non-negative")
        majority = 100.0 - (self.clients - 1) * self.skew
        if majority < self.skew:
            raise ValueError(
                f"majority share {majority}% would fall below the minority share {self.skew}%"
            )


@dataclass
class Partition:
    """Disjoint index shards covering the dataset, plus each client's majority classes."""

    shards: list[np.ndarray]
    majority_classes: list[list[int]]


def partition_non_iid(dataset: Dataset, spec: PartitionSpec) -> Partition:
    K = spec.clients
    C = dataset.class_count
    if C % K != 0:
        raise ValueError(f"class count {C} must be divisible by client count {K}")
    per_client = C // K
    majority = [list(range(k * per_client, (k + 1) * per_client)) for k in range(K)]
    rng = np.random.default_rng(spec.seed)
    shards: list[list[np.ndarray]] = [[] for _ in range(K)]
    for c in range(C):
        idx = dataset.class_indices[c].copy()
        rng.shuffle(idx)
        owner = c // per_client
        minority_count = int(idx.size * spec.skew / 100.0)  # floor
        pos = 0
        for k in range(K):
            if k == owner:
                continue
            shards[k].append(idx[pos : pos + minority_count])
            pos += minority_count
        # rounding remainder goes to the majority owner
        shards[owner].append(idx[pos:])
    return Partition(
        shards=[np.sort(np.concatenate(parts)) for parts in shards],
        majority_classes=majority,
    )


def partition_iid(dataset: Dataset, clients: int, seed: int) -> Partition:
    """Stratified uniform split: every class spread as evenly as possible."""
    if clients < 1:
        raise ValueError("client count must be >= 1")
    rng = np.random.default_rng(seed)
    shards: list[list[np.ndarray]] = [[] for _ in range(clients)]
    for c in range(dataset.class_count):
        idx = dataset.class_indices[c].copy()
        rng.shuffle(idx)
        chunks = np.array_split(idx, clients)
        # rotate which client receives the (possibly larger) leading chunk
        for k, chunk in enumerate(chunks):
            shards[(k + c) % clients].append(chunk)
    return Partition(
        shards=[np.sort(np.concatenate(parts)) for parts in shards],
        majority_classes=[[] for _ in range(clients)],
    )


def load_csv(path, rescale: bool = False) -> Dataset:
    """Load a dataset from CSV: header row, feature columns, last column = label.

    Feature values must already sit in [0, 1] unless rescale is set, in which
    case each column is min-max rescaled (constant columns map to 0).
    """
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: need a header row with features plus a label column")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        values = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from exc
    features, raw_labels = values[:, :-1], values[:, -1]
    labels = raw_labels.astype(np.int64)
    if not np.array_equal(labels, raw_labels):
        raise ValueError(f"{path}: label column must hold integers")
    if rescale:
        span = features.max(axis=0) - features.min(axis=0)
        span[span == 0] = 1.0
        features = (features - features.min(axis=0)) / span
    elif features.min() < 0.0 or features.max() > 1.0:
        raise ValueError(f"{path}: feature values outside [0, 1]; pass rescale to normalize")
    return Dataset(features, labels, class_count=int(labels.max()) + 1)


def split_holdout(dataset: Dataset, fraction: float, seed: int):
    """Stratified (train, test) split holding out `fraction` of each class."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for idx in dataset.class_indices:
        idx = idx.copy()
        rng.shuffle(idx)
        n_test = max(1, int(round(idx.size * fraction)))
        if n_test >= idx.size:
            raise ValueError("holdout fraction leaves a class without training samples")
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return (
        dataset.subset(np.sort(np.concatenate(train_idx))),
        dataset.subset(np.sort(np.concatenate(test_idx))),
    )
