"""Dataset container, CSV ingestion, stratified splits, and synthetic blob generation."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "PoolState",
    "load_csv",
    "save_csv",
    "split",
    "generate_blobs",
    "standardize",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix with integer class labels and a train/test partition.

    ``train_indices`` and ``test_indices`` are disjoint row indices; freshly
    loaded or generated data has every row in train and an empty test set.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        train = np.asarray(self.train_indices, dtype=np.int64)
        test = np.asarray(self.test_indices, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = features.shape[0]
        if labels.shape != (n,):
            raise ValueError("labels must be one per feature row")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain NaN or Inf")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        for name, idx in (("train_indices", train), ("test_indices", test)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"{name} out of range")
            if len(np.unique(idx)) != len(idx):
                raise ValueError(f"{name} contains duplicates")
        if np.intersect1d(train, test).size:
            raise ValueError("train and test indices overlap")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "train_indices", _frozen(train))
        object.__setattr__(self, "test_indices", _frozen(test))

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def with_partition(self, train_indices, test_indices) -> "Dataset":
        return Dataset(self.features, self.labels, self.class_count,
                       train_indices, test_indices)


@dataclass(frozen=True)
class PoolState:
    """Disjoint labeled/unlabeled index sets over a dataset's train partition."""

    labeled: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        labeled = np.asarray(self.labeled, dtype=np.int64)
        unlabeled = np.asarray(self.unlabeled, dtype=np.int64)
        if np.intersect1d(labeled, unlabeled).size:
            raise ValueError("labeled and unlabeled sets overlap")
        object.__setattr__(self, "labeled", _frozen(labeled))
        object.__setattr__(self, "unlabeled", _frozen(unlabeled))

    @classmethod
    def initial(cls, train_indices, labeled) -> "PoolState":
        labeled = np.asarray(labeled, dtype=np.int64)
        rest = np.setdiff1d(np.asarray(train_indices, dtype=np.int64), labeled)
        return cls(labeled, rest)

    def query(self, picked) -> "PoolState":
        """Move ``picked`` from the unlabeled pool to the labeled set."""
        picked = np.asarray(picked, dtype=np.int64)
        if np.setdiff1d(picked, self.unlabeled).size:
            raise ValueError("queried indices not in the unlabeled pool")
        remaining = self.unlabeled[~np.isin(self.unlabeled, picked)]
        return PoolState(np.concatenate([self.labeled, picked]), remaining)


def _header(dim: int) -> list[str]:
    return [f"f{i}" for i in range(dim)] + ["label"]


def load_csv(path, class_count: int | None = None) -> Dataset:
    """Read a ``f0,...,f{d-1},label`` CSV into a Dataset with all rows in train.

    ``class_count`` may be pinned to tolerate class ids never observed in the
    file; by default it is inferred as ``1 + max(label)`` (floored at 2).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty dataset: missing header") from None
        dim = len(header) - 1
        if dim < 1 or header != _header(dim):
            raise ValueError(f"malformed header {header!r}; expected f0..f{{d-1}},label")
        features: list[list[float]] = []
        labels: list[int] = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != dim + 1:
                raise ValueError(f"row {rownum}: expected {dim + 1} fields, got {len(row)}")
            try:
                features.append([float(v) for v in row[:dim]])
            except ValueError:
                raise ValueError(f"row {rownum}: non-numeric feature value") from None
            try:
                label = int(row[dim])
            except ValueError:
                raise ValueError(f"row {rownum}: non-integer label {row[dim]!r}") from None
            if label < 0:
                raise ValueError(f"row {rownum}: negative label {label}")
            labels.append(label)
    if not features:
        raise ValueError("empty dataset")
    y = np.asarray(labels, dtype=np.int64)
    observed = int(y.max()) + 1
    if class_count is None:
        class_count = max(observed, 2)
    elif class_count < observed:
        raise ValueError(f"class_count {class_count} smaller than observed {observed}")
    n = len(features)
    return Dataset(np.asarray(features), y, class_count,
                   np.arange(n), np.empty(0, dtype=np.int64))


def save_csv(ds: Dataset, path) -> None:
    """Write a Dataset in the load_csv format; feature round-trip is bit-exact."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_header(ds.feature_dim)) + "\n")
        for row, label in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def split(ds: Dataset, test_fraction: float, seed: int) -> Dataset:
    """Stratified deterministic train/test partition of the dataset's rows.

    Per class, ``round(test_fraction * n_c)`` samples go to test, always
    leaving at least one in train; single-sample classes stay in train with
    a warning.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    universe = np.sort(np.concatenate([ds.train_indices, ds.test_indices]))
    if universe.size < 2:
        raise ValueError("need at least two samples to split")
    rng = np.random.default_rng(seed)
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for c in range(ds.class_count):
        idx = universe[ds.labels[universe] == c]
        if idx.size == 0:
            continue
        if idx.size == 1:
            warnings.warn(f"class {c} has a single sample; keeping it in train",
                          RuntimeWarning, stacklevel=2)
            train_parts.append(idx)
            continue
        shuffled = rng.permutation(idx)
        n_test = min(int(round(test_fraction * idx.size)), idx.size - 1)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, np.int64)
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, np.int64)
    return ds.with_partition(train, test)


def generate_blobs(class_count: int, dim: int, per_class: int,
                   outlier_fraction: float, separation: float,
                   seed: int) -> tuple[Dataset, np.ndarray]:
    """Isotropic unit-variance Gaussian clusters with injected outliers.

    Cluster centers sit ``separation`` apart along the first axis. A fraction
    ``outlier_fraction`` of samples is turned into outliers: each is given a
    uniformly drawn *different* label and is moved into the ambiguity midzone
    between its original and new class centers, making it a hard-to-learn,
    high-uncertainty sample. Returns the dataset (all rows in train) and the
    sorted ground-truth outlier indices.
    """
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    if per_class < 10:
        raise ValueError("per_class must be >= 10")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    if separation <= 0.0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    n = class_count * per_class
    centers = np.zeros((class_count, dim))
    centers[:, 0] = separation * np.arange(class_count)
    labels = np.repeat(np.arange(class_count), per_class)
    features = centers[labels] + rng.standard_normal((n, dim))
    m = int(round(outlier_fraction * n))
    outliers = np.sort(rng.choice(n, size=m, replace=False)) if m else np.empty(0, np.int64)
    if m:
        old = labels[outliers]
        new = (old + rng.integers(1, class_count, size=m)) % class_count
        labels = labels.copy()
        labels[outliers] = new
        # hug the equidistance plane: unit noise across it, compressed along
        # the center-to-center direction so outliers stay maximally ambiguous
        between = centers[new] - centers[old]
        unit = between / np.linalg.norm(between, axis=1, keepdims=True)
        noise = rng.standard_normal((m, dim))
        along = (noise * unit).sum(axis=1, keepdims=True)
        noise = noise - 0.75 * along * unit
        features[outliers] = (centers[old] + centers[new]) / 2.0 + noise
    ds = Dataset(features, labels, class_count,
                 np.arange(n), np.empty(0, dtype=np.int64))
    return ds, outliers.astype(np.int64)


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean unit-variance features computed from the train partition."""
    ref = ds.train_indices if ds.train_indices.size else np.arange(ds.sample_count)
    mean = ds.features[ref].mean(axis=0)
    sd = ds.features[ref].std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return Dataset((ds.features - mean) / sd, ds.labels, ds.class_count,
                   ds.train_indices, ds.test_indices)
