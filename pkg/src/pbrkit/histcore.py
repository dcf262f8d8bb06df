"""Feature-vector representation, validation and L1 normalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12
MIN_DIM = 2


class HistError(ValueError):
    """Base class for feature-vector and dataset validation errors."""


class AllZero(HistError):
    pass


class DimensionMismatch(HistError):
    pass


class InvariantViolation(HistError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NegativeElement(InvariantViolation):
    def __init__(self, index, value):
        super().__init__(f"negative element {value!r} at index {index}", index=index)
        self.value = value


def _as_float_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvariantViolation(f"feature vector must be 1-D, got shape {arr.shape}")
    return arr


def _check_values(arr: np.ndarray) -> None:
    if arr.size < MIN_DIM:
        raise InvariantViolation(f"feature dimension must be >= {MIN_DIM}, got {arr.size}")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise InvariantViolation(f"non-finite element at index {bad[0]}", index=int(bad[0]))
    neg = np.flatnonzero(arr < 0)
    if neg.size:
        raise NegativeElement(int(neg[0]), float(arr[neg[0]]))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A non-negative histogram / descriptor of fixed dimension N >= 2.

    ``values`` is stored as a read-only float64 array. ``normalized`` records
    that the vector has been L1-normalized (its sum is 1 within 1e-12).
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _as_float_array(self.values)
        _check_values(arr)
        if self.normalized and abs(arr.sum() - 1.0) > NORMALIZATION_TOL:
            raise InvariantViolation(
                f"vector flagged normalized but sums to {arr.sum()!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.normalized == other.normalized
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.values.size


def as_feature_vector(v) -> FeatureVector:
    if isinstance(v, FeatureVector):
        return v
    return FeatureVector(v)


def normalize(v) -> FeatureVector:
    """Scale ``v`` so its elements sum to one.

    Raises
    ------
    NegativeElement
        If any element is negative.
    AllZero
        If every element is zero.
    """
    if isinstance(v, FeatureVector) and v.normalized:
        return v
    arr = _as_float_array(v.values if isinstance(v, FeatureVector) else v)
    neg = np.flatnonzero(arr < 0)
    if neg.size:
        raise NegativeElement(int(neg[0]), float(arr[neg[0]]))
    total = arr.sum()
    if total == 0:
        raise AllZero("cannot normalize an all-zero vector")
    return FeatureVector(arr / total, normalized=True)


def validate_pair(x, y) -> None:
    """Raise unless ``x`` and ``y`` are valid feature vectors of equal dimension."""
    xa = x.values if isinstance(x, FeatureVector) else _as_float_array(x)
    ya = y.values if isinstance(y, FeatureVector) else _as_float_array(y)
    if xa.size != ya.size:
        raise DimensionMismatch(f"dimension mismatch: {xa.size} != {ya.size}")
    _check_values(xa)
    _check_values(ya)


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """L1-normalize each row of a non-negative matrix."""
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0):
        r, c = np.argwhere(X < 0)[0]
        raise NegativeElement(int(c), float(X[r, c]))
    totals = X.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise AllZero(f"row {int(np.flatnonzero(totals[:, 0] == 0)[0])} is all zero")
    return X / totals


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled collection of feature vectors sharing one dimension.

    Vectors are held as the rows of ``X``; ``labels`` are integer class ids
    into ``class_names``.
    """

    X: np.ndarray
    labels: np.ndarray
    class_names: Mapping[int, str] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise InvariantViolation(f"dataset matrix must be 2-D, got shape {X.shape}")
        if X.shape[0] != labels.size:
            raise InvariantViolation(
                f"{X.shape[0]} vectors but {labels.size} labels")
        if X.shape[1] < MIN_DIM:
            raise InvariantViolation(f"feature dimension must be >= {MIN_DIM}")
        if not np.all(np.isfinite(X)):
            raise InvariantViolation("non-finite feature value")
        if np.any(X < 0):
            r, c = np.argwhere(X < 0)[0]
            raise NegativeElement(int(c), float(X[r, c]))
        names = dict(self.class_names) if self.class_names else {
            int(k): str(k) for k in np.unique(labels)}
        missing = set(np.unique(labels).tolist()) - set(names)
        if missing:
            raise InvariantViolation(f"labels without class names: {sorted(missing)}")
        if self.normalized and np.any(np.abs(X.sum(axis=1) - 1.0) > NORMALIZATION_TOL):
            raise InvariantViolation("dataset flagged normalized but a row does not sum to 1")
        X.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", dict(sorted(names.items())))

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def vectors(self) -> Iterator[FeatureVector]:
        for row in self.X:
            yield FeatureVector(row, normalized=self.normalized)

    def normalized_copy(self) -> "Dataset":
        if self.normalized:
            return self
        return Dataset(normalize_rows(self.X), self.labels, self.class_names, normalized=True)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.labels[idx], self.class_names, self.normalized)

    def require_classes(self, minimum: int = 2) -> None:
        if self.classes.size < minimum:
            raise InvariantViolation(
                f"need at least {minimum} classes, found {self.classes.size}")
