"""Distance-substituted RBF kernels, Gram matrices and a PD audit."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import distances
from .distances import Measure
from .histcore import Dataset, DimensionMismatch, as_feature_vector, normalize, validate_pair

GRAM_MAGIC = b"PBRG"
GRAM_VERSION = 1
SYMMETRY_TOL = 1e-10


class NotSquare(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family member: ``linear``, ``poly`` (degree d, coefficient 1)
    or ``rbf`` (``exp(-gamma * D)`` for a distance measure D)."""

    kind: str
    measure: Optional[Measure] = None
    gamma: Optional[float] = None
    degree: Optional[int] = None
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind == "linear":
            if self.measure is not None or self.gamma is not None or self.degree is not None:
                raise ValueError("linear kernel takes no parameters")
        elif self.kind == "poly":
            if self.degree not in (1, 2, 3, 4, 5):
                raise ValueError(f"polynomial degree must be in 1..5, got {self.degree!r}")
            if self.coef0 != 1.0:
                raise ValueError("polynomial coefficient is fixed to 1")
        elif self.kind == "rbf":
            object.__setattr__(self, "measure", Measure.parse(self.measure))
            if self.gamma is None or not self.gamma > 0:
                raise ValueError(f"gamma must be positive, got {self.gamma!r}")
            object.__setattr__(self, "gamma", float(self.gamma))
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def polynomial(cls, degree: int) -> "KernelSpec":
        return cls("poly", degree=int(degree))

    @classmethod
    def d_rbf(cls, measure, gamma: float) -> "KernelSpec":
        return cls("rbf", measure=Measure.parse(measure), gamma=gamma)

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear"}
        if self.kind == "poly":
            return {"kind": "poly", "degree": self.degree, "coef0": self.coef0}
        return {"kind": "rbf", "measure": self.measure.value, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        kind = d["kind"]
        if kind == "linear":
            return cls.linear()
        if kind == "poly":
            return cls.polynomial(d["degree"])
        return cls.d_rbf(d["measure"], d["gamma"])

    @property
    def tag(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True, eq=False)
class GramMatrix:
    values: np.ndarray
    spec: KernelSpec
    row_ids: np.ndarray = field(default=None)
    col_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(v.shape[0]))
        if self.col_ids is None:
            object.__setattr__(self, "col_ids", np.arange(v.shape[1]))

    @property
    def shape(self):
        return self.values.shape

    def to_bytes(self) -> bytes:
        tag = self.spec.tag.encode("utf-8")
        rows, cols = self.values.shape
        head = GRAM_MAGIC + struct.pack("<IIII", GRAM_VERSION, rows, cols, len(tag)) + tag
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GramMatrix":
        if blob[:4] != GRAM_MAGIC:
            raise ValueError("not a Gram matrix file (bad magic)")
        version, rows, cols, tag_len = struct.unpack_from("<IIII", blob, 4)
        if version != GRAM_VERSION:
            raise ValueError(f"unsupported Gram file version {version}")
        off = 4 + 16
        spec = KernelSpec.from_dict(json.loads(blob[off:off + tag_len].decode("utf-8")))
        off += tag_len
        data = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off)
        return cls(data.reshape(rows, cols).astype(np.float64), spec)


def rbf_from_distance(D, gamma: float) -> np.ndarray:
    """``exp(-gamma * D)``; an infinite distance gives 0."""
    return np.exp(-gamma * np.asarray(D, dtype=np.float64))


def kernel_value(spec: KernelSpec, x, y) -> float:
    validate_pair(x, y)
    if spec.kind == "rbf":
        return float(rbf_from_distance(distances.evaluate(spec.measure, x, y), spec.gamma))
    a, b = as_feature_vector(x).values, as_feature_vector(y).values
    dot = float(a @ b)
    if spec.kind == "linear":
        return dot
    return (dot + spec.coef0) ** spec.degree


def _matrix(data) -> tuple[np.ndarray, bool]:
    if isinstance(data, Dataset):
        return data.X, data.normalized
    arr = np.asarray([as_feature_vector(v).values for v in data]) \
        if not isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
    return arr, False


def base_matrix(spec: KernelSpec, rows, cols=None, threads: int = 1) -> np.ndarray:
    """Parameter-free part of a Gram matrix: the distance matrix for ``rbf``
    kernels, the dot-product matrix otherwise."""
    A, a_norm = _matrix(rows)
    if cols is not None:
        B, b_norm = _matrix(cols)
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatch(f"dimension mismatch: {A.shape[1]} != {B.shape[1]}")
    if spec.kind == "rbf":
        if cols is None:
            return distances.pairwise(spec.measure, A, normalized=not a_norm, threads=threads)
        if a_norm != b_norm:
            A = A if a_norm else _normalized(A)
            B = B if b_norm else _normalized(B)
            return distances.pairwise(spec.measure, A, B, normalized=False, threads=threads)
        return distances.pairwise(spec.measure, A, B, normalized=not a_norm, threads=threads)
    if cols is None:
        G = A @ A.T
        iu = np.triu_indices(G.shape[0], 1)
        G[(iu[1], iu[0])] = G[iu]
        return G
    return A @ B.T


def _normalized(A):
    return np.asarray([normalize(r).values for r in A])


def apply_kernel(spec: KernelSpec, base: np.ndarray) -> np.ndarray:
    """Turn a :func:`base_matrix` result into kernel values for ``spec``."""
    if spec.kind == "rbf":
        return rbf_from_distance(base, spec.gamma)
    if spec.kind == "poly":
        return (base + spec.coef0) ** spec.degree
    return np.array(base, dtype=np.float64, copy=True)


def gram(spec: KernelSpec, rows, cols=None, threads: int = 1) -> GramMatrix:
    """Kernel matrix between ``rows`` and ``cols`` (self-Gram when omitted)."""
    values = apply_kernel(spec, base_matrix(spec, rows, cols, threads=threads))
    return GramMatrix(values, spec)


class PDResult(NamedTuple):
    is_pd: bool
    min_eigenvalue: float


def check_pd(g) -> PDResult:
    """Audit a symmetric matrix for positive definiteness.

    ``is_pd`` is whether a Cholesky factorization without jitter succeeds;
    the smallest eigenvalue is reported either way.
    """
    values = g.values if isinstance(g, GramMatrix) else np.asarray(g, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {values.shape}")
    asym = float(np.max(np.abs(values - values.T))) if values.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"max asymmetry {asym:.3g} exceeds {SYMMETRY_TOL}")
    try:
        np.linalg.cholesky(values)
        is_pd = True
    except np.linalg.LinAlgError:
        is_pd = False
    min_eig = float(np.linalg.eigvalsh(values)[0])
    return PDResult(is_pd, min_eig)
