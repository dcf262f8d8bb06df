"""Bin-to-bin histogram distances, with the Poisson-Binomial Radius (PBR).

Every measure is written once as a function of two arrays whose last axis
holds the bins, so the scalar API and the pairwise matrix API share the
exact same arithmetic.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .histcore import (DimensionMismatch, HistError, as_feature_vector, normalize,
                       normalize_rows, validate_pair)

DENOMINATOR_FLOOR = 1e-12


class DegenerateDenominator(HistError):
    """``N - mu`` is not positive; only reachable with unnormalized inputs."""


class Measure(str, enum.Enum):
    PBR = "pbr"
    BD = "bd"
    JD = "jd"
    CHI2 = "chi2"
    HELLINGER = "hellinger"
    HI = "hi"
    L1 = "l1"
    L2 = "l2"
    L1BRD = "l1brd"

    @classmethod
    def parse(cls, value) -> "Measure":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            try:
                return cls[str(value).upper()]
            except KeyError:
                raise ValueError(f"unknown measure {value!r}; choose from "
                                 f"{', '.join(m.value for m in cls)}") from None


@dataclass(frozen=True, eq=False)
class DifferenceVector:
    """Per-bin divergence terms between two histograms.

    ``mu`` and ``sigma2`` are the mean and variance of the Poisson-Binomial
    law obtained by reading the terms as success probabilities.
    """

    e: np.ndarray
    mu: float
    sigma2: float


# ---------------------------------------------------------------------------
# per-bin kernels over the last axis


def _divergence_terms(a, b):
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, a * np.log(2.0 * a / s), 0.0)
        tb = np.where(b > 0, b * np.log(2.0 * b / s), 0.0)
    # each bin's sum is non-negative exactly; rounding can dip below zero when a ~ b
    return np.maximum(ta + tb, 0.0)


def _pbr(a, b):
    e = _divergence_terms(a, b)
    mu = e.sum(axis=-1)
    sigma2 = (e * (1.0 - e)).sum(axis=-1)
    denom = a.shape[-1] - mu
    if np.any(denom <= DENOMINATOR_FLOOR):
        raise DegenerateDenominator(
            f"N - mu = {np.min(denom)!r} <= {DENOMINATOR_FLOOR}; inputs must be normalized")
    return sigma2 / denom


def _jd(a, b):
    return _divergence_terms(a, b).sum(axis=-1)


def _chi2(a, b):
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, (a - b) ** 2 / s, 0.0)
    return t.sum(axis=-1)


def _hellinger_sq(a, b):
    # equals 1 - sum(sqrt(a*b)) for unit-mass inputs, but exact at a == b
    return 0.5 * ((np.sqrt(a) - np.sqrt(b)) ** 2).sum(axis=-1)


def _hellinger(a, b):
    return np.sqrt(_hellinger_sq(a, b))


def _bd(a, b):
    coeff = np.sqrt(a * b).sum(axis=-1)
    h2 = np.minimum(_hellinger_sq(a, b), 1.0)
    with np.errstate(divide="ignore"):
        out = -np.log1p(-h2)
    return np.where(coeff > 0, out, np.inf)


def _hi(a, b):
    # 1 - sum(min(a, b)) for unit-mass inputs
    return 0.5 * np.abs(a - b).sum(axis=-1)


def _l1(a, b):
    return np.abs(a - b).sum(axis=-1)


def _l2(a, b):
    return np.sqrt(((a - b) ** 2).sum(axis=-1))


def _l1brd(a, b):
    inner = (a * b).sum(axis=-1, keepdims=True)
    s = a + b
    d = a - b
    with np.errstate(divide="ignore", invalid="ignore"):
        # divide by s before squaring so tiny bins do not underflow s*s
        u, p, q = d / s, a / s, b / s
        t = np.where(s > 0, np.abs(d) * (u * u + 2.0 * p * q * (1.0 - inner)), 0.0)
    return t.sum(axis=-1)


_RULES = {
    Measure.PBR: _pbr,
    Measure.BD: _bd,
    Measure.JD: _jd,
    Measure.CHI2: _chi2,
    Measure.HELLINGER: _hellinger,
    Measure.HI: _hi,
    Measure.L1: _l1,
    Measure.L2: _l2,
    Measure.L1BRD: _l1brd,
}


# ---------------------------------------------------------------------------
# public API


def _prepare(x, y, normalized: bool):
    validate_pair(x, y)
    if normalized:
        x, y = normalize(x), normalize(y)
    else:
        x, y = as_feature_vector(x), as_feature_vector(y)
    return x.values, y.values


def difference_vector(x, y, normalized: bool = True) -> DifferenceVector:
    """Per-bin terms ``a ln(2a/(a+b)) + b ln(2b/(a+b))`` with 0 ln 0 = 0."""
    a, b = _prepare(x, y, normalized)
    e = _divergence_terms(a, b)
    e.setflags(write=False)
    return DifferenceVector(e=e, mu=float(e.sum()), sigma2=float((e * (1.0 - e)).sum()))


def pbr(x, y, normalized: bool = True) -> float:
    """Poisson-Binomial Radius ``sigma2 / (N - mu)`` of the difference vector.

    Inputs are L1-normalized first unless ``normalized=False`` (raw mode,
    outside the regime where the terms behave like probabilities).

    Raises
    ------
    DegenerateDenominator
        If ``N - mu <= 1e-12``.
    """
    a, b = _prepare(x, y, normalized)
    return float(_pbr(a, b))


def evaluate(measure, x, y, normalized: bool = True) -> float:
    """Distance between two histograms under ``measure``.

    BD on histograms with disjoint support returns ``math.inf``.
    """
    rule = _RULES[Measure.parse(measure)]
    a, b = _prepare(x, y, normalized)
    return float(rule(a, b))


def pairwise(measure, A, B=None, normalized: bool = True,
             threads: int = 1, max_block: int = 1 << 22) -> np.ndarray:
    """Distance matrix between the rows of ``A`` and the rows of ``B``.

    With ``B`` omitted the matrix is square; only the upper triangle is
    evaluated and mirrored so the result is exactly symmetric. Row blocks
    are independent and may be spread over ``threads`` workers; the result
    does not depend on the worker count.
    """
    rule = _RULES[Measure.parse(measure)]
    square = B is None
    A = np.asarray(A, dtype=np.float64)
    B = A if square else np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("pairwise expects 2-D matrices")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {A.shape[1]} != {B.shape[1]}")
    if normalized:
        A = normalize_rows(A)
        B = A if square else normalize_rows(B)
    m, n = A.shape[0], B.shape[0]
    out = np.empty((m, n))
    step = max(1, max_block // max(1, n * A.shape[1]))

    def fill(start):
        stop = min(m, start + step)
        lo = start if square else 0
        out[start:stop, lo:] = rule(A[start:stop, None, :], B[None, lo:, :])

    starts = range(0, m, step)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    if square:
        iu = np.triu_indices(m, 1)
        out[(iu[1], iu[0])] = out[iu]
    return out


def fig1_table(d, e, f) -> dict:
    """Distances (d, e) and (d, f) for every measure, keyed by measure id."""
    return {m.value: (evaluate(m, d, e), evaluate(m, d, f)) for m in Measure}


def is_undefined(value: float) -> bool:
    """True for the infinity sentinel BD returns on disjoint supports."""
    return math.isinf(value)
