"""Poisson-Binomial distribution: exact pmf, moments and the Le Cam bound."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

POISSON_TAIL_MASS = 1e-12


class ProbabilityOutOfRange(ValueError):
    pass


class LeCamResult(NamedTuple):
    tv_distance: float
    bound: float
    holds: bool


def _check(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ProbabilityOutOfRange("need a non-empty 1-D vector of probabilities")
    bad = np.flatnonzero(~((p >= 0) & (p <= 1)))
    if bad.size:
        raise ProbabilityOutOfRange(f"p[{bad[0]}] = {p[bad[0]]!r} is outside [0, 1]")
    return p


def pb_pmf(p) -> np.ndarray:
    """Probability of n successes, n = 0..N, for independent Bernoulli(p_i).

    Each trial is folded into the running pmf in turn, which costs O(N^2)
    and is exact to working precision.
    """
    p = _check(p)
    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for k, pk in enumerate(p, start=1):
        # pmf[1..k] <- pmf[1..k](1 - p) + pmf[0..k-1] p, updated in place
        pmf[1:k + 1] = pmf[1:k + 1] * (1.0 - pk) + pmf[0:k] * pk
        pmf[0] *= 1.0 - pk
    return pmf


def pb_moments(p) -> tuple[float, float]:
    """Mean ``sum p`` and variance ``sum p(1-p)``."""
    p = _check(p)
    return float(p.sum()), float((p * (1.0 - p)).sum())


def poisson_pmf(lam: float, n: int) -> float:
    if lam == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(lam) - lam - math.lgamma(n + 1))


def lecam_check(p) -> LeCamResult:
    """Compare the Poisson-Binomial pmf with Poisson(sum p).

    ``tv_distance`` is ``sum_n |P(n) - Pois(n)|`` over all n (the Poisson
    tail is summed until its cumulative mass exceeds ``1 - 1e-12``) and
    ``bound`` is ``2 sum p_i^2``.
    """
    p = _check(p)
    pmf = pb_pmf(p)
    lam = float(p.sum())
    total = 0.0
    cumulative = 0.0
    n = 0
    while True:
        q = poisson_pmf(lam, n)
        cumulative += q
        total += abs((pmf[n] if n < pmf.size else 0.0) - q)
        n += 1
        if n >= pmf.size and (cumulative > 1.0 - POISSON_TAIL_MASS or q == 0.0 and n > lam):
            break
    bound = float(2.0 * (p * p).sum())
    return LeCamResult(total, bound, total < bound)
