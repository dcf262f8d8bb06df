"""Two-sample tests, Bonferroni control and the feature-distribution audit."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

KS_SERIES_EPS = 1e-16
WILCOXON_EXACT_MAX_N = 12
DEFAULT_ALPHAS = (0.05, 0.005, 0.001)
DEFAULT_NUM_PAIRS = 200_000


class EmptySample(ValueError):
    pass


class AllZeroDifferences(ValueError):
    pass


class TestResult(NamedTuple):
    statistic: float
    p_value: float
    n_effective: int


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_statistic(x, y) -> float:
    """``sup_t |F_x(t) - F_y(t)|`` over the pooled sample points."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    y = np.sort(np.asarray(y, dtype=np.float64))
    if x.size == 0 or y.size == 0:
        raise EmptySample("both samples must be non-empty")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / x.size
    fy = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # 1 - sqrt(2 pi)/lam * sum exp(-(2k-1)^2 pi^2 / (8 lam^2)); converges fast here
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * lam * lam))
            total += term
            if term < KS_SERIES_EPS:
                break
            k += 1
        p = 1.0 - math.sqrt(2.0 * math.pi) / lam * total
    else:
        total = 0.0
        k = 1
        while True:
            term = math.exp(-2.0 * k * k * lam * lam)
            total += term if k % 2 else -term
            if term < KS_SERIES_EPS:
                break
            k += 1
        p = 2.0 * total
    return min(1.0, max(0.0, p))


def ks_two_sample(x, y) -> TestResult:
    """Two-sided two-sample K-S test with the asymptotic p-value.

    The p-value uses ``lambda = sqrt(n m / (n + m)) * D``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    d = ks_statistic(x, y)
    n, m = x.size, y.size
    n_eff = n * m / (n + m)
    return TestResult(d, kolmogorov_sf(math.sqrt(n_eff) * d), int(round(n_eff)))


# ---------------------------------------------------------------------------
# Wilcoxon signed rank


def _rank_abs(d: np.ndarray) -> np.ndarray:
    """Ranks of ``|d|`` starting at 1, ties receiving their average rank."""
    a = np.abs(d)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    ranks = np.empty(a.size)
    start = 0
    while start < a.size:
        stop = start
        while stop + 1 < a.size and sorted_a[stop + 1] == sorted_a[start]:
            stop += 1
        ranks[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return ranks


def signed_rank_null(ranks) -> tuple[np.ndarray, np.ndarray]:
    """Exact null distribution of W+ for the given (possibly tied) ranks.

    Returns ``(values, probabilities)``. Ranks are half-integers at worst,
    so the count-polynomial is built over doubled ranks.
    """
    doubled = np.rint(2.0 * np.asarray(ranks)).astype(np.int64)
    top = int(doubled.sum())
    counts = np.zeros(top + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:top + 1 - r]
        counts = counts + shifted
    support = np.flatnonzero(counts)
    return support / 2.0, counts[support] / 2.0 ** doubled.size


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(x, y=None, alternative: str = "two-sided",
                         exact_max_n: int = WILCOXON_EXACT_MAX_N) -> TestResult:
    """Paired Wilcoxon signed-rank test on ``x - y``.

    Zero differences are dropped, ties get average ranks and the statistic
    is ``min(W+, W-)``. For ``n <= exact_max_n`` remaining pairs the p-value
    is exact; otherwise the normal approximation with tie-corrected variance
    and continuity correction is used.

    ``alternative='greater'`` tests for ``x`` tending to exceed ``y``.
    """
    d = np.asarray(x, dtype=np.float64).ravel()
    if y is not None:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size != d.size:
            raise ValueError("paired samples must have equal length")
        d = d - y
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = _rank_abs(d)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if n <= exact_max_n:
        values, probs = signed_rank_null(ranks)
        p_le = float(probs[values <= w_plus + 1e-9].sum())
        p_ge = float(probs[values >= w_plus - 1e-9].sum())
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
        sd = math.sqrt(var)
        p_ge = _normal_sf((w_plus - mean - 0.5) / sd)
        p_le = _normal_sf((mean - w_plus - 0.5) / sd)
    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_le, p_ge))
    return TestResult(stat, min(1.0, max(0.0, p)), n)


# ---------------------------------------------------------------------------
# multiple testing


def bonferroni(p_values, alpha: float) -> np.ndarray:
    """Flag ``p_i < alpha / m`` for ``m`` tests."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    return p < alpha / p.size


# ---------------------------------------------------------------------------
# feature-distribution audit


@dataclass
class AuditReport:
    num_pairs: int
    alpha_levels: list
    percent_significant: dict
    median_p: float
    seed: int
    test: str
    num_errors: int = 0
    pairs_distinct: int = 0
    p_values: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "num_pairs": self.num_pairs,
            "alpha_levels": list(self.alpha_levels),
            "percent_significant": {format(a, "g"): v for a, v in self.percent_significant.items()},
            "median_p": self.median_p,
            "seed": self.seed,
            "test": self.test,
            "num_errors": self.num_errors,
            "pairs_distinct": self.pairs_distinct,
        }

    def to_csv(self) -> str:
        lines = ["alpha,percent_significant"]
        lines += [f"{format(a, 'g')},{self.percent_significant[a]!r}" for a in self.alpha_levels]
        return "\n".join(lines) + "\n"


def sample_pairs(n_columns: int, num_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """Unordered column pairs: distinct until the pool runs out, then with replacement."""
    pool = n_columns * (n_columns - 1) // 2
    take = min(num_pairs, pool)
    flat = rng.choice(pool, size=take, replace=False)
    if num_pairs > pool:
        flat = np.concatenate([flat, rng.integers(0, pool, size=num_pairs - pool)])
    # invert the row-major index of the strict upper triangle
    iu, ju = np.triu_indices(n_columns, 1)
    return np.column_stack([iu[flat], ju[flat]])


def audit_feature_distributions(features, num_pairs: int = DEFAULT_NUM_PAIRS,
                                alphas: Sequence[float] = DEFAULT_ALPHAS,
                                test: str = "ks", seed: int = 0,
                                threads: int = 1) -> AuditReport:
    """Test whether pairs of feature columns share a distribution.

    Each sampled column pair is tested (two-sample K-S, or paired Wilcoxon
    across rows), Bonferroni-corrected with ``m = num_pairs``, and the
    percentage of significant pairs is reported per alpha. Pairs whose test
    raises are counted as not significant and tallied in ``num_errors``.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError("features must be an M x N matrix")
    M, N = F.shape
    if N < 2:
        raise ValueError("need at least 2 feature columns")
    if M < 8:
        raise ValueError("need at least 8 rows")
    if num_pairs < 1:
        raise ValueError("num_pairs must be positive")
    test = test.lower()
    if test not in ("ks", "wilcoxon"):
        raise ValueError(f"unknown test {test!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA0D17]))
    pairs = sample_pairs(N, num_pairs, rng)
    run = ks_two_sample if test == "ks" else wilcoxon_signed_rank
    cols = np.ascontiguousarray(F.T)

    def chunk(bounds):
        lo, hi = bounds
        out = np.empty(hi - lo)
        errs = 0
        for k in range(lo, hi):
            i, j = pairs[k]
            try:
                out[k - lo] = run(cols[i], cols[j]).p_value
            except (AllZeroDifferences, EmptySample):
                out[k - lo] = np.nan
                errs += 1
        return out, errs

    step = max(1, -(-num_pairs // max(1, threads * 4)))
    bounds = [(lo, min(num_pairs, lo + step)) for lo in range(0, num_pairs, step)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, bounds))
    else:
        parts = [chunk(b) for b in bounds]
    p = np.concatenate([part[0] for part in parts])
    n_err = sum(part[1] for part in parts)
    valid = np.where(np.isnan(p), 1.0, p)
    alphas = sorted((float(a) for a in alphas), reverse=True)
    percent = {a: float(100.0 * bonferroni(valid, a).sum() / num_pairs) for a in alphas}
    finite = p[~np.isnan(p)]
    median = float(np.median(finite)) if finite.size else float("nan")
    distinct = len({(int(a), int(b)) for a, b in pairs})
    return AuditReport(num_pairs=num_pairs, alpha_levels=alphas, percent_significant=percent,
                       median_p=median, seed=int(seed), test=test, num_errors=n_err,
                       pairs_distinct=distinct, p_values=p)
