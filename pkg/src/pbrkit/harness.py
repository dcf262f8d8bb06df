"""Evaluation protocol: grid-search CV, repeated subsampling, significance.

Every random draw is keyed on ``SeedSequence([seed, repeat, stream])`` so a
repeat's train/test split and inner CV folds are the same for every method
and do not depend on how repeats are scheduled across workers.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import distances, svm
from .distances import Measure
from .kernels import KernelSpec, apply_kernel
from .stats import AllZeroDifferences, wilcoxon_signed_rank

SPLIT_STREAM = 0
CV_STREAM = 1
DEFAULT_FOLDS = 5


class ClassTooSmall(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Candidate hyperparameters; defaults are the full-scale ranges."""

    log2_C: tuple = tuple(range(-2, 17, 2))
    log2_gamma: tuple = tuple(range(-4, 9, 2))
    degrees: tuple = (1, 2, 3, 4, 5)

    def __post_init__(self):
        for name in ("log2_C", "log2_gamma", "degrees"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must not be empty")
            if list(vals) != sorted(set(vals)):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        if any(d not in (1, 2, 3, 4, 5) for d in self.degrees):
            raise ValueError("degrees must lie in 1..5")

    @classmethod
    def single(cls, log2_C: int = 0, log2_gamma: int = 0, degree: int = 1) -> "GridSpec":
        return cls((log2_C,), (log2_gamma,), (degree,))

    def to_dict(self) -> dict:
        return {"log2_C": list(self.log2_C), "log2_gamma": list(self.log2_gamma),
                "degrees": list(self.degrees)}


@dataclass(frozen=True)
class Method:
    """A kernel family: ``linear``, ``poly`` or a distance-substituted RBF."""

    kind: str
    measure: Optional[Measure] = None

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = name.strip().lower()
        if key == "linear":
            return cls("linear")
        if key in ("poly", "polynomial"):
            return cls("poly")
        return cls("rbf", Measure.parse(key))

    @property
    def name(self) -> str:
        return self.measure.value if self.kind == "rbf" else self.kind

    def candidates(self, grid: GridSpec):
        """(C, KernelSpec) pairs in tie-break order: C, then gamma or degree."""
        for lc in grid.log2_C:
            C = 2.0 ** lc
            if self.kind == "linear":
                yield C, KernelSpec.linear()
            elif self.kind == "poly":
                for d in grid.degrees:
                    yield C, KernelSpec.polynomial(d)
            else:
                for lg in grid.log2_gamma:
                    yield C, KernelSpec.d_rbf(self.measure, 2.0 ** lg)

    def base_matrix(self, X: np.ndarray, threads: int = 1) -> np.ndarray:
        """Parameter-free matrix over normalized rows ``X``."""
        if self.kind == "rbf":
            return distances.pairwise(self.measure, X, normalized=False, threads=threads)
        G = X @ X.T
        iu = np.triu_indices(G.shape[0], 1)
        G[(iu[1], iu[0])] = G[iu]
        return G


def _params(C: float, spec: KernelSpec) -> dict:
    out = {"C": C, "log2_C": int(round(math.log2(C)))}
    if spec.kind == "rbf":
        out.update(gamma=spec.gamma, log2_gamma=int(round(math.log2(spec.gamma))))
    elif spec.kind == "poly":
        out.update(degree=spec.degree)
    return out


def macro_accuracy(predictions, labels) -> float:
    """Mean per-class accuracy over the classes present in ``labels``, in percent."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if lab.size == 0:
        raise EmptyInput("no labels")
    if pred.shape != lab.shape:
        raise ValueError("predictions and labels differ in length")
    per_class = [np.mean(pred[lab == c] == c) for c in np.unique(lab)]
    return float(100.0 * np.mean(per_class))


def stratified_folds(labels, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    assign = np.empty(labels.size, dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < folds:
            raise ClassTooSmall(f"class {c} has {idx.size} members, fewer than {folds} folds")
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = np.arange(idx.size) % folds
    return assign


def stratified_split(labels, n_train_per_class: int, rng: np.random.Generator):
    """Indices of a train set with ``n_train_per_class`` per class and the rest."""
    labels = np.asarray(labels)
    train = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size <= n_train_per_class:
            raise ClassTooSmall(
                f"class {c} has {idx.size} members; need more than {n_train_per_class}")
        train.append(idx[rng.permutation(idx.size)[:n_train_per_class]])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def _fit_predict(base, train, test, labels, C, spec, tol):
    K = apply_kernel(spec, base[np.ix_(train, train)])
    model = svm.train_ovr(K, labels[train], C, tol=tol)
    pred = svm.predict_ovr(model, apply_kernel(spec, base[np.ix_(test, train)]))
    return model, pred


def grid_search_base(base: np.ndarray, labels, method: Method, grid: GridSpec,
                     folds: int, rng: np.random.Generator, tol: float = 1e-3):
    """Grid search on a precomputed base matrix; returns ``(C, spec, cv_score)``."""
    labels = np.asarray(labels)
    assign = stratified_folds(labels, folds, rng)
    splits = [(np.flatnonzero(assign != f), np.flatnonzero(assign == f)) for f in range(folds)]
    best = None
    for C, spec in method.candidates(grid):
        scores = []
        for tr, va in splits:
            _, pred = _fit_predict(base, tr, va, labels, C, spec, tol)
            scores.append(macro_accuracy(pred, labels[va]))
        score = float(np.mean(scores))
        if best is None or score > best[2]:
            best = (C, spec, score)
    return best


def grid_search(train, method, grid: GridSpec = GridSpec(), folds: int = DEFAULT_FOLDS,
                seed: int = 0, tol: float = 1e-3) -> dict:
    """Stratified k-fold CV over ``grid``; ties favour smaller C, then smaller gamma / degree."""
    method = Method.parse(method) if isinstance(method, str) else method
    data = train.normalized_copy()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), CV_STREAM]))
    C, spec, score = grid_search_base(method.base_matrix(data.X), data.labels, method,
                                      grid, folds, rng, tol)
    return {**_params(C, spec), "cv_accuracy": score, "kernel": spec.to_dict()}


# ---------------------------------------------------------------------------
# repeated subsampling benchmark


@dataclass
class MethodResult:
    name: str
    accuracies: list
    sv_counts: list
    best_params: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))

    @property
    def sv_mean(self) -> float:
        return float(np.mean(self.sv_counts))

    def to_dict(self) -> dict:
        return {"name": self.name, "accuracies": list(self.accuracies), "mean": self.mean,
                "std": self.std, "sv_counts": list(self.sv_counts), "sv_mean": self.sv_mean,
                "best_params": list(self.best_params)}


@dataclass
class BenchmarkReport:
    methods: list
    seed: int
    repeats: int
    n_train_per_class: int
    folds: int
    grid: dict
    n_samples: int = 0
    n_classes: int = 0

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "repeats": self.repeats,
                "n_train_per_class": self.n_train_per_class, "folds": self.folds,
                "grid": self.grid, "n_samples": self.n_samples, "n_classes": self.n_classes,
                "methods": [m.to_dict() for m in self.methods]}


_WORKER = {}


def _init_worker(state):
    _WORKER.clear()
    _WORKER.update(state)


def _run_repeat(r: int):
    st = _WORKER
    seed, labels = st["seed"], st["labels"]
    split_rng = np.random.default_rng(np.random.SeedSequence([seed, r, SPLIT_STREAM]))
    train, test = stratified_split(labels, st["n_train"], split_rng)
    out = []
    for method in st["methods"]:
        base = st["bases"][method.name]
        cv_rng = np.random.default_rng(np.random.SeedSequence([seed, r, CV_STREAM]))
        C, spec, score = grid_search_base(base[np.ix_(train, train)], labels[train], method,
                                          st["grid"], st["folds"], cv_rng, st["tol"])
        model, pred = _fit_predict(base, train, test, labels, C, spec, st["tol"])
        out.append((macro_accuracy(pred, labels[test]), svm.count_svs(model),
                    {**_params(C, spec), "cv_accuracy": score}))
    return out


def run_benchmark(data, methods: Sequence, n_train_per_class: int, repeats: int,
                  grid: GridSpec = GridSpec(), seed: int = 0, folds: int = DEFAULT_FOLDS,
                  threads: int = 1, tol: float = 1e-3) -> BenchmarkReport:
    """Repeated stratified subsampling with per-method grid search.

    For each repeat a train split with ``n_train_per_class`` items per class is
    drawn (shared by all methods), hyperparameters are chosen by CV on it, the
    chosen model is refit on the whole split and scored by macro accuracy on
    the remaining items.
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    methods = [Method.parse(m) if isinstance(m, str) else m for m in methods]
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("duplicate methods")
    data = data.normalized_copy()
    data.require_classes(2)
    labels = np.asarray(data.labels)
    stratified_split(labels, n_train_per_class, np.random.default_rng(0))  # size check only
    bases = {m.name: m.base_matrix(data.X, threads=threads) for m in methods}
    state = {"seed": int(seed), "labels": labels, "n_train": int(n_train_per_class),
             "methods": methods, "bases": bases, "grid": grid, "folds": int(folds),
             "tol": float(tol)}
    if threads > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=min(threads, repeats), initializer=_init_worker,
                                 initargs=(state,)) as pool:
            per_repeat = list(pool.map(_run_repeat, range(repeats)))
    else:
        _init_worker(state)
        per_repeat = [_run_repeat(r) for r in range(repeats)]
    results = []
    for k, name in enumerate(names):
        rows = [rep[k] for rep in per_repeat]
        results.append(MethodResult(name=name, accuracies=[row[0] for row in rows],
                                    sv_counts=[row[1] for row in rows],
                                    best_params=[row[2] for row in rows]))
    return BenchmarkReport(methods=results, seed=int(seed), repeats=int(repeats),
                           n_train_per_class=int(n_train_per_class), folds=int(folds),
                           grid=grid.to_dict(), n_samples=len(data),
                           n_classes=int(data.classes.size))


# ---------------------------------------------------------------------------
# significance


@dataclass
class Comparison:
    method: str
    p_value: float
    significant_05: bool
    significant_005: bool
    direction: str
    identical: bool = False
    median_difference: float = 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "p_value": self.p_value,
                "significant_0.05": self.significant_05, "significant_0.005": self.significant_005,
                "direction": self.direction, "identical": self.identical,
                "median_difference": self.median_difference}


@dataclass
class SignificanceMatrix:
    baseline: str
    n_comparisons: int
    comparisons: list = field(default_factory=list)

    def p_value(self, a: str, b: str) -> float:
        other = b if a == self.baseline else a
        if self.baseline not in (a, b):
            raise KeyError(f"only comparisons against {self.baseline!r} are available")
        if other == self.baseline:
            return 1.0
        for c in self.comparisons:
            if c.method == other:
                return c.p_value
        raise KeyError(other)

    def get(self, method: str) -> Comparison:
        for c in self.comparisons:
            if c.method == method:
                return c
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {"baseline": self.baseline, "n_comparisons": self.n_comparisons,
                "comparisons": [c.to_dict() for c in self.comparisons]}


def compare_methods(report: BenchmarkReport, baseline: str = "pbr",
                    alphas=(0.05, 0.005)) -> SignificanceMatrix:
    """Paired Wilcoxon of every method against ``baseline``, Bonferroni over comparisons."""
    if len(report.methods) < 2:
        raise ValueError("need at least two methods")
    base = report.method(baseline)
    others = [m for m in report.methods if m.name != baseline]
    m = len(others)
    a05, a005 = alphas
    comps = []
    for other in others:
        if len(other.accuracies) != len(base.accuracies):
            raise ValueError("methods have different repeat counts")
        diff = np.asarray(base.accuracies) - np.asarray(other.accuracies)
        med = float(np.median(diff))
        direction = "baseline" if med > 0 else "other" if med < 0 else "tie"
        try:
            p = wilcoxon_signed_rank(base.accuracies, other.accuracies).p_value
        except AllZeroDifferences:
            comps.append(Comparison(other.name, 1.0, False, False, "tie", identical=True,
                                    median_difference=0.0))
            continue
        comps.append(Comparison(other.name, p, bool(p < a05 / m), bool(p < a005 / m),
                                direction, median_difference=med))
    return SignificanceMatrix(baseline=baseline, n_comparisons=m, comparisons=comps)


def report_json(report: BenchmarkReport, significance: Optional[SignificanceMatrix] = None) -> str:
    """Canonical JSON text; identical inputs give byte-identical output."""
    doc = {"report": report.to_dict()}
    if significance is not None:
        doc["significance"] = significance.to_dict()
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def summary_csv(report: BenchmarkReport, significance: Optional[SignificanceMatrix] = None) -> str:
    """One row per method: mean, std, mean SV count and significance markers.

    ``+`` marks the baseline significantly better at 0.05 and ``*`` at 0.005
    (the stronger marker wins).
    """
    buf = io.StringIO()
    buf.write("method,mean,std,sv_mean,flags\n")
    for m in report.methods:
        flags = ""
        if significance is not None and m.name != significance.baseline:
            c = significance.get(m.name)
            if c.direction == "baseline":
                flags = "*" if c.significant_005 else "+" if c.significant_05 else ""
        buf.write(f"{m.name},{m.mean!r},{m.std!r},{m.sv_mean!r},{flags}\n")
    return buf.getvalue()
