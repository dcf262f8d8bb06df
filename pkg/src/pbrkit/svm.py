"""C-SVC on precomputed kernels: SMO solver, one-vs-rest wrapper, SV counts.

The dual is solved in the form

    min_a  f(a) = 1/2 a'Qa - sum(a),   Q_ij = y_i y_j K_ij,
    s.t.   0 <= a_i <= C,  sum(y_i a_i) = 0,

by sequential minimal optimization with maximal-violating-pair selection.
The decision function is ``sum_i a_i y_i K(x_i, x) + bias``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .histcore import DimensionMismatch

SV_THRESHOLD = 1e-12
CURVATURE_FLOOR = 1e-12


class InvalidProblem(ValueError):
    pass


class NonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class SvmModel:
    alpha: np.ndarray
    y: np.ndarray
    bias: float
    C: float
    converged: bool = True
    iterations: int = 0
    label_map: tuple = (1, -1)

    @property
    def sv_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > SV_THRESHOLD)

    @property
    def dual_coef(self) -> np.ndarray:
        return self.alpha * self.y


def _validate(K, y, C):
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidProblem(f"Gram matrix must be square, got {K.shape}")
    if K.shape[0] != y.size:
        raise InvalidProblem(f"Gram size {K.shape[0]} != {y.size} labels")
    if not np.all((y == 1) | (y == -1)):
        raise InvalidProblem("binary labels must be +1/-1")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise InvalidProblem("both classes must be present")
    if not C > 0:
        raise InvalidProblem(f"C must be positive, got {C!r}")
    return K, y


def dual_objective(alpha, y, K) -> float:
    """``sum(a) - 1/2 a'Qa`` (the maximization form)."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def _violation_sets(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def kkt_violation(alpha, y, K, C) -> float:
    """Largest KKT gap ``max_{up} -y G - min_{low} -y G`` (0 when optimal)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grad = y * (np.asarray(K) @ (alpha * y)) - 1.0
    score = -y * grad
    up, low = _violation_sets(alpha, y, C)
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(score[up].max() - score[low].min()))


def _bias(alpha, y, grad, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        ub = float(yg[ub_mask].min()) if ub_mask.any() else np.inf
        lb = float(yg[lb_mask].max()) if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (
            ub if np.isfinite(ub) else lb)
    return -rho


def train_binary(K, y, C: float, tol: float = 1e-3, max_passes: int = 1000,
                 label_map=(1, -1), objective_trace: Optional[list] = None) -> SvmModel:
    """Train a binary C-SVC on a precomputed (possibly indefinite) Gram matrix.

    Parameters
    ----------
    K : (M, M) array
        Training Gram matrix, used as-is.
    y : (M,) array of +1/-1
    C : float
        Box constraint.
    tol : float
        Stop once the maximal KKT violation is at most ``tol``.
    max_passes : int
        Iteration budget is ``max_passes * M``; exhausting it returns the
        current iterate with ``converged=False`` and a warning.
    objective_trace : list, optional
        If given, the dual objective after every update is appended.
    """
    if not tol > 0:
        raise InvalidProblem("tol must be positive")
    K, y = _validate(K, y, C)
    m = y.size
    C = float(C)
    alpha = np.zeros(m)
    grad = -np.ones(m)
    diag = np.diag(K).copy()
    max_iter = max_passes * m
    converged = False
    it = 0
    while it < max_iter:
        score = -y * grad
        up, low = _violation_sets(alpha, y, C)
        if not up.any() or not low.any():
            converged = True
            break
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        if s_up[i] - s_low[j] <= tol:
            converged = True
            break
        it += 1
        # move a_i += y_i t, a_j -= y_j t; slope is negative for a violating pair
        slope = y[i] * grad[i] - y[j] * grad[j]
        eta = diag[i] + diag[j] - 2.0 * K[i, j]
        t_i = C - alpha[i] if y[i] > 0 else alpha[i]
        t_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t_max = min(t_i, t_j)
        if eta > CURVATURE_FLOOR:
            t = min(t_max, -slope / eta)
        else:
            # non-convex direction: the minimum lies at the far box endpoint
            t = t_max
        new_i = alpha[i] + y[i] * t
        new_j = alpha[j] - y[j] * t
        if t == t_i:
            new_i = C if y[i] > 0 else 0.0
        if t == t_j:
            new_j = 0.0 if y[j] > 0 else C
        new_i = min(C, max(0.0, new_i))
        new_j = min(C, max(0.0, new_j))
        d_i = new_i - alpha[i]
        d_j = new_j - alpha[j]
        alpha[i] = new_i
        alpha[j] = new_j
        grad += y * (K[:, i] * (y[i] * d_i) + K[:, j] * (y[j] * d_j))
        if objective_trace is not None:
            objective_trace.append(dual_objective(alpha, y, K))
    if not converged:
        warnings.warn(f"SMO did not reach tol={tol} within {max_iter} iterations",
                      NonConvergenceWarning, stacklevel=2)
    return SvmModel(alpha=alpha, y=y, bias=_bias(alpha, y, grad, C), C=C,
                    converged=converged, iterations=it, label_map=tuple(label_map))


def decision_value(model: SvmModel, kernel_row) -> float:
    row = np.asarray(kernel_row, dtype=np.float64)
    if row.shape != model.alpha.shape:
        raise DimensionMismatch(
            f"kernel row has length {row.size}, model has {model.alpha.size} training points")
    return float(row @ model.dual_coef + model.bias)


def decision_values(model: SvmModel, kernel_rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
    if rows.shape[1] != model.alpha.size:
        raise DimensionMismatch(
            f"kernel rows have width {rows.shape[1]}, model has {model.alpha.size} training points")
    return rows @ model.dual_coef + model.bias


@dataclass(frozen=True, eq=False)
class OvrModel:
    """One binary model per class, in ``classes`` order."""

    models: tuple
    classes: tuple
    train_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.models) != len(self.classes):
            raise InvalidProblem("model count must equal class count")


def train_ovr(K, labels, C: float, tol: float = 1e-3, max_passes: int = 1000,
              threads: int = 1) -> OvrModel:
    """One-vs-rest: class c is +1, every other class -1."""
    K = np.asarray(K, dtype=np.float64)
    labels = np.asarray(labels)
    classes = tuple(np.unique(labels).tolist())
    if len(classes) < 2:
        raise InvalidProblem("one-vs-rest needs at least two classes")

    def fit(c):
        y = np.where(labels == c, 1.0, -1.0)
        return train_binary(K, y, C, tol=tol, max_passes=max_passes, label_map=(c, "rest"))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = tuple(pool.map(fit, classes))
    else:
        models = tuple(fit(c) for c in classes)
    return OvrModel(models=models, classes=classes, train_labels=labels.copy())


def ovr_decision_values(ovr: OvrModel, kernel_rows) -> np.ndarray:
    return np.column_stack([decision_values(m, kernel_rows) for m in ovr.models])


def predict_ovr(ovr: OvrModel, kernel_rows) -> np.ndarray:
    """Class with the largest decision value; ties go to the earliest class."""
    scores = ovr_decision_values(ovr, kernel_rows)
    return np.asarray(ovr.classes)[np.argmax(scores, axis=1)]


def count_svs(ovr) -> int:
    """Distinct training points that are support vectors in any submodel."""
    models = ovr.models if isinstance(ovr, OvrModel) else [ovr]
    union = set()
    for m in models:
        union.update(m.sv_indices.tolist())
    return len(union)


def ovr_to_dict(ovr: OvrModel, kernel_spec: Optional[dict] = None,
                class_names: Optional[dict] = None) -> dict:
    """JSON-ready form: class order, sparse alphas, biases, C and kernel spec."""
    per_class = []
    for c, m in zip(ovr.classes, ovr.models):
        sv = m.sv_indices
        per_class.append({
            "class": int(c),
            "name": (class_names or {}).get(int(c), str(c)),
            "bias": float(m.bias),
            "alphas": {str(int(i)): float(m.alpha[i]) for i in sv},
            "converged": bool(m.converged),
        })
    return {
        "format": "pbrkit-ovr-svm",
        "version": 1,
        "classes": [int(c) for c in ovr.classes],
        "C": float(ovr.models[0].C),
        "kernel": kernel_spec,
        "n_train": int(ovr.models[0].alpha.size),
        "train_labels": [int(v) for v in ovr.train_labels],
        "models": per_class,
    }


def ovr_from_dict(doc: dict) -> OvrModel:
    labels = np.asarray(doc["train_labels"])
    n = int(doc["n_train"])
    models = []
    for entry in doc["models"]:
        c = entry["class"]
        alpha = np.zeros(n)
        for k, v in entry["alphas"].items():
            alpha[int(k)] = float(v)
        y = np.where(labels == c, 1.0, -1.0)
        models.append(SvmModel(alpha=alpha, y=y, bias=float(entry["bias"]),
                               C=float(doc["C"]), converged=bool(entry.get("converged", True)),
                               label_map=(c, "rest")))
    return OvrModel(models=tuple(models), classes=tuple(doc["classes"]), train_labels=labels)

