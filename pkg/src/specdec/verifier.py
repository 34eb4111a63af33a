"""The judge verifier: a deterministic logistic-regression token classifier.

Training is full-batch gradient descent with backtracking line search (the
datasets are small and byte-identical refits matter more than speed), with
an L2 penalty of ``||w||^2 / (2 C n)`` so larger C means weaker
regularization; the bias is unregularized. Model selection is a grid search
over C scored by holdout ROC-AUC, and decision thresholds are calibrated on
the same holdout for a recall target and for the best F1.
"""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

VERIFIER_FORMAT_VERSION = 1

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-18


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_grad(
    weights: np.ndarray,
    bias: float,
    X: np.ndarray,
    y: np.ndarray,
    C: float,
) -> tuple[float, np.ndarray, float]:
    """Regularized mean logistic loss and its analytic gradient.

    loss = mean(log(1 + exp(z)) - y*z) + ||w||^2 / (2 C n), z = Xw + b.
    """
    n = X.shape[0]
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + float(weights @ weights) / (2.0 * C * n)
    resid = _sigmoid(z) - y
    grad_w = X.T @ resid / n + weights / (C * n)
    grad_b = float(np.mean(resid))
    return loss, grad_w, grad_b


class JudgeVerifier(BaseEstimator, ClassifierMixin):
    """Binary classifier over verifier feature vectors.

    Fitting starts from zero weights and runs deterministic full-batch
    descent until the gradient norm drops below ``tol`` or ``max_iter``
    steps elapse, so identical inputs always give identical models.

    Attributes set by :meth:`fit`: ``weights_``, ``bias_``, ``n_iter_``,
    ``converged_``. Grid search additionally attaches ``thresholds_`` and
    ``training_meta_``.
    """

    def __init__(self, C: float = 1.0, max_iter: int = 500, tol: float = 1e-8,
                 standardize: bool = False):
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.standardize = standardize

    def fit(self, X, y) -> "JudgeVerifier":
        X, y = check_X_y(X, y)
        y = np.asarray(y, dtype=float)
        if not ((y == 0) | (y == 1)).all():
            raise ValueError("labels must be binary")
        if y.min() == y.max():
            raise ValueError("degenerate labels: need both classes")
        if self.C <= 0:
            raise ValueError("C must be > 0")

        if self.standardize:
            self.feature_means_ = X.mean(axis=0)
            scales = X.std(axis=0)
            self.feature_scales_ = np.where(scales > 0, scales, 1.0)
            X = (X - self.feature_means_) / self.feature_scales_
        else:
            self.feature_means_ = None
            self.feature_scales_ = None

        w = np.zeros(X.shape[1])
        b = 0.0
        loss, gw, gb = logistic_loss_grad(w, b, X, y, self.C)
        loss_curve = [loss]
        step = 1.0
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            gnorm_sq = float(gw @ gw) + gb * gb
            if math.sqrt(gnorm_sq) < self.tol:
                converged = True
                it -= 1
                break
            step = min(step * 2.0, 1e4)
            while True:
                w_new = w - step * gw
                b_new = b - step * gb
                loss_new, gw_new, gb_new = logistic_loss_grad(w_new, b_new, X, y, self.C)
                if loss_new <= loss - _ARMIJO_C * step * gnorm_sq:
                    break
                step *= 0.5
                if step < _MIN_STEP:
                    break
            if step < _MIN_STEP:
                break
            w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
            loss_curve.append(loss)

        self.weights_ = w
        self.bias_ = b
        self.n_iter_ = it
        self.converged_ = converged
        self.loss_curve_ = loss_curve
        self.classes_ = np.array([False, True])
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "weights_"):
            raise NotFittedError("verifier is not fitted; call fit() first")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_array(X)
        if X.shape[1] != self.weights_.shape[0]:
            raise ValueError(
                f"feature dimension mismatch: got {X.shape[1]}, expected {self.weights_.shape[0]}"
            )
        if getattr(self, "feature_means_", None) is not None:
            X = (X - self.feature_means_) / self.feature_scales_
        return X @ self.weights_ + self.bias_

    def predict_proba(self, X) -> np.ndarray:
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) > 0


# ----------------------------------------------------------------------
# metrics and threshold calibration
# ----------------------------------------------------------------------


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """ROC-AUC: P(score_pos > score_neg) + 0.5 P(tie), via midranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of 1-based ranks
        i = j + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _f1(scores: np.ndarray, labels: np.ndarray, theta: float) -> float:
    pred = scores > theta
    tp = int((pred & labels).sum())
    if tp == 0:
        return 0.0
    precision = tp / int(pred.sum())
    recall = tp / int(labels.sum())
    return 2 * precision * recall / (precision + recall)


def select_threshold(
    scores: Sequence[float],
    labels: Sequence[bool],
    criterion: str,
    target_recall: float = 0.99,
) -> float:
    """Pick an accept threshold on holdout scores.

    ``f1``: the midpoint between sorted unique scores that maximizes the F1
    of the accept class, preferring the larger (more conservative) theta on
    ties. ``recall``: the largest theta whose accept-class recall reaches
    ``target_recall``; recall 1 is always attainable just below the minimum
    score, and recall 0 at the maximum score.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if not labels.any() or labels.all():
        raise ValueError("select_threshold needs both classes")
    uniq = np.unique(scores)
    midpoints = (uniq[:-1] + uniq[1:]) / 2.0

    if criterion == "f1":
        if midpoints.size == 0:
            warnings.warn("all scores identical; threshold is degenerate", RuntimeWarning)
            return float(uniq[0])
        best_theta = None
        best_f1 = -1.0
        for theta in midpoints:  # ascending: >= keeps the larger theta on ties
            f1 = _f1(scores, labels, float(theta))
            if f1 >= best_f1:
                best_f1 = f1
                best_theta = float(theta)
        return best_theta

    if criterion == "recall":
        candidates = np.concatenate([[uniq[-1]], midpoints[::-1], [uniq[0] - 1.0]])
        n_pos = int(labels.sum())
        for theta in candidates:  # descending: first hit is the largest theta
            recall = int((scores[labels] > theta).sum()) / n_pos
            if recall >= target_recall:
                return float(theta)
        warnings.warn(f"target recall {target_recall} unattainable", RuntimeWarning)
        return float(uniq[0] - 1.0)

    raise ValueError(f"unknown criterion: {criterion!r}")


# ----------------------------------------------------------------------
# grid search
# ----------------------------------------------------------------------


def default_c_grid() -> tuple[float, ...]:
    """Ten log-spaced regularization strengths from 0.001 to 100."""
    return tuple(float(c) for c in np.logspace(-3, 2, 10))


@dataclass(frozen=True)
class TrainConfig:
    c_grid: tuple[float, ...] = field(default_factory=default_c_grid)
    holdout_fraction: float = 0.2
    max_iter: int = 500
    tol: float = 1e-8
    target_recall: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if len(self.c_grid) == 0 or any(c <= 0 for c in self.c_grid):
            raise ValueError("c_grid must be nonempty and positive")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0, 1)")


def grid_search(X, y, config: TrainConfig) -> JudgeVerifier:
    """Train one verifier per C, keep the best holdout ROC-AUC.

    The split is a seeded shuffle; ties in AUC resolve to the smaller C.
    The winning model gets ``thresholds_`` (recall/f1, calibrated on the
    holdout) and ``training_meta_`` attached.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=bool)
    n = X.shape[0]
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_hold = max(1, int(round(config.holdout_fraction * n)))
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_ho, y_ho = X[hold_idx], y[hold_idx]

    best: JudgeVerifier | None = None
    best_auc = -1.0
    for C in sorted(set(config.c_grid)):
        model = JudgeVerifier(C=C, max_iter=config.max_iter, tol=config.tol).fit(X_tr, y_tr)
        auc = roc_auc(model.predict_proba(X_ho)[:, 1], y_ho)
        if auc > best_auc:
            best_auc = auc
            best = model

    scores = best.predict_proba(X_ho)[:, 1]
    best.thresholds_ = {
        "recall": select_threshold(scores, y_ho, "recall", config.target_recall),
        "f1": select_threshold(scores, y_ho, "f1"),
    }
    best.training_meta_ = {"C": best.C, "auc": best_auc, "seed": config.seed}
    return best


# ----------------------------------------------------------------------
# verifier files
# ----------------------------------------------------------------------


def save_verifier(model: JudgeVerifier, path: str | Path, meta: dict | None = None) -> None:
    """Write a verifier as JSON; floats keep full round-trip precision."""
    model._check_fitted()
    means = getattr(model, "feature_means_", None)
    doc = {
        "format_version": VERIFIER_FORMAT_VERSION,
        "feature_dim": int(model.weights_.shape[0]),
        "weights": [float(w) for w in model.weights_],
        "bias": float(model.bias_),
        "standardization": None
        if means is None
        else {
            "mean": [float(v) for v in means],
            "scale": [float(v) for v in model.feature_scales_],
        },
        "thresholds": getattr(model, "thresholds_", None),
        "training_meta": getattr(model, "training_meta_", None),
    }
    if meta is not None:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_verifier(path: str | Path) -> JudgeVerifier:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != VERIFIER_FORMAT_VERSION:
        raise ValueError(f"unsupported verifier format version: {doc.get('format_version')}")
    meta = doc.get("training_meta") or {}
    model = JudgeVerifier(C=meta.get("C", 1.0))
    model.weights_ = np.asarray(doc["weights"], dtype=float)
    model.bias_ = float(doc["bias"])
    std = doc.get("standardization")
    if std is None:
        model.feature_means_ = None
        model.feature_scales_ = None
    else:
        model.standardize = True
        model.feature_means_ = np.asarray(std["mean"], dtype=float)
        model.feature_scales_ = np.asarray(std["scale"], dtype=float)
    model.classes_ = np.array([False, True])
    if doc.get("thresholds") is not None:
        model.thresholds_ = doc["thresholds"]
    if doc.get("training_meta") is not None:
        model.training_meta_ = doc["training_meta"]
    return model
