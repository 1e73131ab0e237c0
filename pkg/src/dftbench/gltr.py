"""GLTR-style detector: rank-bin fraction features, an L2-regularized logistic
classifier trained by damped Newton iteration, cross-validated grid search over
C, and prediction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Label
from .decoding import make_rng

FEATURE_VERSION = "gltr-4bin-v1"
# disjoint rank bins: [1,10], (10,100], (100,1000], (1000, inf)
BIN_EDGES = (10, 100, 1000)


class GltrError(ValueError):
    """Raised for invalid detector inputs."""


@dataclass(frozen=True)
class GltrFeatureVector:
    fractions: np.ndarray
    token_count: int

    def __post_init__(self):
        fr = np.asarray(self.fractions, dtype=np.float64)
        object.__setattr__(self, "fractions", fr)
        if fr.shape != (4,):
            raise GltrError("feature vector must have exactly 4 fractions")
        if np.any(fr < 0) or abs(float(fr.sum()) - 1.0) > 1e-9:
            raise GltrError("fractions must be non-negative and sum to 1")
        if self.token_count < 1:
            raise GltrError("token count must be positive")


@dataclass(frozen=True)
class TrainingGrid:
    C_values: tuple = (100.0, 10.0, 1.0, 0.1, 0.01)
    folds: int = 5

    def __post_init__(self):
        if not self.C_values:
            raise GltrError("grid must contain at least one C value")
        if any(c <= 0 for c in self.C_values):
            raise GltrError("C values must be positive")
        if self.folds < 2:
            raise GltrError("grid search needs at least 2 folds")


@dataclass
class GltrModel:
    weights: np.ndarray
    bias: float
    chosen_C: float
    cv_score: float
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "chosen_C": float(self.chosen_C),
            "cv_score": float(self.cv_score),
            "threshold": float(self.threshold),
            "feature_version": FEATURE_VERSION,
        }

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GltrModel":
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
        if obj.get("feature_version") != FEATURE_VERSION:
            raise GltrError(f"unsupported feature version {obj.get('feature_version')!r}")
        return cls(
            weights=np.asarray(obj["weights"], dtype=np.float64),
            bias=float(obj["bias"]),
            chosen_C=float(obj["chosen_C"]),
            cv_score=float(obj["cv_score"]),
            threshold=float(obj.get("threshold", 0.5)),
        )


def extract_features(scores: Sequence) -> GltrFeatureVector:
    """Fractions of tokens whose rank falls in Top-10 / Top-100 / Top-1000 /
    beyond (disjoint bins)."""
    if not scores:
        raise GltrError("cannot extract features from an empty score list")
    counts = np.zeros(4)
    for s in scores:
        if s.rank <= BIN_EDGES[0]:
            counts[0] += 1
        elif s.rank <= BIN_EDGES[1]:
            counts[1] += 1
        elif s.rank <= BIN_EDGES[2]:
            counts[2] += 1
        else:
            counts[3] += 1
    n = len(scores)
    return GltrFeatureVector(counts / n, n)


def _as_matrix(features) -> np.ndarray:
    rows = []
    for f in features:
        fr = f.fractions if isinstance(f, GltrFeatureVector) else np.asarray(f, dtype=np.float64)
        rows.append(fr)
    X = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise GltrError("non-finite feature value")
    return X


def _as_labels(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, Label):
            if lab is Label.UNKNOWN:
                raise GltrError("cannot train on UNKNOWN labels")
            out.append(1 if lab is Label.SYNTHETIC else 0)
        else:
            out.append(int(lab))
    return np.asarray(out, dtype=np.int64)


def regularized_loss(w: np.ndarray, b: float, X: np.ndarray, y01: np.ndarray, C: float) -> float:
    """(1/2C)·||w||^2 + sum softplus(-y·z) with y in {-1,+1}; bias unpenalized."""
    y = 2.0 * y01 - 1.0
    z = X @ w + b
    margins = -y * z
    # numerically stable softplus
    loss = np.sum(np.where(margins > 30, margins, np.log1p(np.exp(np.minimum(margins, 30)))))
    return float(loss + (0.5 / C) * np.dot(w, w))


def _loss_grad_hess(theta: np.ndarray, X: np.ndarray, y01: np.ndarray, C: float):
    w, b = theta[:-1], theta[-1]
    y = 2.0 * y01 - 1.0
    z = X @ w + b
    margins = -y * z
    loss = float(np.sum(np.where(margins > 30, margins, np.log1p(np.exp(np.minimum(margins, 30))))))
    loss += (0.5 / C) * float(np.dot(w, w))
    sig = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))  # P(y=+1)
    resid = sig - y01
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ resid + w / C
    grad[-1] = float(resid.sum())
    s = sig * (1.0 - sig)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    hess = (Xb * s[:, None]).T @ Xb
    hess[np.diag_indices(len(w))] += 1.0 / C
    return loss, grad, hess


def _fit_logistic(X: np.ndarray, y01: np.ndarray, C: float,
                  grad_tol: float = 1e-8, max_iter: int = 200):
    """Damped Newton minimization of the regularized negative log-likelihood.

    The objective is strictly convex (L2 term), so Newton with backtracking
    converges to the unique optimum deterministically.
    """
    theta = np.zeros(X.shape[1] + 1)
    loss, grad, hess = _loss_grad_hess(theta, X, y01, C)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= grad_tol:
            break
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(len(theta)), grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            cand_loss, cand_grad, cand_hess = _loss_grad_hess(cand, X, y01, C)
            if cand_loss <= loss - 1e-4 * t * float(grad @ step):
                theta, loss, grad, hess = cand, cand_loss, cand_grad, cand_hess
                break
            t *= 0.5
        else:
            break
    return theta[:-1], float(theta[-1])


def _f1(preds: np.ndarray, labels: np.ndarray) -> float:
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def _stratified_folds(y01: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Deterministic fold assignment: seeded shuffle within each label, then
    position mod folds."""
    rng = make_rng(seed)
    assignment = np.empty(len(y01), dtype=np.int64)
    for label in (0, 1):
        idx = np.flatnonzero(y01 == label)
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            assignment[i] = pos % folds
    return assignment


def train(features, labels, grid: Optional[TrainingGrid] = None, seed: int = 0,
          threshold: float = 0.5) -> GltrModel:
    grid = grid or TrainingGrid()
    X = _as_matrix(features)
    y01 = _as_labels(labels)
    if len(X) != len(y01):
        raise GltrError("features and labels must have the same length")
    for label in (0, 1):
        if int(np.sum(y01 == label)) < 2:
            raise GltrError("training requires at least 2 examples per class")

    folds = _stratified_folds(y01, grid.folds, seed)
    best_C, best_score = None, -1.0
    for C in grid.C_values:
        fold_scores = []
        for k in range(grid.folds):
            train_mask = folds != k
            test_mask = ~train_mask
            if not test_mask.any() or len(set(y01[train_mask])) < 2:
                continue
            w, b = _fit_logistic(X[train_mask], y01[train_mask], C)
            preds = (X[test_mask] @ w + b >= 0).astype(np.int64) if threshold == 0.5 else \
                (1 / (1 + np.exp(-(X[test_mask] @ w + b))) >= threshold).astype(np.int64)
            fold_scores.append(_f1(preds, y01[test_mask]))
        mean_score = float(np.mean(fold_scores)) if fold_scores else 0.0
        # ties resolved toward the larger C
        if mean_score > best_score or (mean_score == best_score and C > best_C):
            best_C, best_score = C, mean_score

    w, b = _fit_logistic(X, y01, best_C)
    return GltrModel(weights=w, bias=b, chosen_C=float(best_C),
                     cv_score=best_score, threshold=threshold)


def predict(model: GltrModel, features: GltrFeatureVector):
    """Probability of SYNTHETIC and the thresholded label."""
    fr = features.fractions if isinstance(features, GltrFeatureVector) else np.asarray(features)
    z = float(np.dot(model.weights, fr) + model.bias)
    score = 1.0 / (1.0 + math.exp(-z))
    label = Label.SYNTHETIC if score >= model.threshold else Label.REAL
    return score, label
