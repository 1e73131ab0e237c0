"""Detection metrics (precision/recall/F1, AUC, signed percentage deltas,
evasion rate), average-linkage distribution distance, and report assembly."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Label


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _to01(values) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, Label):
            if v is Label.UNKNOWN:
                raise EvalError("UNKNOWN label in evaluation input")
            out.append(1 if v is Label.SYNTHETIC else 0)
        else:
            out.append(int(v))
    return np.asarray(out, dtype=np.int64)


def confusion_counts(preds, labels) -> ConfusionCounts:
    p, y = _to01(preds), _to01(labels)
    if len(p) != len(y):
        raise EvalError("predictions and labels differ in length")
    if len(p) == 0:
        raise EvalError("empty evaluation input")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (y == 1))),
        fp=int(np.sum((p == 1) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
        tn=int(np.sum((p == 0) & (y == 0))),
    )


def confusion_metrics(preds, labels):
    """(precision, recall, f1) for the SYNTHETIC class; zero denominators
    yield 0 by convention."""
    c = confusion_counts(preds, labels)
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney statistic with midrank tie handling."""
    s = np.asarray(list(scores), dtype=np.float64)
    y = _to01(labels)
    if len(s) != len(y):
        raise EvalError("scores and labels differ in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise EvalError("AUC requires both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def delta(new: float, baseline: float) -> float:
    """Signed percentage change relative to a baseline metric value."""
    if baseline <= 0:
        raise EvalError("baseline must be positive for a percentage delta")
    return 100.0 * (new - baseline) / baseline


def round_half_away(value: float, digits: int = 1) -> float:
    factor = 10 ** digits
    return math.copysign(math.floor(abs(value) * factor + 0.5), value) / factor


def evasion_rate(results) -> float:
    """Fraction of perturbed synthetic samples classified REAL. Inputs must be
    restricted to originally-correctly-classified synthetic documents and every
    result must carry a detector verdict."""
    results = list(results)
    if not results:
        raise EvalError("evasion rate needs at least one attack result")
    evaded = 0
    for res in results:
        if res.evaded is None:
            raise EvalError(f"missing detector verdict on result {res.perturbed.id!r}")
        evaded += bool(res.evaded)
    return evaded / len(results)


def avg_linkage_distance(X, Y) -> float:
    """Mean Euclidean distance over all cross-pairs of two embedding sets."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.size == 0 or Y.size == 0:
        raise EvalError("both sets must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise EvalError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    diffs = X[:, None, :] - Y[None, :, :]
    return float(np.mean(np.sqrt(np.sum(diffs * diffs, axis=2))))


@dataclass
class EvalReport:
    f1: float
    precision: float
    recall: float
    auc: Optional[float] = None
    delta_f1: Optional[float] = None
    delta_recall: Optional[float] = None
    evasion_rate: Optional[float] = None
    quality_before: Optional[float] = None
    quality_after: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path) -> "EvalReport":
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(**obj)

    def csv_header(self) -> str:
        return "f1,delta_f1,precision,recall,delta_recall,auc,evasion_rate,quality_before,quality_after"

    def to_csv_row(self) -> str:
        def fmt(v, pct=False):
            if v is None:
                return ""
            return f"{round_half_away(v, 1):.1f}" if pct else f"{v:.4f}"
        return ",".join([
            fmt(self.f1), fmt(self.delta_f1, pct=True), fmt(self.precision),
            fmt(self.recall), fmt(self.delta_recall, pct=True), fmt(self.auc),
            fmt(self.evasion_rate), fmt(self.quality_before), fmt(self.quality_after),
        ])
