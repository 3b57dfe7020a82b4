"""Accuracy, group parity scores, explanation compactness and glocal similarity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPSILON = 0.01


def _matrix(E) -> np.ndarray:
    E = np.asarray(getattr(E, "E", E), dtype=float)
    if E.ndim != 2 or E.size == 0:
        raise ValueError("explanation matrix must be a nonempty 2-D array")
    return E


def _labels(a, name: str) -> np.ndarray:
    a = np.asarray(a).astype(int).ravel()
    if not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be binary 0/1")
    return a


def accuracy(preds, labels) -> float:
    preds, labels = _labels(preds, "preds"), _labels(labels, "labels")
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {labels.size} labels")
    if preds.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(preds == labels))


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    TN: int
    FP: int
    FN: int

    @classmethod
    def of(cls, preds, labels) -> "ConfusionCounts":
        preds, labels = np.asarray(preds), np.asarray(labels)
        return cls(
            TP=int(np.sum((preds == 1) & (labels == 1))),
            TN=int(np.sum((preds == 0) & (labels == 0))),
            FP=int(np.sum((preds == 1) & (labels == 0))),
            FN=int(np.sum((preds == 0) & (labels == 1))),
        )

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN


def _rate(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def _diff(a: float | None, b: float | None) -> float | None:
    return None if a is None or b is None else a - b


FAIRNESS_METRICS = ("PPR_D", "NPR_D", "FPR_D", "EO_D")


@dataclass(frozen=True)
class FairnessReport:
    """Group-A rate minus group-B rate; ``None`` marks a zero denominator."""

    PPR_D: float | None
    NPR_D: float | None
    FPR_D: float | None
    EO_D: float | None
    size_A: int
    size_B: int
    counts_A: ConfusionCounts
    counts_B: ConfusionCounts

    def signed(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in FAIRNESS_METRICS}

    def absolute(self) -> dict[str, float | None]:
        return {k: None if v is None else abs(v) for k, v in self.signed().items()}


def fairness(preds, labels, groups) -> FairnessReport:
    preds, labels = _labels(preds, "preds"), _labels(labels, "labels")
    groups = np.asarray(groups).astype(str)
    if not (preds.shape == labels.shape == groups.shape):
        raise ValueError("preds, labels and groups must have equal length")
    in_a, in_b = groups == "A", groups == "B"
    if not in_a.any() or not in_b.any():
        raise ValueError("both protected groups A and B must be nonempty")
    a = ConfusionCounts.of(preds[in_a], labels[in_a])
    b = ConfusionCounts.of(preds[in_b], labels[in_b])

    def rates(c: ConfusionCounts):
        return (
            _rate(c.TP, c.TP + c.FP),
            _rate(c.TN, c.TN + c.FN),
            _rate(c.FP, c.TN + c.FP),
            _rate(c.TP, c.TP + c.FN),
        )

    ra, rb = rates(a), rates(b)
    ppr, npr, fpr, eo = (_diff(x, y) for x, y in zip(ra, rb))
    return FairnessReport(ppr, npr, fpr, eo, int(in_a.sum()), int(in_b.sum()), a, b)


def xcp_per_sample(E, epsilon: float = EPSILON) -> np.ndarray:
    """Fraction of each row's scores with ``|score| < epsilon``."""
    E = _matrix(E)
    return np.mean(np.abs(E) < epsilon, axis=1)


def xcp(E, epsilon: float = EPSILON) -> float:
    return float(np.mean(xcp_per_sample(E, epsilon)))


def global_importance(E) -> np.ndarray:
    return np.mean(np.abs(_matrix(E)), axis=0)


def glocal_sim(E, g=None, epsilon: float = EPSILON) -> np.ndarray:
    """Per-sample ``1 - hamming(|E[i]| > eps, g > eps) / m``."""
    E = _matrix(E)
    g = global_importance(E) if g is None else np.asarray(g, dtype=float)
    if g.shape != (E.shape[1],):
        raise ValueError(f"g has shape {g.shape}, expected ({E.shape[1]},)")
    rows = np.abs(E) > epsilon
    ref = g > epsilon
    return 1.0 - np.sum(rows != ref[None, :], axis=1) / E.shape[1]


def distribution_summary(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "mean": float(v.mean()),
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v.max()),
    }
