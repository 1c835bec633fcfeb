"""ROC curves, TPR at fixed FPR, AUC, and aggregation across runs.

Orientation is fixed: an example is predicted a member iff its score is at
least the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

LOW_FPRS = (0.001, 0.01)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, labels) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be matching 1-d arrays")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one member and one non-member")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(~labels[order])
    # one operating point per distinct threshold: the last index of each tie block
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:
        fpr = np.r_[fpr, 1.0]
        tpr = np.r_[tpr, 1.0]
    return RocCurve(fpr, tpr)


def tpr_at_fpr(curve: RocCurve, x: float) -> float:
    """Best TPR among operating points with FPR <= x; no interpolation."""
    if not 0 < x < 1:
        raise ValueError(f"FPR level must be in (0, 1), got {x}")
    return float(curve.tpr[curve.fpr <= x].max())


def auc(curve: RocCurve) -> float:
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


@dataclass
class RunMetrics:
    tpr_at_fpr_001: float
    tpr_at_fpr_01: float
    auc: float

    @classmethod
    def from_curve(cls, curve: RocCurve) -> "RunMetrics":
        return cls(tpr_at_fpr(curve, 0.001), tpr_at_fpr(curve, 0.01), auc(curve))


@dataclass
class MetricSummary:
    mean: float
    std: float


@dataclass
class AttackMetrics:
    tpr_at_fpr_001: MetricSummary
    tpr_at_fpr_01: MetricSummary
    auc: MetricSummary
    run_count: int

    def to_dict(self) -> Dict:
        return {
            "tpr_at_fpr_0.001": {"mean": self.tpr_at_fpr_001.mean, "std": self.tpr_at_fpr_001.std},
            "tpr_at_fpr_0.01": {"mean": self.tpr_at_fpr_01.mean, "std": self.tpr_at_fpr_01.std},
            "auc": {"mean": self.auc.mean, "std": self.auc.std},
            "run_count": self.run_count,
        }


def mean_std(values: Sequence[float]) -> MetricSummary:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot aggregate zero runs")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return MetricSummary(float(values.mean()), std)


def aggregate(runs: Sequence[RunMetrics]) -> AttackMetrics:
    if not runs:
        raise ValueError("cannot aggregate zero runs")
    return AttackMetrics(
        mean_std([r.tpr_at_fpr_001 for r in runs]),
        mean_std([r.tpr_at_fpr_01 for r in runs]),
        mean_std([r.auc for r in runs]),
        len(runs),
    )


def format_metric(s: MetricSummary, digits: int = 4) -> str:
    return f"{s.mean:.{digits}f} ± {s.std:.{digits}f}"
