"""ROC curves and the low-false-positive partial AUC.

Anomalies (ground-truth label -1) are the detection-positive class and
higher scores mean more anomalous. Tied scores are swept as one
threshold plateau, so the curve contains one vertex per distinct score.
auc001 is the area under TPR over the false-positive interval [0, 0.01],
normalized by the interval width (a perfect detector scores 1.0, chance
scores 0.005).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

FPR_LIMIT = 0.01


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc001: float

    def to_points(self) -> list[list[float]]:
        return [[float(f), float(t)] for f, t in zip(self.fpr, self.tpr)]


def roc(scores, truth, fpr_limit: float = FPR_LIMIT) -> RocCurve:
    """Threshold sweep over ``scores`` against ground truth in {-1, +1}."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.shape != truth.shape:
        raise DataError("scores and truth must have equal length")
    pos = truth == -1
    neg = truth == 1
    n_pos = int(np.sum(pos))
    n_neg = int(np.sum(neg))
    if n_pos == 0 or n_neg == 0:
        raise DataError(
            f"roc needs both classes in truth (anomalies {n_pos}, nominals {n_neg})"
        )
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    is_pos = pos[order].astype(np.int64)
    # group tied scores into single plateau steps
    boundary = np.flatnonzero(np.diff(s_sorted) != 0.0)
    ends = np.concatenate([boundary, [len(s_sorted) - 1]])
    tp_cum = np.cumsum(is_pos)
    fp_cum = np.cumsum(1 - is_pos)
    tpr = np.concatenate([[0.0], tp_cum[ends] / n_pos])
    fpr = np.concatenate([[0.0], fp_cum[ends] / n_neg])
    return RocCurve(fpr=fpr, tpr=tpr, auc001=partial_auc(fpr, tpr, fpr_limit))


def partial_auc(fpr, tpr, limit: float = FPR_LIMIT) -> float:
    """Normalized area under the piecewise-linear curve on [0, limit]."""
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    if limit <= 0:
        raise DataError("fpr limit must be positive")
    inside = fpr <= limit
    fx = fpr[inside]
    fy = tpr[inside]
    if fx[-1] < limit and np.any(~inside):
        ycut = float(np.interp(limit, fpr, tpr))
        fx = np.concatenate([fx, [limit]])
        fy = np.concatenate([fy, [ycut]])
    area = float(np.trapezoid(fy, fx)) if hasattr(np, "trapezoid") else float(np.trapz(fy, fx))
    return area / limit


def auc001(scores, truth) -> float:
    return roc(scores, truth).auc001
