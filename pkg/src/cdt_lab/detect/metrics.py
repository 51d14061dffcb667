"""ROC AUC and thresholded per-class metrics."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

THRESHOLD = 0.5


class UndefinedMetric(ValueError):
    pass


def auc(scores, labels) -> float:
    """Mann-Whitney concordance: P(score_pos > score_neg) with ties counted 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs at least one sample of each class")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(pred, labels) -> dict:
    pred = np.asarray(pred).astype(int)
    labels = np.asarray(labels).astype(int)
    return {
        "tp": int(((pred == 1) & (labels == 1)).sum()),
        "fp": int(((pred == 1) & (labels == 0)).sum()),
        "tn": int(((pred == 0) & (labels == 0)).sum()),
        "fn": int(((pred == 0) & (labels == 1)).sum()),
    }


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def metrics(scores, labels, threshold: float = THRESHOLD) -> dict:
    """Per-class precision/recall/F1 at ``threshold`` plus AUC from the raw scores.

    Metrics with an empty denominator are reported as 0 and listed in ``flags``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    cm = confusion((scores >= threshold).astype(int), labels)
    flags: list[str] = []
    per_class = {}
    for cls, (tp, fp, fn) in {1: (cm["tp"], cm["fp"], cm["fn"]), 0: (cm["tn"], cm["fn"], cm["fp"])}.items():
        p = _ratio(tp, tp + fp, f"precision[{cls}]: no predicted samples", flags)
        r = _ratio(tp, tp + fn, f"recall[{cls}]: no true samples", flags)
        f1 = _ratio(2 * p * r, p + r, f"f1[{cls}]: precision and recall are 0", flags)
        per_class[cls] = {"precision": p, "recall": r, "f1": f1, "support": tp + fn}
    try:
        area = auc(scores, labels)
    except UndefinedMetric:
        flags.append("auc: single class")
        area = float("nan")
    return {"per_class": per_class, "auc": area, "confusion": cm, "flags": flags}
