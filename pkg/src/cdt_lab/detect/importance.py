"""Gini feature importance and importance-based feature selection."""
from __future__ import annotations

import numpy as np

from .trees import TreeEnsemble


class WrongModelKind(TypeError):
    pass


def gini_importance(model, feature_names, k: int | None = 10) -> list[tuple[str, float]]:
    """Top-``k`` (name, importance) pairs; ties are ordered by feature name."""
    if not isinstance(model, TreeEnsemble):
        raise WrongModelKind(f"{type(model).__name__} carries no impurity importances")
    imp = model.feature_importances_
    if len(imp) != len(feature_names):
        raise ValueError("feature_names length differs from the fitted model")
    ranked = sorted(zip(feature_names, imp.tolist()), key=lambda t: (-t[1], t[0]))
    return ranked if k is None else ranked[:k]


def select_features(X, y, feature_names, seed: int = 0, n_estimators: int = 100):
    """Keep the features whose extra-trees importance is at least the mean.

    Returns (kept column indices, manifest). A feature exactly at the mean is
    kept, so uniformly important features all survive.
    """
    model = TreeEnsemble(n_estimators=n_estimators, extra=True, seed=seed).fit(X, y)
    imp = model.feature_importances_
    threshold = float(imp.mean())
    keep = imp >= threshold - 1e-12
    kept = np.flatnonzero(keep)
    manifest = {
        "threshold": threshold,
        "kept": [feature_names[i] for i in kept],
        "dropped": [feature_names[i] for i in np.flatnonzero(~keep)],
        "n_before": len(feature_names),
        "n_after": int(keep.sum()),
    }
    return kept, manifest
