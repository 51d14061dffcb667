"""Model grids, stratified folds and nested cross-validation."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .metrics import auc, metrics
from .models import GaussianNB, LogisticRegression
from .trees import TreeEnsemble

MODEL_KINDS = ("gaussian_nb", "logistic_regression", "random_forest", "extra_trees")


class SingleClassTraining(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: tuple = ()  # sorted (name, value) pairs

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @classmethod
    def of(cls, kind: str, **params) -> "ModelSpec":
        return cls(kind, tuple(sorted(params.items())))

    @property
    def kwargs(self) -> dict:
        return dict(self.params)

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={'None' if v is None else v}" for k, v in self.params)
        return f"{self.kind}({inner})"


def _forest_grid(kind, estimators, depths):
    return [ModelSpec.of(kind, n_estimators=n, max_depth=d) for n in estimators for d in depths]


GRIDS = {
    "default": (
        _forest_grid("random_forest", (50, 100, 200), (10, 50, 200, None))
        + _forest_grid("extra_trees", (50, 100, 200), (10, 50, 200, None))
        + [ModelSpec.of("logistic_regression", C=c) for c in (0.01, 0.1, 1.0, 10.0)]
        + [ModelSpec.of("gaussian_nb")]
    ),
    "fast": (
        [ModelSpec.of("random_forest", n_estimators=100, max_depth=None),
         ModelSpec.of("extra_trees", n_estimators=100, max_depth=None)]
        + [ModelSpec.of("logistic_regression", C=c) for c in (0.1, 1.0)]
        + [ModelSpec.of("gaussian_nb")]
    ),
}


def make_model(spec: ModelSpec, seed: int = 0):
    kw = spec.kwargs
    if spec.kind == "gaussian_nb":
        return GaussianNB(**kw)
    if spec.kind == "logistic_regression":
        return LogisticRegression(**kw)
    return TreeEnsemble(extra=spec.kind == "extra_trees", seed=seed, **kw)


def fit_predict(spec: ModelSpec, X_train, y_train, X_test, seed: int = 0):
    """Fit on the training part; return (scores, hard labels) for the test part."""
    y_train = np.asarray(y_train).astype(int)
    if len(np.unique(y_train)) < 2:
        raise SingleClassTraining("training data holds a single class")
    model = make_model(spec, seed).fit(X_train, y_train)
    scores = model.predict_proba(X_test)
    return scores, (scores >= 0.5).astype(int)


def stratified_folds(y, k: int, seed: int = 0, groups=None) -> list[np.ndarray]:
    """Test-index arrays of ``k`` stratified folds.

    Without ``groups`` each class is shuffled and dealt round-robin. With
    ``groups`` whole groups are dealt instead (never split across folds);
    groups with the same label composition are dealt together so every fold
    keeps the class balance.
    """
    y = np.asarray(y).astype(int)
    rng = np.random.default_rng(seed)
    if groups is None:
        units = {("", int(i)): [int(i)] for i in range(len(y))}
    else:
        units = {}
        for i, g in enumerate(groups):
            units.setdefault(("g", str(g)), []).append(i)
    buckets: dict[tuple, list] = {}
    for key in sorted(units):
        members = units[key]
        buckets.setdefault(tuple(sorted(y[members].tolist())), []).append(members)
    folds = [[] for _ in range(k)]
    offset = 0
    for sig in sorted(buckets):
        bucket = buckets[sig]
        for j, pos in enumerate(rng.permutation(len(bucket))):
            folds[(j + offset) % k].extend(bucket[pos])
        offset += len(bucket)
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class EvalReport:
    auc: float
    per_class: dict
    confusion: dict
    selected_model: str
    selected_counts: dict
    fold_auc: list
    fold_models: list
    n_samples: int
    n_features: int
    outer_k: int
    inner_k: int
    seed: int
    grid: str = ""
    importance: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    aggregation: str = "mean over outer folds"

    def to_dict(self) -> dict:
        return {
            "auc": self.auc, "aggregation": self.aggregation,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "confusion": self.confusion, "selected_model": self.selected_model,
            "selected_counts": self.selected_counts, "fold_auc": self.fold_auc,
            "fold_models": self.fold_models, "n_samples": self.n_samples,
            "n_features": self.n_features, "outer_k": self.outer_k, "inner_k": self.inner_k,
            "seed": self.seed, "grid": self.grid,
            "importance": [[n, v] for n, v in self.importance], "flags": self.flags,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _inner_select(X, y, train, grid, inner_k, seed, groups=None):
    sub_groups = None if groups is None else [groups[i] for i in train]
    folds = stratified_folds(y[train], inner_k, seed, sub_groups)
    means = []
    for g, spec in enumerate(grid):
        vals = []
        for f, test_local in enumerate(folds):
            mask = np.ones(len(train), bool)
            mask[test_local] = False
            tr, te = train[mask], train[test_local]
            if len(np.unique(y[te])) < 2:
                continue
            scores, _ = fit_predict(spec, X[tr], y[tr], X[te], seed + 7919 * f + g)
            vals.append(auc(scores, y[te]))
        means.append(np.mean(vals) if vals else -np.inf)
    best = int(np.argmax(means))  # first maximum keeps grid order on ties
    return grid[best], means


def nested_cv(X, y, grid="fast", outer_k: int = 10, inner_k: int = 10, seed: int = 0,
              feature_names=None, top_k: int = 10, groups=None) -> EvalReport:
    """Outer folds estimate performance; inner folds pick the model by mean AUC.

    ``groups`` labels samples that must stay in the same fold (for instance
    the two desktop samples of one session stage, which share every
    session-level feature).
    """
    from .importance import gini_importance

    grid_name = grid if isinstance(grid, str) else "custom"
    specs = list(GRIDS[grid]) if isinstance(grid, str) else list(grid)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    counts = np.bincount(y, minlength=2)
    if counts.min() < outer_k:
        raise InsufficientSamples(f"need at least {outer_k} samples per class, have {counts.tolist()}")
    n = len(y)
    outer = stratified_folds(y, outer_k, seed, groups)
    fold_auc, fold_models = [], []
    per_fold = []
    cm_total = Counter()
    flags = []
    for k, test in enumerate(outer):
        train = np.setdiff1d(np.arange(n), test)
        spec, _ = _inner_select(X, y, train, specs, inner_k, seed + 1000 * (k + 1), groups)
        # fold provenance: selection only ever saw the outer-training part
        assert not set(train.tolist()) & set(test.tolist())
        if groups is not None:
            assert not {groups[i] for i in train} & {groups[i] for i in test}
        scores, _ = fit_predict(spec, X[train], y[train], X[test], seed + k)
        m = metrics(scores, y[test])
        fold_auc.append(m["auc"])
        fold_models.append(spec.label)
        per_fold.append(m["per_class"])
        cm_total.update(m["confusion"])
        flags.extend(f"fold {k + 1}: {fl}" for fl in m["flags"])
    per_class = {c: {key: float(np.mean([pf[c][key] for pf in per_fold]))
                     for key in ("precision", "recall", "f1")} for c in (1, 0)}
    for c in (1, 0):
        per_class[c]["support"] = int(counts[c])
    tally = Counter(fold_models)
    order = {s.label: i for i, s in enumerate(specs)}
    selected = min(tally, key=lambda lab: (-tally[lab], order[lab]))
    spec = next(s for s in specs if s.label == selected)
    importance = []
    if spec.kind in ("random_forest", "extra_trees"):
        names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
        model = make_model(spec, seed).fit(X, y)
        importance = gini_importance(model, names, top_k)
    return EvalReport(float(np.nanmean(fold_auc)), per_class, dict(cm_total), selected,
                      dict(sorted(tally.items())), fold_auc, fold_models, n, X.shape[1],
                      outer_k, inner_k, seed, grid_name, importance, flags)
