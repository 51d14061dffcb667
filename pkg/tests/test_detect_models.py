import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdt_lab.detect.importance import WrongModelKind, gini_importance, select_features
from cdt_lab.detect.metrics import UndefinedMetric, auc, metrics
from cdt_lab.detect.models import GaussianNB, LogisticRegression, NotFitted, loss_and_grad
from cdt_lab.detect.trees import DecisionTree, TreeEnsemble


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_example():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.1, 0.9], [0, 1]) == 1.0


def test_auc_single_class():
    with pytest.raises(UndefinedMetric):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5).map(lambda v: v / 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_matches_pairwise_count(pairs):
    scores, labels = zip(*pairs)
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


def test_metrics_per_class_and_flags():
    m = metrics([0.9, 0.8, 0.2, 0.6], [1, 1, 0, 0])
    assert m["confusion"] == {"tp": 2, "fp": 1, "tn": 1, "fn": 0}
    assert m["per_class"][1]["precision"] == pytest.approx(2 / 3)
    assert m["per_class"][1]["recall"] == 1.0
    assert m["per_class"][0]["recall"] == 0.5
    flagged = metrics([0.1, 0.2], [0, 1])
    assert any("precision[1]" in f for f in flagged["flags"])


def test_naive_bayes_hand_posterior():
    X = np.array([[0.0], [2.0], [4.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    nb = GaussianNB().fit(X, y)
    # class means 1 and 5, population variance 1, equal priors
    assert nb.predict_proba([[3.0]])[0] == pytest.approx(0.5, abs=1e-9)
    assert nb.predict_proba([[2.0]])[0] == pytest.approx(1 / (1 + math.exp(4.0)), abs=1e-9)
    assert nb.posterior([[2.0]]).sum() == pytest.approx(1.0, abs=1e-12)


def test_naive_bayes_constant_feature_is_finite():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]])
    p = GaussianNB().fit(X, [0, 0, 1, 1]).predict_proba(X)
    assert np.all(np.isfinite(p))


def test_naive_bayes_requires_fit():
    with pytest.raises(NotFitted):
        GaussianNB().predict_proba([[0.0]])


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = (rng.random(30) < 0.5).astype(float)
    params = rng.normal(size=5)
    _, grad = loss_and_grad(params, X, y, 0.7)
    eps = 1e-6
    numeric = np.array([(loss_and_grad(params + eps * e, X, y, 0.7)[0]
                         - loss_and_grad(params - eps * e, X, y, 0.7)[0]) / (2 * eps) for e in np.eye(5)])
    np.testing.assert_allclose(grad, numeric, atol=1e-6)


def separable(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = (np.arange(n) % 2).astype(int)
    X[:, 0] += 6 * y
    return X, y


@pytest.mark.parametrize("model", [GaussianNB(), LogisticRegression(C=1.0),
                                   TreeEnsemble(20, seed=1), TreeEnsemble(20, extra=True, seed=1)],
                         ids=["nb", "logistic", "forest", "extra"])
def test_separable_fixture(model):
    X, y = separable()
    assert auc(model.fit(X, y).predict_proba(X), y) == 1.0


def test_logistic_standardization_toggle():
    X, y = separable()
    a = LogisticRegression(C=1.0, standardize=True).fit(X, y).predict_proba(X)
    b = LogisticRegression(C=1.0, standardize=False).fit(X, y).predict_proba(X)
    assert auc(a, y) == auc(b, y) == 1.0


def test_stump_on_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 5, dtype=float)
    y = np.array([0, 1, 1, 0] * 5)
    stump = DecisionTree(max_depth=1).fit(X, y)
    acc = np.mean((stump.predict_proba(X) >= 0.5) == y)
    assert acc <= 0.75
    for seed in range(5):
        forest = TreeEnsemble(n_estimators=1, max_depth=1, seed=seed).fit(X, y)
        assert np.mean(forest.predict(X) == y) <= 0.75
    full = DecisionTree().fit(X, y)
    assert np.mean((full.predict_proba(X) >= 0.5) == y) == 1.0


def test_ensemble_determinism():
    X, y = separable(40, 3)
    a = TreeEnsemble(15, seed=5).fit(X, y).predict_proba(X)
    b = TreeEnsemble(15, seed=5).fit(X, y).predict_proba(X)
    np.testing.assert_array_equal(a, b)


def test_importance_dominant_feature():
    X, y = separable(60, 1)
    # every split considers all features, so the signal column wins each one
    model = TreeEnsemble(50, max_features=None, seed=0).fit(X, y)
    ranked = gini_importance(model, ["signal", "n1", "n2"], k=None)
    assert ranked[0][0] == "signal" and ranked[0][1] >= 0.9
    assert sum(v for _, v in ranked) == pytest.approx(1.0)
    assert len(gini_importance(model, ["signal", "n1", "n2"], k=2)) == 2


def test_importance_wrong_model():
    X, y = separable()
    with pytest.raises(WrongModelKind):
        gini_importance(LogisticRegression().fit(X, y), ["a", "b", "c"])


def test_select_features():
    X, y = separable(60, 2)
    kept, manifest = select_features(X, y, ["signal", "n1", "n2"], seed=0, n_estimators=50)
    assert "signal" in manifest["kept"]
    assert sorted(manifest["kept"] + manifest["dropped"]) == ["n1", "n2", "signal"]
    assert manifest["n_after"] == len(kept)
    one, m1 = select_features(X[:, :1], y, ["signal"], n_estimators=10)
    assert m1["kept"] == ["signal"]
