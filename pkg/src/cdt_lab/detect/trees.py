"""Gini decision trees and tree ensembles (random forest, extra-trees).

The split search is compiled with numba; ensemble bookkeeping, bootstrap
draws and seed derivation stay in numpy so results are reproducible from a
single integer seed.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _gini(n0, n1):
    n = n0 + n1
    if n == 0:
        return 0.0
    p0 = n0 / n
    p1 = n1 / n
    return 1.0 - p0 * p0 - p1 * p1


@njit(cache=True)
def _build(X, codes, uniq, y, idx, max_depth, max_features, extra, seed):
    np.random.seed(seed)
    n_total = idx.shape[0]
    n_features = X.shape[1]
    cap = 2 * n_total + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros((cap, 2))
    importance = np.zeros(n_features)

    # stack entries: node id, start, end, depth (into a working copy of idx)
    work = idx.copy()
    stack = np.zeros((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_total
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    order = np.arange(n_features)
    h0 = np.zeros(uniq.shape[1], dtype=np.int64)
    h1 = np.zeros(uniq.shape[1], dtype=np.int64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n_node = end - start
        c1 = 0
        for i in range(start, end):
            c1 += y[work[i]]
        c0 = n_node - c1
        value[node, 0] = c0 / n_node
        value[node, 1] = c1 / n_node
        if c0 == 0 or c1 == 0 or n_node < 2:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue
        parent_imp = _gini(c0, c1)

        best_cost = np.inf
        best_f = -1
        best_t = 0.0
        # Fisher-Yates over features; stop after max_features non-constant ones
        for i in range(n_features):
            order[i] = i
        visited = 0
        for k in range(n_features):
            if visited >= max_features:
                break
            j = k + np.random.randint(n_features - k)
            tmp = order[k]
            order[k] = order[j]
            order[j] = tmp
            f = order[k]
            lo = np.inf
            hi = -np.inf
            for i in range(start, end):
                v = X[work[i], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi <= lo:
                continue
            visited += 1
            if extra:
                t = lo + (hi - lo) * np.random.random()
                if t >= hi:
                    t = lo
                l0 = 0
                l1 = 0
                for i in range(start, end):
                    s = work[i]
                    if X[s, f] <= t:
                        if y[s] == 1:
                            l1 += 1
                        else:
                            l0 += 1
                nl = l0 + l1
                nr = n_node - nl
                cost = (nl * _gini(l0, l1) + nr * _gini(c0 - l0, c1 - l1)) / n_node
                if cost < best_cost:
                    best_cost = cost
                    best_f = f
                    best_t = t
            else:
                # histogram scan over rank codes; thresholds are midpoints
                # between consecutive distinct training values
                clo = n_total
                chi = -1
                for i in range(start, end):
                    c = codes[work[i], f]
                    if c < clo:
                        clo = c
                    if c > chi:
                        chi = c
                for q in range(clo, chi + 1):
                    h0[q] = 0
                    h1[q] = 0
                for i in range(start, end):
                    s = work[i]
                    if y[s] == 1:
                        h1[codes[s, f]] += 1
                    else:
                        h0[codes[s, f]] += 1
                l0 = 0
                l1 = 0
                prev = -1
                for q in range(clo, chi + 1):
                    if h0[q] + h1[q] == 0:
                        continue
                    if prev >= 0:
                        nl = l0 + l1
                        nr = n_node - nl
                        cost = (nl * _gini(l0, l1) + nr * _gini(c0 - l0, c1 - l1)) / n_node
                        if cost < best_cost:
                            best_cost = cost
                            best_f = f
                            a = uniq[f, prev]
                            b = uniq[f, q]
                            best_t = 0.5 * (a + b)
                            if best_t >= b:
                                best_t = a
                    l0 += h0[q]
                    l1 += h1[q]
                    prev = q

        if best_f < 0:
            continue
        # partition work[start:end] in place
        i = start
        j = end - 1
        while i <= j:
            if X[work[i], best_f] <= best_t:
                i += 1
            else:
                tmp = work[i]
                work[i] = work[j]
                work[j] = tmp
                j -= 1
        mid = i
        if mid == start or mid == end:
            continue
        feature[node] = best_f
        threshold[node] = best_t
        importance[best_f] += n_node * (parent_imp - best_cost)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack[top, 0] = rnode
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], importance / n_total)


@njit(cache=True)
def _predict(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node, 1]
    return out


def rank_codes(X):
    """Per-column dense ranks of ``X`` plus the padded table of distinct values."""
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int64)
    cols = []
    for j in range(p):
        u, inv = np.unique(X[:, j], return_inverse=True)
        codes[:, j] = inv
        cols.append(u)
    width = max((len(u) for u in cols), default=1)
    uniq = np.zeros((p, width))
    for j, u in enumerate(cols):
        uniq[j, :len(u)] = u
    return codes, uniq


class DecisionTree:
    """Binary CART tree with Gini impurity.

    ``extra=True`` switches to extremely randomized splits: one uniform
    threshold per candidate feature instead of an exhaustive scan.
    """

    def __init__(self, max_depth=None, max_features=None, extra=False, seed=0):
        self.max_depth = max_depth
        self.max_features = max_features
        self.extra = extra
        self.seed = seed
        self.nodes_ = None

    def fit(self, X, y, sample_idx=None, ranks=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if sample_idx is None:
            sample_idx = np.arange(len(y))
        n_features = X.shape[1]
        mf = n_features if self.max_features is None else int(self.max_features)
        depth = 0 if self.max_depth is None else int(self.max_depth)
        codes, uniq = rank_codes(X) if ranks is None else ranks
        self.nodes_ = _build(X, codes, uniq, y, np.asarray(sample_idx, dtype=np.int64),
                             depth, max(1, mf), bool(self.extra), int(self.seed))
        self.n_features_ = n_features
        return self

    @property
    def feature_importances_(self):
        raw = self.nodes_[5]
        total = raw.sum()
        return raw / total if total > 0 else raw

    @property
    def node_count(self):
        return len(self.nodes_[0])

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        f, t, lft, rgt, val, _ = self.nodes_
        return _predict(X, f, t, lft, rgt, val)


class TreeEnsemble:
    """Random forest (bootstrap + exhaustive splits) or extra-trees
    (full sample + random thresholds). Scores are mean leaf probabilities."""

    def __init__(self, n_estimators=100, max_depth=None, max_features="sqrt",
                 extra=False, bootstrap=None, seed=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.extra = extra
        self.bootstrap = (not extra) if bootstrap is None else bootstrap
        self.seed = seed
        self.trees_ = []

    def _n_split_features(self, p):
        mf = self.max_features
        if mf is None:
            return p
        if mf == "sqrt":
            return max(1, int(np.sqrt(p)))
        if mf == "log2":
            return max(1, int(np.log2(p)))
        if isinstance(mf, float):
            return max(1, int(mf * p))
        return min(p, int(mf))

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, p = X.shape
        mf = self._n_split_features(p)
        rng = np.random.default_rng(self.seed)
        tree_seeds = rng.integers(0, 2**31 - 1, size=self.n_estimators)
        ranks = rank_codes(X)
        self.trees_ = []
        for s in tree_seeds:
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.max_depth, mf, self.extra, int(s))
            self.trees_.append(tree.fit(X, y, idx, ranks))
        self.n_features_ = p
        return self

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.mean([t.predict_proba(X) for t in self.trees_], axis=0)

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(int)

    @property
    def feature_importances_(self):
        """Mean weighted impurity decrease over trees, normalized to sum 1."""
        imp = np.mean([t.nodes_[5] for t in self.trees_], axis=0)
        total = imp.sum()
        return imp / total if total > 0 else np.zeros(self.n_features_)
