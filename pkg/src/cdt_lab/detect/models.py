"""Gaussian naive Bayes and L2-regularized logistic regression."""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

VAR_FLOOR = 1e-9


class NotFitted(RuntimeError):
    pass


class GaussianNB:
    """Per-class independent Gaussians; variances floored at ``var_floor``."""

    def __init__(self, var_floor: float = VAR_FLOOR):
        self.var_floor = var_floor
        self.classes_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in self.classes_])
        self.var_ = np.maximum(np.array([X[y == c].var(axis=0) for c in self.classes_]), self.var_floor)
        self.log_prior_ = np.log(np.array([(y == c).mean() for c in self.classes_]))
        return self

    def joint_log_likelihood(self, X):
        if self.classes_ is None:
            raise NotFitted("GaussianNB.fit must be called first")
        X = np.asarray(X, dtype=float)
        out = []
        for k in range(len(self.classes_)):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.var_[k]))
            ll = ll - 0.5 * np.sum((X - self.theta_[k]) ** 2 / self.var_[k], axis=1)
            out.append(self.log_prior_[k] + ll)
        return np.column_stack(out)

    def posterior(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def predict_proba(self, X):
        """Posterior probability of class 1."""
        post = self.posterior(X)
        idx = np.flatnonzero(self.classes_ == 1)
        return post[:, idx[0]] if len(idx) else np.zeros(len(post))

    def predict(self, X):
        return self.classes_[np.argmax(self.joint_log_likelihood(X), axis=1)]


def loss_and_grad(params, X, y, C):
    """Summed log-loss plus ||w||^2 / (2C); the intercept (last entry) is unpenalized."""
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * np.dot(w, w) / C
    r = expit(z) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + w / C
    grad[-1] = r.sum()
    return loss, grad


class LogisticRegression:
    """Binary logistic regression fitted by L-BFGS on standardized features."""

    def __init__(self, C: float = 1.0, tol: float = 1e-6, max_iter: int = 500, standardize: bool = True):
        if C <= 0:
            raise ValueError("C must be positive")
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize
        self.coef_ = None

    def _scale(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Xs = self._scale(X)
        x0 = np.zeros(X.shape[1] + 1)
        res = minimize(loss_and_grad, x0, args=(Xs, y, self.C), jac=True, method="L-BFGS-B",
                       options={"gtol": self.tol, "maxiter": self.max_iter})
        self.coef_ = res.x[:-1]
        self.intercept_ = res.x[-1]
        self.converged_ = bool(res.success)
        self.n_iter_ = int(res.nit)
        return self

    def decision_function(self, X):
        if self.coef_ is None:
            raise NotFitted("LogisticRegression.fit must be called first")
        return self._scale(np.asarray(X, dtype=float)) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(int)
