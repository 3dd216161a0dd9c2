"""L2-regularized logistic regression (binary sigmoid / multinomial softmax).

Objective: mean cross-entropy + lam * ||W||^2, intercept unpenalized.
Minimized with L-BFGS; its line search enforces sufficient decrease, so the
recorded loss sequence is non-increasing.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from .base import Model


def _split(theta, d, k):
    if k == 2:
        return theta[:d].reshape(d, 1), theta[d:d + 1]
    return theta[: d * k].reshape(d, k), theta[d * k:]


def loss_and_grad(theta, X, y, lam, n_classes):
    """Objective and gradient at packed parameters ``theta``.

    Binary: theta = [beta (d), b]. Multinomial: theta = [W (d*k row-major), b (k)].
    """
    n, d = X.shape
    W, b = _split(theta, d, n_classes)
    if n_classes == 2:
        z = X @ W[:, 0] + b[0]
        loss = np.mean(np.logaddexp(0.0, z) - y * z) + lam * np.dot(W[:, 0], W[:, 0])
        r = (expit(z) - y) / n
        g_w = X.T @ r + 2.0 * lam * W[:, 0]
        return loss, np.concatenate([g_w, [r.sum()]])
    Z = X @ W + b
    lse = logsumexp(Z, axis=1)
    loss = np.mean(lse - Z[np.arange(n), y]) + lam * np.sum(W * W)
    P = np.exp(Z - lse[:, None])
    P[np.arange(n), y] -= 1.0
    P /= n
    g_w = X.T @ P + 2.0 * lam * W
    return loss, np.concatenate([g_w.ravel(), P.sum(axis=0)])


def lbfgs_minimize(fun, x0, tol=1e-6, max_iter=5000, memory=10):
    """Minimize ``fun`` (returning value and gradient) with scipy's L-BFGS-B.

    Returns ``(x, losses, grad_norm, n_iter)``; ``losses`` holds the objective
    at the start point and after every accepted step.
    """
    losses = [float(fun(x0)[0])]

    def record(intermediate_result):
        losses.append(float(intermediate_result.fun))

    # the projected-gradient test is a max-norm; scale it so the 2-norm meets tol
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", callback=record,
                   options={"gtol": tol / np.sqrt(x0.size), "ftol": 0.0, "maxiter": max_iter,
                            "maxcor": memory, "maxfun": 20 * max_iter})
    return res.x, losses, float(np.linalg.norm(res.jac)), int(res.nit)


class LogisticRegression(Model):
    """``lam=None`` means 1/(2n), the per-sample equivalent of C=1."""

    kind = "LR"

    def __init__(self, lam=None, tol=1e-6, max_iter=5000):
        super().__init__()
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter
        self.coef_ = None
        self.intercept_ = None
        self.loss_history_ = []

    def hyperparameters(self):
        return {"lam": self.lam, "tol": self.tol, "max_iter": self.max_iter}

    def fit(self, X, y):
        X, enc = self._prepare_fit(X, y)
        n, d = X.shape
        k = len(self.classes_)
        lam = self.lam if self.lam is not None else 1.0 / (2.0 * n)
        self.lam_ = lam
        n_par = d + 1 if k == 2 else (d + 1) * k
        theta, losses, gnorm, it = lbfgs_minimize(
            lambda t: loss_and_grad(t, X, enc, lam, k), np.zeros(n_par), self.tol, self.max_iter
        )
        W, b = _split(theta, d, k)
        self.coef_ = W.T.copy()
        self.intercept_ = b.copy()
        self.loss_history_ = losses
        self.grad_norm_ = gnorm
        self.n_iter_ = it
        return self

    def decision_function(self, X):
        X = self._check_fitted(X)
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        z = self.decision_function(X)
        if len(self.classes_) == 2:
            p1 = expit(z[:, 0])
            return np.column_stack([1.0 - p1, p1])
        return np.exp(z - logsumexp(z, axis=1, keepdims=True))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def _state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_.tolist(),
                "lam": float(self.lam_)}

    def _load_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = np.asarray(state["intercept"], dtype=np.float64)
        self.lam_ = state["lam"]


def fit_logistic(X, y, lam=None, **kw):
    return LogisticRegression(lam=lam, **kw).fit(X, y)
