"""RBF-kernel soft-margin SVM trained by SMO; one-vs-rest for >2 classes."""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..errors import InvalidArgumentError, UnsupportedOperationError
from .base import Model, as_matrix


def rbf_kernel(A, B, gamma):
    """K[i, j] = exp(-gamma * ||A_i - B_j||^2)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    # explicit differences (not the |a|^2 + |b|^2 - 2ab expansion) so identical rows give exactly 0
    sq = np.empty((A.shape[0], B.shape[0]))
    step = max(1, 4_000_000 // max(1, B.shape[0] * A.shape[1]))
    for s in range(0, A.shape[0], step):
        d = A[s:s + step, None, :] - B[None, :, :]
        np.einsum("ijk,ijk->ij", d, d, out=sq[s:s + step])
    return np.exp(-gamma * sq)


def dual_objective(alpha, y, K):
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij (to maximize)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def solve_binary(K, y_pm, C, tol=1e-3, max_iter=None):
    """SMO on a precomputed kernel with labels in {-1, +1}; returns (alpha, rho, iters)."""
    n = K.shape[0]
    if max_iter is None:
        max_iter = max(1_000_000, 100 * n)
    return _kernels.smo_solve(np.ascontiguousarray(K), np.ascontiguousarray(y_pm, dtype=np.float64),
                              float(C), float(tol), int(max_iter))


class RbfSVM(Model):
    """``gamma=None`` uses 1 / (d * var(X)) computed on the training data."""

    kind = "SVM"

    def __init__(self, C=1.0, gamma=None, tol=1e-3, max_iter=None):
        super().__init__()
        if C <= 0 or (gamma is not None and gamma <= 0):
            raise InvalidArgumentError("C and gamma must be positive")
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def hyperparameters(self):
        return {"C": self.C, "gamma": self.gamma, "tol": self.tol, "max_iter": self.max_iter}

    def fit(self, X, y):
        X, enc = self._prepare_fit(X, y)
        n, d = X.shape
        if self.gamma is None:
            var = X.var()
            self.gamma_ = 1.0 / (d * var) if var > 0 else 1.0
        else:
            self.gamma_ = float(self.gamma)
        K = rbf_kernel(X, X, self.gamma_)
        k = len(self.classes_)
        problems = [1] if k == 2 else list(range(k))
        coefs, rhos, alphas = [], [], []
        for pos in problems:
            y_pm = np.where(enc == pos, 1.0, -1.0)
            alpha, rho, _ = solve_binary(K, y_pm, self.C, self.tol, self.max_iter)
            alphas.append(alpha)
            coefs.append(alpha * y_pm)
            rhos.append(rho)
        coefs = np.array(coefs)
        support = np.flatnonzero(np.any(coefs != 0, axis=0))
        self.support_ = support
        self.support_vectors_ = X[support].copy()
        self.dual_coef_ = coefs[:, support]
        self.rho_ = np.array(rhos)
        self.alphas_ = alphas
        return self

    def decision_function(self, X):
        X = self._check_fitted(X)
        if self.support_vectors_.shape[0] == 0:
            dec = np.zeros((X.shape[0], self.dual_coef_.shape[0])) - self.rho_
        else:
            dec = rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_.T - self.rho_
        return dec[:, 0] if len(self.classes_) == 2 else dec

    def predict(self, X):
        dec = self.decision_function(X)
        if len(self.classes_) == 2:
            return self.classes_[(dec > 0).astype(int)]
        return self.classes_[np.argmax(dec, axis=1)]

    def predict_proba(self, X):
        raise UnsupportedOperationError("the SVM exposes decisions only, not probabilities")

    def _state(self):
        return {"gamma": self.gamma_, "support_vectors": self.support_vectors_.tolist(),
                "dual_coef": self.dual_coef_.tolist(), "rho": self.rho_.tolist()}

    def _load_state(self, state):
        self.gamma_ = float(state["gamma"])
        self.support_vectors_ = np.asarray(state["support_vectors"], dtype=np.float64).reshape(
            -1, self.n_features_)
        self.dual_coef_ = np.asarray(state["dual_coef"], dtype=np.float64).reshape(
            -1, self.support_vectors_.shape[0])
        self.rho_ = np.asarray(state["rho"], dtype=np.float64)


def fit_svm_rbf(X, y, C=1.0, gamma=None, **kw):
    as_matrix(X)  # rejects non-finite input before any work
    return RbfSVM(C=C, gamma=gamma, **kw).fit(X, y)
