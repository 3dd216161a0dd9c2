"""Bootstrap random forest of unpruned Gini trees with sqrt(d) feature draws."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import _kernels
from ..errors import UnsupportedOperationError
from .base import Model

_TREE_KEYS = ("feature", "threshold", "left", "right", "value", "impurity", "n_node_samples")


def gini(counts):
    """Gini impurity 1 - sum p_c^2 of a class-count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def tree_importances(tree, n_features):
    """Unnormalized mean-decrease-in-impurity of one tree."""
    imp = np.zeros(n_features)
    feat = tree["feature"]
    internal = np.flatnonzero(feat >= 0)
    if internal.size:
        w = tree["n_node_samples"]
        im = tree["impurity"]
        lft, rgt = tree["left"][internal], tree["right"][internal]
        dec = w[internal] * im[internal] - w[lft] * im[lft] - w[rgt] * im[rgt]
        np.add.at(imp, feat[internal], dec)
    return imp


class RandomForest(Model):
    kind = "RF"

    def __init__(self, n_trees=100, max_features="sqrt", min_samples_split=2, seed=0, n_jobs=1):
        super().__init__()
        self.n_trees = n_trees
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.n_jobs = n_jobs
        self.trees_ = []

    def hyperparameters(self):
        return {"n_trees": self.n_trees, "max_features": self.max_features,
                "min_samples_split": self.min_samples_split, "seed": self.seed, "n_jobs": self.n_jobs}

    def _resolve_max_features(self, d):
        mf = self.max_features
        if mf in (None, "all"):
            return d
        if mf == "sqrt":
            return max(1, min(d, math.ceil(math.sqrt(d))))
        return max(1, min(d, int(mf)))

    def fit(self, X, y):
        X, enc = self._prepare_fit(X, y)
        n, d = X.shape
        k = len(self.classes_)
        mf = self._resolve_max_features(d)
        self.max_features_ = mf
        children = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        plans = []
        for child in children:
            rng = np.random.default_rng(child)
            boot = rng.integers(0, n, size=n)
            # duplicates collapse to integer weights; the grown tree is unchanged
            rows, mult = np.unique(boot, return_counts=True)
            tree_seed = int(child.generate_state(1, dtype=np.uint64)[0])
            plans.append((rows.astype(np.intp), mult.astype(np.int64), tree_seed))

        def grow(plan):
            rows, mult, tree_seed = plan
            return _kernels.grow_tree(X, enc, rows, mult, k, mf, self.min_samples_split, tree_seed)

        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees_ = list(pool.map(grow, plans))
        else:
            self.trees_ = [grow(p) for p in plans]
        in_bag = np.zeros((self.n_trees, n), dtype=bool)
        for t, (rows, _, _) in enumerate(plans):
            in_bag[t, rows] = True
        self._in_bag = in_bag
        self._train_X = X
        self._train_y = enc
        return self

    def _tree_votes(self, tree, X):
        leaves = _kernels.apply_tree(X, tree["feature"], tree["threshold"], tree["left"], tree["right"])
        # argmax picks the smaller class id on ties
        return np.argmax(tree["value"][leaves], axis=1)

    def vote_counts(self, X):
        X = self._check_fitted(X)
        k = len(self.classes_)
        votes = np.zeros((X.shape[0], k))
        rows = np.arange(X.shape[0])
        for tree in self.trees_:
            votes[rows, self._tree_votes(tree, X)] += 1.0
        return votes

    def predict_proba(self, X):
        votes = self.vote_counts(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.vote_counts(X), axis=1)]

    def oob_score(self):
        """Accuracy of out-of-bag majority votes over rows with at least one OOB tree."""
        X, y = self._train_X, self._train_y
        votes = np.zeros((X.shape[0], len(self.classes_)))
        for tree, bag in zip(self.trees_, self._in_bag):
            oob = np.flatnonzero(~bag)
            if oob.size:
                votes[oob, self._tree_votes(tree, X[oob])] += 1.0
        seen = votes.sum(axis=1) > 0
        return float(np.mean(np.argmax(votes[seen], axis=1) == y[seen]))

    @property
    def feature_importances_(self):
        per_tree = []
        for tree in self.trees_:
            imp = tree_importances(tree, self.n_features_)
            total = imp.sum()
            if total > 0:
                per_tree.append(imp / total)
        if not per_tree:
            return np.zeros(self.n_features_)
        mean = np.mean(per_tree, axis=0)
        return mean / mean.sum()

    def _state(self):
        return {"trees": [{k: t[k].tolist() for k in _TREE_KEYS} for t in self.trees_],
                "max_features_resolved": self.max_features_}

    def _load_state(self, state):
        self.max_features_ = state["max_features_resolved"]
        k = len(self.classes_)
        self.trees_ = []
        for t in state["trees"]:
            tree = {
                "feature": np.asarray(t["feature"], dtype=np.intp),
                "threshold": np.asarray(t["threshold"], dtype=np.float64),
                "left": np.asarray(t["left"], dtype=np.intp),
                "right": np.asarray(t["right"], dtype=np.intp),
                "value": np.asarray(t["value"], dtype=np.float64).reshape(-1, k),
                "impurity": np.asarray(t["impurity"], dtype=np.float64),
                "n_node_samples": np.asarray(t["n_node_samples"], dtype=np.float64),
            }
            self.trees_.append(tree)


def fit_random_forest(X, y, n_trees=100, seed=0, **kw):
    return RandomForest(n_trees=n_trees, seed=seed, **kw).fit(X, y)


def feature_importances(model):
    """Column name -> normalized mean decrease in impurity (RF only)."""
    if not isinstance(model, RandomForest):
        raise UnsupportedOperationError(f"feature importances are defined for RF, not {model.kind}")
    return dict(zip(model.feature_names_, model.feature_importances_.tolist()))
