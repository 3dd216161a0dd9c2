"""Shared model plumbing: input checks and the JSON model document."""

from __future__ import annotations

import json

import numpy as np

from ..errors import DegenerateFitError, InvalidArgumentError, SchemaError

MODEL_SCHEMA = "ieegpain.model"
MODEL_VERSION = 1


def as_matrix(X):
    """Return (2-D float array, column names or None) from an array or FeatureMatrix."""
    names = getattr(X, "columns", None)
    values = getattr(X, "values", X)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidArgumentError("X must be 2-D")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("X contains non-finite values")
    return np.ascontiguousarray(arr), (list(names) if names is not None else None)


def encode_labels(y, n_rows, min_classes=2):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_rows:
        raise InvalidArgumentError("y must be 1-D with one label per row")
    classes, enc = np.unique(y, return_inverse=True)
    if classes.shape[0] < min_classes:
        raise DegenerateFitError(f"need at least {min_classes} classes, got {classes.shape[0]}")
    return classes, enc.astype(np.intp)


class Model:
    """Common surface: ``fit``, ``predict``, ``predict_proba``, JSON round trip."""

    kind = "?"

    def __init__(self):
        self.classes_ = None
        self.n_features_ = None
        self.feature_names_ = None

    def _check_fitted(self, X):
        if self.classes_ is None:
            raise InvalidArgumentError(f"{self.kind} model is not fitted")
        arr, _ = as_matrix(X)
        if arr.shape[1] != self.n_features_:
            raise InvalidArgumentError(f"expected {self.n_features_} features, got {arr.shape[1]}")
        return arr

    def _prepare_fit(self, X, y):
        arr, names = as_matrix(X)
        if arr.shape[0] < 2:
            raise InvalidArgumentError("need at least two training rows")
        classes, enc = encode_labels(y, arr.shape[0])
        self.classes_ = classes
        self.n_features_ = arr.shape[1]
        self.feature_names_ = names or [f"f{i}" for i in range(arr.shape[1])]
        return arr, enc

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def hyperparameters(self):
        return {}

    def _state(self):
        raise NotImplementedError

    def _load_state(self, state):
        raise NotImplementedError

    def to_dict(self):
        return {
            "schema": MODEL_SCHEMA,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "hyperparameters": self.hyperparameters(),
            "classes": self.classes_.tolist(),
            "feature_names": list(self.feature_names_),
            "state": self._state(),
        }


def model_from_dict(doc):
    from .forest import RandomForest
    from .logistic import LogisticRegression
    from .svm import RbfSVM

    if doc.get("schema") != MODEL_SCHEMA or doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model document {doc.get('schema')!r} v{doc.get('version')}")
    registry = {"LR": LogisticRegression, "SVM": RbfSVM, "RF": RandomForest}
    try:
        cls = registry[doc["kind"]]
    except KeyError:
        raise SchemaError(f"unknown model kind {doc.get('kind')!r}") from None
    model = cls(**doc["hyperparameters"])
    model.classes_ = np.asarray(doc["classes"])
    model.feature_names_ = list(doc["feature_names"])
    model.n_features_ = len(model.feature_names_)
    model._load_state(doc["state"])
    return model


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
