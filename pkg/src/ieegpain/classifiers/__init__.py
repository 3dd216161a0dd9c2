"""Logistic regression, RBF-SVM and random forest behind one interface."""

from ..errors import InvalidArgumentError
from .base import Model, load_model, model_from_dict, save_model
from .forest import RandomForest, feature_importances, fit_random_forest, gini
from .logistic import LogisticRegression, fit_logistic
from .svm import RbfSVM, fit_svm_rbf, rbf_kernel

MODEL_KINDS = ("LR", "SVM", "RF")


def make_model(kind, seed=0, **hyper):
    """Fresh, unfitted model of ``kind`` ('LR', 'SVM' or 'RF')."""
    kind = kind.upper()
    if kind == "LR":
        return LogisticRegression(**hyper)
    if kind == "SVM":
        return RbfSVM(**hyper)
    if kind == "RF":
        return RandomForest(seed=seed, **hyper)
    raise InvalidArgumentError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def predict(model, X):
    return model.predict(X)


def predict_proba(model, X):
    return model.predict_proba(X)


__all__ = [
    "MODEL_KINDS", "Model", "LogisticRegression", "RbfSVM", "RandomForest",
    "fit_logistic", "fit_svm_rbf", "fit_random_forest", "feature_importances",
    "gini", "rbf_kernel", "make_model", "predict", "predict_proba",
    "save_model", "load_model", "model_from_dict",
]
