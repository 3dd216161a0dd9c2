"""Repeated holdout / balanced-subsample cross-validation protocol.

For each iteration a trial-level holdout is drawn; for each fold a fresh
model is fitted on a class-balanced subsample of the remaining windows and
scored on every holdout window. All randomness derives from the run seed
via ``SeedSequence([seed, tag, iteration, fold])``.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .classifiers import RandomForest, make_model
from .errors import InvalidArgumentError, ProtocolError, SchemaError
from .features import normalize_feature_set
from .labeling import LabeledDataset, LabelStrategy
from .selection import DEFAULT_BINS, score_electrodes, select_top_k
from .spectral import standardize

REPORT_SCHEMA = "ieegpain.eval_report"
REPORT_VERSION = 1
MAX_SPLIT_ATTEMPTS = 100
_TAG_SPLIT, _TAG_FOLD, _TAG_MODEL, _TAG_SHUFFLE = 11, 12, 13, 14


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _derived_int(*key):
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def chance_level(task):
    task = str(task).lower()
    if task == "binary":
        return 0.5
    if task == "ternary":
        return 1.0 / 3.0
    raise InvalidArgumentError(f"unknown task {task!r}")


def holdout_size(n_trials, test_fraction):
    """max(1, round-half-up(test_fraction * n_trials))."""
    return max(1, int(np.floor(test_fraction * n_trials + 0.5)))


@dataclass
class ProtocolConfig:
    test_fraction: float = 0.10
    num_iterations: int = 15
    num_folds: int = 20
    seed: int = 0
    strategy: LabelStrategy = field(default_factory=LabelStrategy)
    feature_set: str = "PIB"
    model_kind: str = "RF"
    model_params: dict = field(default_factory=dict)
    fresh_holdout: bool = True
    select_on_all_data: bool = False
    k: int = 20
    mi_bins: int = DEFAULT_BINS
    standardize: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidArgumentError("test_fraction must lie strictly between 0 and 1")
        if self.num_iterations < 1 or self.num_folds < 1:
            raise InvalidArgumentError("num_iterations and num_folds must be >= 1")
        if isinstance(self.strategy, (tuple, list)):
            self.strategy = LabelStrategy(*self.strategy)
        self.feature_set = normalize_feature_set(self.feature_set)
        self.model_kind = str(self.model_kind).upper()
        if self.model_kind not in ("LR", "SVM", "RF"):
            raise InvalidArgumentError(f"unknown model kind {self.model_kind!r}")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")

    def to_dict(self):
        return {
            "test_fraction": self.test_fraction, "num_iterations": self.num_iterations,
            "num_folds": self.num_folds, "seed": self.seed,
            "strategy": self.strategy.id, "task": self.strategy.task,
            "feature_set": self.feature_set, "model_kind": self.model_kind,
            "model_params": dict(self.model_params), "fresh_holdout": self.fresh_holdout,
            "select_on_all_data": self.select_on_all_data, "k": self.k, "mi_bins": self.mi_bins,
            "standardize": self.standardize,
        }


@dataclass
class EvalReport:
    fold_accuracies: list
    iteration_means: list
    grand_mean: float
    std: float
    class_counts: dict
    config: dict
    chance: float
    trial_accuracies: list = field(default_factory=list)
    feature_importances: dict = field(default_factory=dict)
    selections: list = field(default_factory=list)
    holdouts: list = field(default_factory=list)
    dataset: dict = field(default_factory=dict)

    @property
    def above_chance(self):
        return self.grand_mean > self.chance

    def to_dict(self):
        fold = np.asarray(self.fold_accuracies, dtype=np.float64)
        trial = np.asarray(self.trial_accuracies, dtype=np.float64)
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "config": self.config,
            "dataset": self.dataset,
            "fold_accuracies": self.fold_accuracies,
            "iteration_means": self.iteration_means,
            "grand_mean": self.grand_mean,
            "std": self.std,
            "fold_std": float(fold.std()) if fold.size else 0.0,
            "trial_accuracies": self.trial_accuracies,
            "trial_grand_mean": float(trial.mean(axis=1).mean()) if trial.size else None,
            "class_counts": self.class_counts,
            "chance_level": self.chance,
            "above_chance": self.above_chance,
            "feature_importances": self.feature_importances,
            "selections": self.selections,
            "holdouts": self.holdouts,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path, fold_csv=None):
        with open(path, "w") as fh:
            fh.write(self.to_json())
        if fold_csv is not None:
            self.write_fold_csv(fold_csv)

    def write_fold_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "fold", "accuracy", "trial_accuracy"])
            for i, row in enumerate(self.fold_accuracies):
                for f, acc in enumerate(row):
                    tacc = self.trial_accuracies[i][f] if self.trial_accuracies else ""
                    w.writerow([i, f, repr(acc), repr(tacc)])

    @classmethod
    def from_dict(cls, doc):
        if doc.get("schema") != REPORT_SCHEMA:
            raise SchemaError(f"not an evaluation report (schema={doc.get('schema')!r})")
        if doc.get("version") != REPORT_VERSION:
            raise SchemaError(f"report version {doc.get('version')} is not supported (need {REPORT_VERSION})")
        return cls(doc["fold_accuracies"], doc["iteration_means"], doc["grand_mean"], doc["std"],
                   doc["class_counts"], doc["config"], doc["chance_level"], doc.get("trial_accuracies", []),
                   doc.get("feature_importances", {}), doc.get("selections", []), doc.get("holdouts", []),
                   doc.get("dataset", {}))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: not JSON ({exc})") from exc
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# Splitting and subsampling
# ---------------------------------------------------------------------------

def subset_trials(ds: LabeledDataset, trial_ids):
    """Rows of ``ds`` whose trial is in ``trial_ids`` (row order kept)."""
    keep = set(int(t) for t in trial_ids)
    rows = np.flatnonzero(np.isin(ds.trial_ids, list(keep)))
    return _take(ds, rows, {t: c for t, c in ds.trial_labels.items() if t in keep})


def _take(ds, rows, trial_labels=None):
    if trial_labels is None:
        present = set(int(t) for t in np.unique(ds.trial_ids[rows]))
        trial_labels = {t: c for t, c in ds.trial_labels.items() if t in present}
    feats = ds.features.take_rows(rows) if ds.features is not None else None
    out = LabeledDataset(ds.trial_ids[rows], ds.window_indices[rows], ds.labels[rows],
                         list(ds.class_names), ds.strategy, trial_labels, list(ds.excluded_trials), feats)
    out.source_rows = rows if not hasattr(ds, "source_rows") else ds.source_rows[rows]
    return out


def split_trials(ds: LabeledDataset, test_fraction=0.10, seed=0):
    """Trial-level holdout.

    Returns ``(train, test)`` datasets. If a class would be missing from the
    training side the draw is repeated with a new derived seed, up to
    ``MAX_SPLIT_ATTEMPTS`` times.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must lie strictly between 0 and 1")
    trials = np.array(sorted(ds.trial_labels), dtype=np.int64)
    tlab = np.array([ds.trial_labels[int(t)] for t in trials], dtype=np.intp)
    per_class = np.bincount(tlab, minlength=ds.n_classes)
    if np.any(per_class < 2):
        short = [ds.class_names[i] for i in np.flatnonzero(per_class < 2)]
        raise ProtocolError(f"need >= 2 trials per class; too few for {short}")
    n_test = holdout_size(len(trials), test_fraction)
    if n_test >= len(trials):
        raise ProtocolError(f"holdout of {n_test} leaves no training trials")
    for attempt in range(MAX_SPLIT_ATTEMPTS):
        rng = _rng(seed, _TAG_SPLIT, attempt)
        test_mask = np.zeros(len(trials), dtype=bool)
        test_mask[rng.choice(len(trials), n_test, replace=False)] = True
        train_classes = np.unique(tlab[~test_mask])
        if train_classes.size == ds.n_classes:
            return subset_trials(ds, trials[~test_mask]), subset_trials(ds, trials[test_mask])
    raise ProtocolError(f"no split with every class in training after {MAX_SPLIT_ATTEMPTS} attempts")


def balanced_indices(labels, n_classes, rng):
    """Sorted row indices holding exactly m rows per class, m = smallest class count."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n_classes)
    if np.any(counts == 0):
        raise ProtocolError(f"class(es) {np.flatnonzero(counts == 0).tolist()} have no windows")
    m = int(counts.min())
    picks = [rng.choice(np.flatnonzero(labels == c), m, replace=False) for c in range(n_classes)]
    return np.sort(np.concatenate(picks))


def balanced_subsample(train: LabeledDataset, seed=0, *, iteration=0, fold=0):
    """Class-balanced draw without replacement; the stream is keyed by (seed, iteration, fold)."""
    rng = _rng(seed, _TAG_FOLD, iteration, fold)
    return _take(train, balanced_indices(train.labels, train.n_classes, rng))


def shuffle_labels(ds: LabeledDataset, seed=0):
    """Permute labels across trials (windows keep their trial's label)."""
    trials = sorted(ds.trial_labels)
    perm = _rng(seed, _TAG_SHUFFLE).permutation(len(trials))
    new = {t: ds.trial_labels[trials[p]] for t, p in zip(trials, perm)}
    labels = np.array([new[int(t)] for t in ds.trial_ids], dtype=np.intp)
    return LabeledDataset(ds.trial_ids, ds.window_indices, labels, list(ds.class_names), ds.strategy,
                          new, list(ds.excluded_trials), ds.features)


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------

def _majority(pred, n_classes):
    counts = np.bincount(pred, minlength=n_classes)
    return int(np.argmax(counts))


def _trial_accuracy(test_trials, pred, trial_labels, n_classes):
    hits = []
    for t in np.unique(test_trials):
        hits.append(_majority(pred[test_trials == t], n_classes) == trial_labels[int(t)])
    return float(np.mean(hits))


def _select(store, pib_rows, labels, cfg):
    pib = store.pib.take_rows(pib_rows)
    scores = score_electrodes(pib, labels, cfg.mi_bins)
    sel = select_top_k(scores, cfg.k)
    if len(sel.channels) < 2:
        raise ProtocolError("MSC features need at least two usable electrodes")
    return sel


def run_protocol(config: ProtocolConfig, dataset: LabeledDataset, store=None, *, check_leakage=True,
                 observer=None):
    """Run the full iterations x folds protocol.

    With a :class:`~ieegpain.features.FeatureStore`, features follow
    ``config.feature_set`` (MSC electrodes are chosen by MI on training
    windows only, unless ``select_on_all_data``). Without one,
    ``dataset.features`` is used as given.

    ``observer``, if given, is called once per fold with a dict holding
    ``iteration``, ``fold``, ``train_trial_ids`` (every trial that reached
    the scaler and model), ``selection_trial_ids`` (trials the electrode
    selection was fitted on, or None), ``test_trial_ids`` and
    ``train_class_counts``.
    """
    cfg = config
    if dataset.strategy != cfg.strategy:
        raise InvalidArgumentError(
            f"dataset labeled under {dataset.strategy.id}/{dataset.strategy.task}, "
            f"config asks for {cfg.strategy.id}/{cfg.strategy.task}"
        )
    if store is None and dataset.features is None:
        raise InvalidArgumentError("no features: pass a FeatureStore or attach a FeatureMatrix")
    if store is not None:
        rows_all = store.rows_for(dataset.trial_ids, dataset.window_indices)
    base = LabeledDataset(dataset.trial_ids, dataset.window_indices, dataset.labels, list(dataset.class_names),
                          dataset.strategy, dict(dataset.trial_labels), list(dataset.excluded_trials),
                          dataset.features)
    base.source_rows = np.arange(len(dataset.labels))
    k = dataset.n_classes
    needs_sel = store is not None and cfg.feature_set != "PIB"

    global_sel = None
    if needs_sel and cfg.select_on_all_data:
        global_sel = _select(store, rows_all, dataset.labels, cfg)

    fold_acc, trial_acc, iter_means, selections, holdouts = [], [], [], [], []
    imp_sum = defaultdict(float)
    n_imp = 0
    fold_counts = None
    split = None
    for it in range(cfg.num_iterations):
        if split is None or cfg.fresh_holdout:
            split = split_trials(base, cfg.test_fraction, _derived_int(cfg.seed, _TAG_SPLIT, it))
        train, test = split
        test_ids = set(test.trial_labels)
        holdouts.append(sorted(test_ids))

        if store is not None:
            sel = global_sel
            sel_ids = sorted(set(dataset.trial_labels)) if global_sel is not None else None
            if needs_sel and sel is None:
                sel_ids = sorted(set(np.unique(train.trial_ids).tolist()))
                sel = _select(store, rows_all[train.source_rows], train.labels, cfg)
                if check_leakage and set(np.unique(train.trial_ids).tolist()) & test_ids:
                    raise ProtocolError("selection saw holdout trials")
            if sel is not None:
                selections.append(sel.to_dict())
            fm = store.matrix(cfg.feature_set, sel.channels if sel is not None else None)
            X_all = fm.values[rows_all]
            columns = fm.columns
        else:
            sel_ids = None
            X_all = dataset.features.values
            columns = dataset.features.columns
        X_test = X_all[test.source_rows]

        accs, taccs = [], []
        for fold in range(cfg.num_folds):
            sub = balanced_subsample(train, cfg.seed, iteration=it, fold=fold)
            counts = np.bincount(sub.labels, minlength=k)
            if np.any(counts != counts[0]):
                raise ProtocolError(f"unbalanced fold {it}/{fold}: {counts.tolist()}")
            if check_leakage:
                leaked = set(np.unique(sub.trial_ids).tolist()) & test_ids
                if leaked:
                    raise ProtocolError(f"trial leakage in fold {it}/{fold}: {sorted(leaked)}")
            fold_counts = {name: int(c) for name, c in zip(dataset.class_names, counts)}
            if observer is not None:
                observer({"iteration": it, "fold": fold, "train_trial_ids": np.unique(sub.trial_ids).tolist(),
                          "selection_trial_ids": sel_ids, "test_trial_ids": sorted(test_ids),
                          "train_class_counts": counts.tolist()})
            X_tr = X_all[sub.source_rows]
            X_te = X_test
            if cfg.standardize:
                X_tr, X_te = standardize(X_tr, X_te)
            model = make_model(cfg.model_kind, seed=_derived_int(cfg.seed, _TAG_MODEL, it, fold),
                               **cfg.model_params)
            model.fit(X_tr, sub.labels)
            model.feature_names_ = list(columns)
            pred = model.predict(X_te)
            accs.append(float(np.mean(pred == test.labels)))
            taccs.append(_trial_accuracy(test.trial_ids, pred, test.trial_labels, k))
            if isinstance(model, RandomForest):
                for name, v in zip(columns, model.feature_importances_):
                    imp_sum[name] += float(v)
                n_imp += 1
        fold_acc.append(accs)
        trial_acc.append(taccs)
        iter_means.append(float(np.mean(accs)))

    grand = float(np.mean(iter_means))
    importances = {name: v / n_imp for name, v in sorted(imp_sum.items())} if n_imp else {}
    return EvalReport(
        fold_accuracies=fold_acc,
        iteration_means=iter_means,
        grand_mean=grand,
        std=float(np.std(iter_means)),
        class_counts={"fold_train_per_class": fold_counts,
                      "windows": dataset.class_counts(), "trials": dataset.trial_class_counts()},
        config=cfg.to_dict(),
        chance=chance_level(cfg.strategy.task),
        trial_accuracies=trial_acc,
        feature_importances=importances,
        selections=selections,
        holdouts=holdouts,
        dataset={"n_windows": int(len(dataset.labels)), "n_trials": len(dataset.trial_labels),
                 "class_names": list(dataset.class_names), "excluded_trials": sorted(dataset.excluded_trials)},
    )
