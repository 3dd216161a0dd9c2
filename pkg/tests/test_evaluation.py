import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ieegpain import evaluation
from ieegpain.errors import InvalidArgumentError, ProtocolError, SchemaError
from ieegpain.evaluation import (EvalReport, ProtocolConfig, balanced_indices, balanced_subsample, chance_level,
                                 holdout_size, run_protocol, shuffle_labels, split_trials)
from ieegpain.labeling import LabeledDataset, LabelStrategy
from ieegpain.spectral import FeatureMatrix

S1B = LabelStrategy("S1", "binary")
S1T = LabelStrategy("S1", "ternary")


def feature_dataset(per_class=(10, 10), sep=0.0, seed=0, strategy=S1B, windows=30, d=4):
    """Windows with Gaussian features; class c is shifted by c * sep in every column."""
    r = np.random.default_rng(seed)
    tl = np.concatenate([np.full(n, c) for c, n in enumerate(per_class)])
    tl = tl[r.permutation(len(tl))]
    trial_ids = np.repeat(np.arange(len(tl)), windows)
    widx = np.tile(np.arange(windows), len(tl))
    labels = np.repeat(tl, windows).astype(np.intp)
    X = r.standard_normal((len(labels), d)) + sep * labels[:, None]
    fm = FeatureMatrix(X, [f"PIB:e{j}:alpha" for j in range(d)], trial_ids, widx)
    return LabeledDataset(trial_ids, widx, labels, list(strategy.class_names), strategy,
                          {int(t): int(c) for t, c in enumerate(tl)}, [], fm)


def test_holdout_size_examples():
    assert holdout_size(54, 0.10) == 5
    assert holdout_size(20, 0.10) == 2
    assert holdout_size(3, 0.10) == 1
    assert holdout_size(25, 0.10) == 3  # 2.5 rounds half up


def test_chance_levels():
    assert chance_level("binary") == 0.5
    assert chance_level("ternary") == pytest.approx(1 / 3)
    with pytest.raises(InvalidArgumentError):
        chance_level("quaternary")


@given(st.integers(0, 2 ** 31), st.integers(2, 12), st.integers(2, 12), st.floats(0.05, 0.5))
@settings(max_examples=30)
def test_split_is_trial_level(seed, n0, n1, frac):
    ds = feature_dataset((n0, n1), windows=3)
    try:
        train, test = split_trials(ds, frac, seed)
    except ProtocolError:
        assert holdout_size(n0 + n1, frac) >= min(n0, n1)  # only when a class can be drained
        return
    tr, te = set(train.trial_labels), set(test.trial_labels)
    assert not tr & te and tr | te == set(ds.trial_labels)
    assert len(te) == holdout_size(n0 + n1, frac)
    assert set(np.unique(train.trial_ids)) == tr and set(np.unique(test.trial_ids)) == te
    assert len(train.labels) + len(test.labels) == len(ds.labels)
    assert set(np.unique(train.labels)) == {0, 1}


def test_split_needs_two_trials_per_class():
    with pytest.raises(ProtocolError):
        split_trials(feature_dataset((1, 5)), 0.1, 0)


def test_balanced_min_rule():
    labels = np.repeat([0, 1, 2], [300, 600, 900])
    idx = balanced_indices(labels, 3, np.random.default_rng(0))
    assert np.bincount(labels[idx]).tolist() == [300, 300, 300] and len(np.unique(idx)) == 900
    bal = np.repeat([0, 1], 50)
    np.testing.assert_array_equal(balanced_indices(bal, 2, np.random.default_rng(1)), np.arange(100))
    with pytest.raises(ProtocolError):
        balanced_indices(np.zeros(5, int), 2, np.random.default_rng(0))


def test_fold_seeds_draw_different_subsets():
    ds = feature_dataset((4, 8))
    a = balanced_subsample(ds, 0, iteration=0, fold=0)
    b = balanced_subsample(ds, 0, iteration=0, fold=1)
    c = balanced_subsample(ds, 0, iteration=0, fold=0)
    assert not np.array_equal(a.source_rows, b.source_rows)
    np.testing.assert_array_equal(a.source_rows, c.source_rows)


class _Constant:
    def __init__(self, **_):
        pass

    def fit(self, X, y):
        return self

    def predict(self, X):
        return np.zeros(len(X), dtype=np.intp)


def test_constant_model_scores_class_share(monkeypatch):
    monkeypatch.setattr(evaluation, "make_model", lambda kind, **kw: _Constant())
    ds = feature_dataset((10, 10))
    cfg = ProtocolConfig(num_iterations=15, num_folds=2, model_kind="LR")
    rep = run_protocol(cfg, ds)
    balanced_seen = 0
    for hold, row in zip(rep.holdouts, rep.fold_accuracies):
        share = np.mean([ds.trial_labels[t] == 0 for t in hold])
        assert all(acc == share for acc in row)
        if share == 0.5:
            balanced_seen += 1
            assert row == [0.5, 0.5]
    assert balanced_seen > 0


@pytest.mark.parametrize("kind", ["LR", "SVM", "RF"])
def test_separable_data_scores_high(kind):
    ds = feature_dataset((10, 10), sep=6.0, seed=1)
    rep = run_protocol(ProtocolConfig(num_iterations=3, num_folds=3, model_kind=kind), ds)
    assert rep.grand_mean >= 0.95 and rep.above_chance


def test_shuffled_labels_near_chance():
    ds = shuffle_labels(feature_dataset((40, 40), seed=2), seed=5)
    rep = run_protocol(ProtocolConfig(num_iterations=5, num_folds=4, model_kind="LR"), ds)
    assert abs(rep.grand_mean - 0.5) <= 0.10


def test_shuffle_keeps_trial_structure():
    ds = feature_dataset((6, 9))
    sh = shuffle_labels(ds, 3)
    assert sorted(sh.trial_labels.values()) == sorted(ds.trial_labels.values())
    for t, c in sh.trial_labels.items():
        assert np.all(sh.labels[sh.trial_ids == t] == c)
    assert sh.trial_labels != ds.trial_labels


@given(st.integers(0, 2 ** 20))
@settings(max_examples=8)
def test_report_invariants(seed):
    ds = feature_dataset((5, 5, 5), sep=0.5, seed=seed, strategy=S1T)
    rep = run_protocol(ProtocolConfig(num_iterations=3, num_folds=2, seed=seed, strategy=S1T,
                                      model_kind="LR", test_fraction=0.2), ds)
    acc = np.array(rep.fold_accuracies)
    assert acc.shape == (3, 2) and np.all((acc >= 0) & (acc <= 1))
    np.testing.assert_allclose(rep.iteration_means, acc.mean(axis=1))
    assert rep.grand_mean == pytest.approx(np.mean(rep.iteration_means), abs=1e-15)
    assert rep.chance == pytest.approx(1 / 3)


def test_fixed_holdout_mode():
    ds = feature_dataset((10, 10))
    rep = run_protocol(ProtocolConfig(num_iterations=4, num_folds=1, model_kind="LR", fresh_holdout=False), ds)
    assert all(h == rep.holdouts[0] for h in rep.holdouts)
    fresh = run_protocol(ProtocolConfig(num_iterations=4, num_folds=1, model_kind="LR"), ds)
    assert len({tuple(h) for h in fresh.holdouts}) > 1


def test_strategy_mismatch_and_missing_features():
    ds = feature_dataset((5, 5))
    with pytest.raises(InvalidArgumentError):
        run_protocol(ProtocolConfig(strategy=S1T), ds)
    bare = LabeledDataset(ds.trial_ids, ds.window_indices, ds.labels, ds.class_names, ds.strategy,
                          ds.trial_labels)
    with pytest.raises(InvalidArgumentError):
        run_protocol(ProtocolConfig(), bare)
    with pytest.raises(InvalidArgumentError):
        ProtocolConfig(test_fraction=1.0)
    with pytest.raises(InvalidArgumentError):
        ProtocolConfig(num_folds=0)


def test_store_protocol_observer_and_determinism(small_dataset, tmp_path):
    ds, store = small_dataset
    cfg = ProtocolConfig(num_iterations=2, num_folds=3, feature_set="PIB+MSC", k=2, model_kind="RF",
                         test_fraction=0.2, model_params={"n_trees": 10})
    seen = []
    rep = run_protocol(cfg, ds, store, observer=seen.append)
    assert len(seen) == 6
    for ev in seen:
        test = set(ev["test_trial_ids"])
        assert not test & set(ev["train_trial_ids"])
        assert not test & set(ev["selection_trial_ids"])
        assert len(set(ev["train_class_counts"])) == 1
    assert len(rep.selections) == 2 and all(len(s["channels"]) == 2 for s in rep.selections)
    assert any(k.startswith("MSC:") for k in rep.feature_importances)
    assert sum(rep.feature_importances.values()) == pytest.approx(1.0, abs=1e-9)
    again = run_protocol(cfg, ds, store)
    assert rep.to_json() == again.to_json()
    other = run_protocol(ProtocolConfig(**{**cfg.__dict__, "seed": 1}), ds, store)
    assert other.to_json() != rep.to_json()


def test_select_on_all_data_sees_holdout(small_dataset):
    ds, store = small_dataset
    cfg = ProtocolConfig(num_iterations=1, num_folds=1, feature_set="MSC", k=2, select_on_all_data=True,
                         model_params={"n_trees": 5}, test_fraction=0.2)
    seen = []
    run_protocol(cfg, ds, store, observer=seen.append)
    assert set(seen[0]["test_trial_ids"]) <= set(seen[0]["selection_trial_ids"])


def test_report_round_trip_and_fold_csv(tmp_path):
    ds = feature_dataset((6, 6))
    rep = run_protocol(ProtocolConfig(num_iterations=2, num_folds=2, model_kind="LR"), ds)
    rep.save(tmp_path / "r.json", fold_csv=tmp_path / "r.csv")
    back = EvalReport.load(tmp_path / "r.json")
    assert back.to_json() == rep.to_json()
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iteration,fold,accuracy,trial_accuracy" and len(lines) == 5
    doc = json.loads(rep.to_json())
    with pytest.raises(SchemaError):
        EvalReport.from_dict(dict(doc, version=2))
    with pytest.raises(SchemaError):
        EvalReport.from_dict(dict(doc, schema="other"))
