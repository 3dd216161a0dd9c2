"""VAS score to pain-class mapping under the three labeling strategies."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EmptyDatasetError, InvalidArgumentError
from .signal_core import WINDOWS_PER_TRIAL


class PainClass(str, Enum):
    NO_PAIN = "no_pain"
    MODERATE_PAIN = "moderate_pain"
    HIGH_PAIN = "high_pain"
    PAIN = "pain"
    EXCLUDED = "excluded"


BINARY_CLASSES = (PainClass.NO_PAIN, PainClass.PAIN)
TERNARY_CLASSES = (PainClass.NO_PAIN, PainClass.MODERATE_PAIN, PainClass.HIGH_PAIN)


@dataclass(frozen=True)
class LabelStrategy:
    id: str = "S1"
    task: str = "binary"

    def __post_init__(self):
        sid = self.id.upper()
        task = self.task.lower()
        if sid not in ("S1", "S2", "S3"):
            raise InvalidArgumentError(f"unknown strategy {self.id!r}")
        if task not in ("binary", "ternary"):
            raise InvalidArgumentError(f"unknown task {self.task!r}")
        if task == "ternary" and sid != "S1":
            raise InvalidArgumentError(f"strategy {sid} is defined for the binary task only")
        object.__setattr__(self, "id", sid)
        object.__setattr__(self, "task", task)

    @classmethod
    def parse(cls, strategy, task="binary"):
        return cls(str(strategy), str(task))

    @property
    def classes(self):
        return TERNARY_CLASSES if self.task == "ternary" else BINARY_CLASSES

    @property
    def class_names(self):
        return [c.value for c in self.classes]


def label(vas, strategy: LabelStrategy) -> PainClass:
    """Map one VAS score to a class.

    S1 ternary: <=3 no pain, 4-6 moderate, >=7 high. S1 binary: <=3 vs >3.
    S2 binary: <7 vs >=7. S3 binary: <=3 vs >=7 with 4-6 excluded.
    """
    if isinstance(vas, bool) or int(vas) != vas or not 0 <= vas <= 10:
        raise InvalidArgumentError(f"VAS must be an integer in [0, 10], got {vas!r}")
    vas = int(vas)
    if strategy.id == "S1":
        if vas <= 3:
            return PainClass.NO_PAIN
        if strategy.task == "binary":
            return PainClass.PAIN
        return PainClass.MODERATE_PAIN if vas <= 6 else PainClass.HIGH_PAIN
    if strategy.id == "S2":
        return PainClass.PAIN if vas >= 7 else PainClass.NO_PAIN
    if vas <= 3:
        return PainClass.NO_PAIN
    if vas >= 7:
        return PainClass.PAIN
    return PainClass.EXCLUDED


def vas_pool(pain_class, strategy: LabelStrategy):
    """All VAS scores that map to ``pain_class`` under ``strategy``."""
    target = PainClass(pain_class)
    return [v for v in range(11) if label(v, strategy) == target]


@dataclass
class LabeledDataset:
    """Per-window labels with trial provenance; ``features`` is optional."""

    trial_ids: np.ndarray
    window_indices: np.ndarray
    labels: np.ndarray
    class_names: list
    strategy: LabelStrategy
    trial_labels: dict = field(default_factory=dict)
    excluded_trials: list = field(default_factory=list)
    features: object = None

    @property
    def n_classes(self):
        return len(self.class_names)

    def class_counts(self):
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return {name: int(c) for name, c in zip(self.class_names, counts)}

    def trial_class_counts(self):
        counts = Counter(self.trial_labels.values())
        return {name: int(counts.get(i, 0)) for i, name in enumerate(self.class_names)}

    def with_features(self, fm):
        """Attach a FeatureMatrix, aligning its rows to this dataset's rows."""
        key = {(int(t), int(w)): i for i, (t, w) in enumerate(zip(fm.trial_ids, fm.window_indices))}
        try:
            rows = [key[(int(t), int(w))] for t, w in zip(self.trial_ids, self.window_indices)]
        except KeyError as exc:
            raise InvalidArgumentError(f"feature matrix lacks row {exc.args[0]}") from None
        out = LabeledDataset(
            self.trial_ids, self.window_indices, self.labels, self.class_names, self.strategy,
            dict(self.trial_labels), list(self.excluded_trials), fm.take_rows(rows),
        )
        return out


def label_dataset(trials, strategy: LabelStrategy, windows_per_trial=WINDOWS_PER_TRIAL):
    """Every window inherits its trial's label; excluded trials are dropped."""
    if not trials:
        raise InvalidArgumentError("no trials to label")
    names = strategy.class_names
    class_id = {n: i for i, n in enumerate(names)}
    tids, widx, labs = [], [], []
    trial_labels, excluded = {}, []
    for tr in trials:
        cls = label(tr.vas, strategy)
        if cls is PainClass.EXCLUDED:
            excluded.append(int(tr.trial_id))
            continue
        cid = class_id[cls.value]
        trial_labels[int(tr.trial_id)] = cid
        tids.extend([tr.trial_id] * windows_per_trial)
        widx.extend(range(windows_per_trial))
        labs.extend([cid] * windows_per_trial)
    if not labs:
        raise EmptyDatasetError(f"all {len(trials)} trials were excluded under {strategy.id}")
    return LabeledDataset(
        np.asarray(tids, dtype=np.int64), np.asarray(widx, dtype=np.int64),
        np.asarray(labs, dtype=np.intp), list(names), strategy, trial_labels, excluded,
    )


def label_histogram(vas_scores, strategy: LabelStrategy, include_excluded=False):
    """Trial counts per class, in class order."""
    counts = Counter(label(v, strategy).value for v in vas_scores)
    out = {name: counts.get(name, 0) for name in strategy.class_names}
    if include_excluded:
        out[PainClass.EXCLUDED.value] = counts.get(PainClass.EXCLUDED.value, 0)
    return out


def write_label_histogram(path, vas_scores, strategy: LabelStrategy):
    """CSV of per-VAS counts with each score's class (rows vas,class,count)."""
    counts = Counter(int(v) for v in vas_scores)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vas", "class", "count"])
        for v in range(11):
            w.writerow([v, label(v, strategy).value, counts.get(v, 0)])
