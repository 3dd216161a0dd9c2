"""Mutual-information scoring of electrodes and top-k selection."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .spectral import parse_column

DEFAULT_BINS = 8


@dataclass(frozen=True)
class MiScore:
    channel: str
    band: str
    mi_bits: float
    degenerate: bool = False


@dataclass
class ElectrodeSelection:
    channels: list
    per_channel_aggregate_mi: list
    k: int
    short: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "k": self.k,
            "channels": list(self.channels),
            "aggregate_mi": [float(v) for v in self.per_channel_aggregate_mi],
            "short_selection": self.short,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(list(doc["channels"]), list(doc["aggregate_mi"]), int(doc["k"]),
                   bool(doc.get("short_selection", False)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def quantile_bins(values, bins):
    """Equal-frequency bin index per value.

    Bins come from tie-aware ranks, so any strictly increasing transform of
    ``values`` yields the same assignment.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    ranks = np.searchsorted(np.sort(values, kind="stable"), values, side="left")
    return np.minimum((ranks * bins) // n, bins - 1)


def mutual_information(feature_values, labels, bins=DEFAULT_BINS):
    """Plug-in MI (bits) between a quantile-binned feature and class labels."""
    x = np.asarray(feature_values, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 1 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise InvalidArgumentError("feature_values and labels must be 1-D and of equal length")
    if x.shape[0] < 2:
        raise InvalidArgumentError("need at least two observations")
    if bins < 2:
        raise InvalidArgumentError("bins must be >= 2")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("feature values must be finite")
    if x.min() == x.max():
        return 0.0
    bx = quantile_bins(x, bins)
    _, by = np.unique(y, return_inverse=True)
    n = x.shape[0]
    joint = np.zeros((bins, by.max() + 1))
    np.add.at(joint, (bx, by), 1.0)
    pxy = joint / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def score_electrodes(pib_matrix, labels, bins=DEFAULT_BINS):
    """One MiScore per PIB column (channel x band)."""
    labels = np.asarray(labels)
    if labels.shape[0] != pib_matrix.values.shape[0]:
        raise InvalidArgumentError("labels must have one entry per matrix row")
    scores = []
    for j, col in enumerate(pib_matrix.columns):
        kind, chans, band = parse_column(col)
        if kind != "PIB":
            continue
        x = pib_matrix.values[:, j]
        degenerate = bool(x.min() == x.max())
        scores.append(MiScore(chans[0], band, mutual_information(x, labels, bins), degenerate))
    if not scores:
        raise InvalidArgumentError("matrix has no PIB columns")
    return scores


def aggregate_scores(scores):
    agg = defaultdict(float)
    for s in scores:
        agg[s.channel] += s.mi_bits
    return dict(agg)


def select_top_k(scores, k=20):
    """Top-k channels by MI summed over bands; ties go to the smaller name."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    agg = aggregate_scores(scores)
    ranked = sorted(agg.items(), key=lambda kv: (-kv[1], kv[0]))
    short = len(ranked) < k
    chosen = ranked[:k]
    return ElectrodeSelection([c for c, _ in chosen], [v for _, v in chosen], k, short)
