"""Feature store shared by the protocol: PIB for all channels, MSC on demand."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import InvalidArgumentError
from .labeling import label_dataset
from .signal_core import BANDS, preprocess, segment_trials, window_trial
from .spectral import (PIB_DISCARD_S, WELCH_OVERLAP, WELCH_SEGMENT_S, FeatureMatrix, _msc_block,
                       extract_pib_matrix, msc_column)

FEATURE_SETS = ("PIB", "MSC", "PIB+MSC")
_FEATURE_ALIASES = {"pib": "PIB", "msc": "MSC", "both": "PIB+MSC", "pib+msc": "PIB+MSC"}


def normalize_feature_set(name):
    key = str(name).strip()
    if key in FEATURE_SETS:
        return key
    try:
        return _FEATURE_ALIASES[key.lower()]
    except KeyError:
        raise InvalidArgumentError(f"unknown feature set {name!r}; choose pib, msc or both") from None


class FeatureStore:
    """Per-window features for one set of windows.

    PIB is computed for every channel up front. Band-mean MSC is cached per
    channel pair: with at most ``eager_pairs_below`` channels every pair is
    computed at construction, otherwise pairs are filled in the first time a
    selection asks for them.
    """

    def __init__(self, windows, channels, sample_rate_hz, bands=BANDS, *, discard_s=PIB_DISCARD_S,
                 bandpass_order=2, zero_phase=False, segment_s=WELCH_SEGMENT_S,
                 overlap_fraction=WELCH_OVERLAP, eager_pairs_below=32, max_windows=16):
        if not windows:
            raise InvalidArgumentError("feature store needs at least one window")
        self.windows = list(windows)
        self.channels = list(channels)
        self.sample_rate_hz = float(sample_rate_hz)
        self.bands = tuple(bands)
        self.segment_len = int(round(segment_s * self.sample_rate_hz))
        self.overlap_fraction = overlap_fraction
        self.max_windows = max_windows
        self.trial_ids = np.array([w.trial_id for w in self.windows], dtype=np.int64)
        self.window_indices = np.array([w.window_index for w in self.windows], dtype=np.int64)
        self.pib = extract_pib_matrix(self.windows, self.bands, self.channels, self.sample_rate_hz,
                                      discard_s=discard_s, order=bandpass_order, zero_phase=zero_phase)
        self._pair_values = {}
        self.degenerate_cells = 0
        if len(self.channels) <= eager_pairs_below and len(self.channels) >= 2:
            self._ensure_pairs(list(itertools.combinations(sorted(self.channels), 2)))

    @property
    def n_rows(self):
        return len(self.windows)

    def _ensure_pairs(self, pairs):
        missing = [p for p in pairs if p not in self._pair_values]
        if not missing:
            return
        involved = sorted({c for p in missing for c in p})
        lookup = {c: i for i, c in enumerate(self.channels)}
        pos = {c: i for i, c in enumerate(involved)}
        ch_idx = [lookup[c] for c in involved]
        pairs_idx = [(pos[a], pos[b]) for a, b in missing]
        blocks = []
        for i in range(0, self.n_rows, self.max_windows):
            v, d = _msc_block(self.windows[i:i + self.max_windows], ch_idx, pairs_idx, self.bands,
                              self.sample_rate_hz, self.segment_len, self.overlap_fraction)
            blocks.append(v)
            self.degenerate_cells += int(d.sum())
        vals = np.concatenate(blocks, axis=0)  # (rows, pairs, bands)
        for j, p in enumerate(missing):
            self._pair_values[p] = vals[:, j, :].copy()

    def msc(self, selected):
        """MSC matrix over canonical pairs of ``selected``, pair-major then band."""
        selected = list(selected)
        if len(set(selected)) != len(selected):
            raise InvalidArgumentError("duplicate channels in selection")
        if len(selected) < 2:
            raise InvalidArgumentError("MSC needs at least two selected channels")
        unknown = [c for c in selected if c not in self.channels]
        if unknown:
            raise InvalidArgumentError(f"selected channels not in store: {unknown}")
        pairs = list(itertools.combinations(sorted(selected), 2))
        self._ensure_pairs(pairs)
        values = np.concatenate([self._pair_values[p] for p in pairs], axis=1)
        cols = [msc_column(a, b, band.name) for a, b in pairs for band in self.bands]
        return FeatureMatrix(values, cols, self.trial_ids, self.window_indices)

    def matrix(self, feature_set, selected=None):
        fs = normalize_feature_set(feature_set)
        if fs == "PIB":
            return self.pib
        if selected is None:
            raise InvalidArgumentError(f"feature set {fs} needs an electrode selection")
        m = self.msc(selected)
        return m if fs == "MSC" else self.pib.hstack(m)

    def rows_for(self, trial_ids, window_indices):
        key = {(int(t), int(w)): i for i, (t, w) in enumerate(zip(self.trial_ids, self.window_indices))}
        try:
            return np.array([key[(int(t), int(w))] for t, w in zip(trial_ids, window_indices)], dtype=np.intp)
        except KeyError as exc:
            raise InvalidArgumentError(f"store lacks window {exc.args[0]}") from None


def build_dataset(rec, reports, strategy, *, preprocess_kw=None, store_kw=None, taper=False):
    """Preprocess, segment, label and window a recording.

    Returns ``(LabeledDataset, FeatureStore)`` whose rows are aligned.
    """
    kw = dict(preprocess_kw or {})
    clean = preprocess(rec, **kw)
    trials = segment_trials(clean, reports)
    if not trials:
        raise InvalidArgumentError("no report is covered by the recording")
    ds = label_dataset(trials, strategy)
    keep = set(ds.trial_labels)
    windows = [w for tr in trials if tr.trial_id in keep for w in window_trial(tr, taper=taper)]
    store = FeatureStore(windows, clean.channel_names, clean.sample_rate_hz, **(store_kw or {}))
    if not (np.array_equal(store.trial_ids, ds.trial_ids)
            and np.array_equal(store.window_indices, ds.window_indices)):
        raise InvalidArgumentError("window order does not match labeled rows")
    return ds, store
