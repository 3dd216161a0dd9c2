"""Band power (Hilbert envelope) and band-averaged coherence features."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .signal_core import BANDS, BandSpec, apply_sos, butter_bandpass_sos

PIB_DISCARD_S = 0.5
WELCH_SEGMENT_S = 1.0
WELCH_OVERLAP = 0.5


@dataclass(frozen=True)
class PibFeature:
    channel: str
    band: str
    value: float


@dataclass(frozen=True)
class MscFeature:
    channel_a: str
    channel_b: str
    band: str
    value: float
    degenerate: bool = False


@dataclass
class SpectralEstimate:
    frequencies_hz: np.ndarray
    values: np.ndarray
    segment_count: int


@dataclass
class FeatureMatrix:
    """Rows are windows, columns are named features.

    Column names are ``PIB:{channel}:{band}`` or ``MSC:{a}|{b}:{band}``.
    """

    values: np.ndarray
    columns: list
    trial_ids: np.ndarray
    window_indices: np.ndarray
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            self.values = self.values.reshape(len(self.trial_ids), -1)
        self.columns = list(self.columns)
        self.trial_ids = np.asarray(self.trial_ids, dtype=np.int64)
        self.window_indices = np.asarray(self.window_indices, dtype=np.int64)
        n, d = self.values.shape
        if d != len(self.columns):
            raise InvalidArgumentError(f"{d} value columns but {len(self.columns)} names")
        if len(self.trial_ids) != n or len(self.window_indices) != n:
            raise InvalidArgumentError("row provenance must have one entry per row")

    @property
    def shape(self):
        return self.values.shape

    def take_rows(self, rows):
        rows = np.asarray(rows)
        return FeatureMatrix(self.values[rows], self.columns, self.trial_ids[rows], self.window_indices[rows])

    def take_columns(self, names):
        lookup = {c: i for i, c in enumerate(self.columns)}
        try:
            idx = [lookup[c] for c in names]
        except KeyError as exc:
            raise InvalidArgumentError(f"unknown column {exc.args[0]!r}") from None
        return FeatureMatrix(self.values[:, idx], list(names), self.trial_ids, self.window_indices)

    def hstack(self, other):
        if not (np.array_equal(self.trial_ids, other.trial_ids)
                and np.array_equal(self.window_indices, other.window_indices)):
            raise InvalidArgumentError("cannot concatenate matrices with different rows")
        return FeatureMatrix(
            np.hstack([self.values, other.values]),
            self.columns + other.columns,
            self.trial_ids,
            self.window_indices,
        )


def pib_column(channel, band_name):
    return f"PIB:{channel}:{band_name}"


def msc_column(a, b, band_name):
    a, b = sorted((a, b))
    return f"MSC:{a}|{b}:{band_name}"


def parse_column(name):
    """Split a column name into (kind, channels tuple, band)."""
    parts = name.split(":")
    if len(parts) != 3 or parts[0] not in ("PIB", "MSC"):
        raise InvalidArgumentError(f"unrecognized feature column {name!r}")
    kind, chans, band = parts
    if kind == "MSC":
        pair = tuple(chans.split("|"))
        if len(pair) != 2:
            raise InvalidArgumentError(f"malformed MSC column {name!r}")
        return kind, pair, band
    return kind, (chans,), band


# ---------------------------------------------------------------------------
# Hilbert envelope and power-in-band
# ---------------------------------------------------------------------------

def _hilbert_weights(n):
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return h


def analytic_signal(x):
    """FFT-based analytic signal along the last axis.

    The real part is the input itself; the imaginary part is the Hilbert
    transform obtained by zeroing negative-frequency bins.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1] if x.ndim else 0
    if n == 0:
        raise InvalidArgumentError("analytic_signal needs a non-empty input")
    spec = np.fft.fft(x, axis=-1) * _hilbert_weights(n)
    z = np.fft.ifft(spec, axis=-1)
    return x + 1j * z.imag


def _retained_start(n, sample_rate_hz, discard_s):
    start = int(round(discard_s * sample_rate_hz))
    if start >= n:
        raise InvalidArgumentError("transient discard removes the whole window")
    return start


def pib_values(data, band: BandSpec, sample_rate_hz, *, discard_s=PIB_DISCARD_S, order=2, zero_phase=False):
    """Power-in-band for each row of ``data`` (rows x time).

    By Parseval, the summed squared envelope of the FFT analytic signal of
    ``m`` retained samples equals ``2*sum(x**2) - (X[0]**2 + X[m/2]**2) / m``,
    where ``X[0]`` and ``X[m/2]`` (even ``m`` only) are the DC and Nyquist
    DFT bins. That identity gives the same value as the direct time-domain
    sum without any transform.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    band.check_rate(sample_rate_hz)
    n = data.shape[1]
    start = _retained_start(n, sample_rate_hz, discard_s)
    sos = butter_bandpass_sos(band.low_hz, band.high_hz, float(sample_rate_hz), int(order))
    filt = apply_sos(sos, data, zero_phase=zero_phase)[:, start:]
    m = filt.shape[1]
    energy = np.einsum("ij,ij->i", filt, filt)
    edge = filt.sum(axis=1) ** 2
    if m % 2 == 0:
        edge += (filt[:, 0::2].sum(axis=1) - filt[:, 1::2].sum(axis=1)) ** 2
    return np.maximum(2.0 * energy - edge / m, 0.0)


def pib(window_channel, band: BandSpec, sample_rate_hz, *, channel="", discard_s=PIB_DISCARD_S,
        order=2, zero_phase=False):
    """Power-in-band of one channel of one window: sum of squared envelope."""
    x = np.asarray(window_channel, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("pib expects a 1-D signal")
    band.check_rate(sample_rate_hz)
    if x.shape[0] < sample_rate_hz:
        raise InvalidArgumentError("pib needs at least one second of samples")
    start = _retained_start(x.shape[0], sample_rate_hz, discard_s)
    sos = butter_bandpass_sos(band.low_hz, band.high_hz, float(sample_rate_hz), int(order))
    filt = apply_sos(sos, x, zero_phase=zero_phase)[start:]
    env = np.abs(analytic_signal(filt))
    return PibFeature(channel, band.name, float(np.sum(env * env)))


# ---------------------------------------------------------------------------
# Welch spectra and coherence
# ---------------------------------------------------------------------------

def _welch_geometry(n, segment_len, overlap_fraction):
    if not 0 <= overlap_fraction < 1:
        raise InvalidArgumentError("overlap_fraction must lie in [0, 1)")
    if segment_len < 2:
        raise InvalidArgumentError("segment_len must be >= 2")
    if segment_len > n:
        raise InvalidArgumentError(f"segment_len {segment_len} exceeds signal length {n}")
    step = max(1, int(round(segment_len * (1 - overlap_fraction))))
    k = 1 + (n - segment_len) // step
    return step, k


def _segment_spectra(data, segment_len, step, k):
    """Hann-tapered, mean-removed segment FFTs: (..., K, F).

    Uses linearity: rfft((s - mean) * w) = rfft(s * w) - mean * rfft(w),
    so segments are read through a strided view without a gather copy.
    """
    segs = np.lib.stride_tricks.sliding_window_view(data, segment_len, axis=-1)[..., : (k - 1) * step + 1: step, :]
    taper = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(segment_len) / segment_len)
    spec = np.fft.rfft(segs * taper, axis=-1)
    spec -= segs.mean(axis=-1, keepdims=True) * np.fft.rfft(taper)
    return spec, taper


def welch_spectra(x, y, sample_rate_hz, segment_len=None, overlap_fraction=WELCH_OVERLAP):
    """Welch auto- and cross-spectral densities (one-sided).

    Returns ``(Sxx, Syy, Sxy)``; ``Sxy`` is complex with
    ``Sxy = mean(conj(X) * Y)`` so that ``Syx = conj(Sxy)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError("x and y must be 1-D and of equal length")
    if segment_len is None:
        segment_len = int(round(WELCH_SEGMENT_S * sample_rate_hz))
    step, k = _welch_geometry(x.shape[0], int(segment_len), overlap_fraction)
    spec, taper = _segment_spectra(np.stack([x, y]), int(segment_len), step, k)
    scale = 1.0 / (sample_rate_hz * np.sum(taper ** 2))
    one_sided = np.full(spec.shape[-1], 2.0)
    one_sided[0] = 1.0
    if segment_len % 2 == 0:
        one_sided[-1] = 1.0
    X, Y = spec[0], spec[1]
    # auto-spectra use the same product as the cross-spectrum so Sxy(x, x) == Sxx exactly
    sxx = np.mean(np.conj(X) * X, axis=0).real * scale * one_sided
    syy = np.mean(np.conj(Y) * Y, axis=0).real * scale * one_sided
    sxy = np.mean(np.conj(X) * Y, axis=0) * scale * one_sided
    freqs = np.fft.rfftfreq(int(segment_len), 1.0 / sample_rate_hz)
    return (
        SpectralEstimate(freqs, sxx, k),
        SpectralEstimate(freqs, syy, k),
        SpectralEstimate(freqs, sxy, k),
    )


def band_bins(freqs, band: BandSpec):
    """Indices of bins with center frequency in [low, high)."""
    return np.flatnonzero((freqs >= band.low_hz) & (freqs < band.high_hz))


def msc(x, y, band: BandSpec, sample_rate_hz, segment_len=None, overlap_fraction=WELCH_OVERLAP,
        channel_a="", channel_b=""):
    """Band-mean magnitude-squared coherence of two equal-length signals."""
    band.check_rate(sample_rate_hz)
    sxx, syy, sxy = welch_spectra(x, y, sample_rate_hz, segment_len, overlap_fraction)
    if sxx.segment_count < 2:
        raise InvalidArgumentError("coherence needs at least two Welch segments")
    bins = band_bins(sxx.frequencies_hz, band)
    if bins.size == 0:
        raise InvalidArgumentError(f"no frequency bins fall inside band {band.name}")
    value, degenerate = _band_mean_msc(
        np.abs(sxy.values[bins]) ** 2, sxx.values[bins], syy.values[bins]
    )
    return MscFeature(channel_a, channel_b, band.name, float(value), bool(degenerate))


def _band_mean_msc(cross_sq, pa, pb):
    den = pa * pb
    ok = den > 0
    per_bin = np.zeros(np.broadcast(cross_sq, den).shape)
    np.divide(cross_sq, den, out=per_bin, where=ok)
    per_bin = np.clip(per_bin, 0.0, 1.0)
    return per_bin.mean(axis=-1), ~ok.all(axis=-1)


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------

def _check_windows(windows, channels):
    if not windows:
        raise InvalidArgumentError("no windows given")
    n_ch = len(channels)
    for w in windows:
        if w.samples.shape[0] != n_ch:
            raise InvalidArgumentError(
                f"window ({w.trial_id}, {w.window_index}) has {w.samples.shape[0]} channels, expected {n_ch}"
            )


def _chunks(windows, max_rows, n_ch):
    per = max(1, max_rows // max(n_ch, 1))
    for i in range(0, len(windows), per):
        yield windows[i:i + per]


def extract_pib_matrix(windows, bands=BANDS, channels=None, sample_rate_hz=500.0, *,
                       discard_s=PIB_DISCARD_S, order=2, zero_phase=False, max_rows=4096):
    """PIB for every window x channel x band, columns channel-major."""
    if channels is None:
        raise InvalidArgumentError("channel names are required")
    channels = list(channels)
    _check_windows(windows, channels)
    n_ch, n_b = len(channels), len(bands)
    out = np.empty((len(windows), n_ch * n_b))
    row = 0
    for chunk in _chunks(windows, max_rows, n_ch):
        stack = np.concatenate([w.samples for w in chunk], axis=0)
        for j, band in enumerate(bands):
            vals = pib_values(stack, band, sample_rate_hz, discard_s=discard_s, order=order,
                              zero_phase=zero_phase)
            out[row:row + len(chunk), j::n_b] = vals.reshape(len(chunk), n_ch)
        row += len(chunk)
    cols = [pib_column(c, b.name) for c in channels for b in bands]
    return FeatureMatrix(
        out, cols, [w.trial_id for w in windows], [w.window_index for w in windows]
    )


def canonical_pairs(selected):
    sel = sorted(selected)
    return list(itertools.combinations(sel, 2))


def _msc_block(windows, ch_idx, pairs_idx, bands, sample_rate_hz, segment_len, overlap_fraction):
    """(rows, pairs, bands) band-mean MSC plus a per-cell degenerate mask."""
    data = np.stack([w.samples[ch_idx] for w in windows])
    step, k = _welch_geometry(data.shape[-1], segment_len, overlap_fraction)
    if k < 2:
        raise InvalidArgumentError("coherence needs at least two Welch segments")
    spec, _ = _segment_spectra(data, segment_len, step, k)
    freqs = np.fft.rfftfreq(segment_len, 1.0 / sample_rate_hz)
    band_sel = [band_bins(freqs, b) for b in bands]
    for band, bins in zip(bands, band_sel):
        if bins.size == 0:
            raise InvalidArgumentError(f"no frequency bins fall inside band {band.name}")
    used = np.unique(np.concatenate(band_sel))
    spec = spec[..., used]  # (W, C, K, F')
    local = [np.searchsorted(used, bins) for bins in band_sel]
    n_ch = spec.shape[1]
    power = np.sum(spec.real ** 2 + spec.imag ** 2, axis=2)  # (W, C, F')
    ia = np.array([p[0] for p in pairs_idx])
    ib = np.array([p[1] for p in pairs_idx])
    if 4 * len(pairs_idx) >= n_ch * n_ch:
        # dense cross-spectral matrix per (window, bin)
        st = np.ascontiguousarray(spec.transpose(0, 3, 1, 2))
        cross = (st.conj() @ st.swapaxes(-1, -2))[:, :, ia, ib].transpose(0, 2, 1)
        cross_sq = cross.real ** 2 + cross.imag ** 2
    else:
        cross_sq = np.empty((data.shape[0], len(pairs_idx), used.shape[0]))
        conj = np.conj(spec)
        for a in np.unique(ia):
            sel = np.flatnonzero(ia == a)
            cross = np.einsum("wkf,wpkf->wpf", conj[:, a], spec[:, ib[sel]])
            cross_sq[:, sel] = cross.real ** 2 + cross.imag ** 2
    vals = np.empty((len(windows), len(pairs_idx), len(bands)))
    degen = np.zeros_like(vals, dtype=bool)
    for j, bins in enumerate(local):
        v, d = _band_mean_msc(cross_sq[..., bins], power[:, ia][..., bins], power[:, ib][..., bins])
        vals[:, :, j] = v
        degen[:, :, j] = d
    return vals, degen


def extract_msc_matrix(windows, bands=BANDS, selected_channels=None, channels=None, sample_rate_hz=500.0,
                       *, segment_len=None, overlap_fraction=WELCH_OVERLAP, max_windows=16):
    """Band-mean MSC for every unordered pair of ``selected_channels``.

    Columns are ordered by lexicographic pair, then band. Degenerate cells
    (zero in-band power) are 0 and counted in ``flags['degenerate']``.
    """
    if channels is None or selected_channels is None:
        raise InvalidArgumentError("channel names and a selection are required")
    channels = list(channels)
    selected = list(selected_channels)
    if len(set(selected)) != len(selected):
        raise InvalidArgumentError("duplicate channels in selection")
    if len(selected) < 2:
        raise InvalidArgumentError("MSC needs at least two selected channels")
    lookup = {c: i for i, c in enumerate(channels)}
    missing = [c for c in selected if c not in lookup]
    if missing:
        raise InvalidArgumentError(f"selected channels not in recording: {missing}")
    _check_windows(windows, channels)
    if segment_len is None:
        segment_len = int(round(WELCH_SEGMENT_S * sample_rate_hz))
    sel = sorted(selected)
    ch_idx = [lookup[c] for c in sel]
    pos = {c: i for i, c in enumerate(sel)}
    pairs = canonical_pairs(sel)
    pairs_idx = [(pos[a], pos[b]) for a, b in pairs]
    blocks, degen_count = [], 0
    for i in range(0, len(windows), max_windows):
        v, d = _msc_block(windows[i:i + max_windows], ch_idx, pairs_idx, bands, sample_rate_hz,
                          int(segment_len), overlap_fraction)
        blocks.append(v.reshape(v.shape[0], -1))
        degen_count += int(d.sum())
    cols = [msc_column(a, b, band.name) for a, b in pairs for band in bands]
    fm = FeatureMatrix(
        np.concatenate(blocks, axis=0), cols,
        [w.trial_id for w in windows], [w.window_index for w in windows],
    )
    fm.flags["degenerate"] = degen_count
    return fm


def standardize(train, *others):
    """Z-score columns with training statistics; constant columns get unit scale."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = [(train - mu) / sd]
    out.extend((o - mu) / sd for o in others)
    return out if others else out[0]
