"""Recording containers, IIR filters and trial/window segmentation.

Filters are realized as cascaded second-order sections designed through the
bilinear transform with frequency pre-warping, and run causally in a single
pass unless ``zero_phase=True`` is requested.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

DEFAULT_NOTCH_FREQS = (60.0, 120.0, 180.0)
DEFAULT_NOTCH_Q = 30.0
TRIAL_SECONDS = 300.0
WINDOW_SECONDS = 10.0
WINDOWS_PER_TRIAL = 30


class SkippedReportWarning(UserWarning):
    """A pain report could not be turned into a full trial."""


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0 < self.low_hz < self.high_hz):
            raise InvalidArgumentError(
                f"band {self.name}: need 0 < low_hz < high_hz, got {self.low_hz}, {self.high_hz}"
            )

    def check_rate(self, sample_rate_hz):
        nyq = sample_rate_hz / 2.0
        if self.high_hz >= nyq:
            raise InvalidArgumentError(
                f"band {self.name} upper edge {self.high_hz} Hz must be below Nyquist ({nyq} Hz)"
            )


BANDS = (
    BandSpec("delta", 0.1, 4.0),
    BandSpec("theta", 4.0, 8.0),
    BandSpec("alpha", 8.0, 13.0),
    BandSpec("beta", 13.0, 30.0),
    BandSpec("gamma", 30.0, 60.0),
    BandSpec("high_gamma", 60.0, 200.0),
)
BAND_BY_NAME = {b.name: b for b in BANDS}


def get_band(name):
    try:
        return BAND_BY_NAME[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown band {name!r}; choose from {sorted(BAND_BY_NAME)}") from None


@dataclass
class Recording:
    """Multichannel signal, ``samples`` shaped (channels, time)."""

    samples: np.ndarray
    sample_rate_hz: float
    channel_names: list
    usable_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise InvalidArgumentError("samples must be 2-D (channels x time)")
        self.channel_names = [str(c) for c in self.channel_names]
        if len(self.channel_names) != self.samples.shape[0]:
            raise InvalidArgumentError(
                f"{len(self.channel_names)} channel names for {self.samples.shape[0]} channels"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise InvalidArgumentError("channel names must be unique")
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be positive")
        self.sample_rate_hz = float(self.sample_rate_hz)
        if self.usable_mask is None:
            self.usable_mask = np.ones(self.samples.shape[0], dtype=bool)
        else:
            self.usable_mask = np.asarray(self.usable_mask, dtype=bool)
            if self.usable_mask.shape != (self.samples.shape[0],):
                raise InvalidArgumentError("usable_mask must have one entry per channel")

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.sample_rate_hz

    def with_samples(self, samples):
        return Recording(samples, self.sample_rate_hz, list(self.channel_names), self.usable_mask.copy())

    def mark_zero_channels(self):
        """Flag channels whose samples are all zero as unusable (in place)."""
        zero = ~np.any(self.samples != 0, axis=1)
        self.usable_mask &= ~zero
        return self

    def flag_channels(self, names):
        """Flag the named channels as unusable (in place)."""
        lookup = {c: i for i, c in enumerate(self.channel_names)}
        for name in names:
            if name not in lookup:
                raise InvalidArgumentError(f"unknown channel {name!r}")
            self.usable_mask[lookup[name]] = False
        return self

    def usable(self):
        """Copy containing only usable channels."""
        keep = np.flatnonzero(self.usable_mask)
        return Recording(
            self.samples[keep],
            self.sample_rate_hz,
            [self.channel_names[i] for i in keep],
            np.ones(len(keep), dtype=bool),
        )


class PainReport(NamedTuple):
    timestamp_s: float
    vas: int


@dataclass
class Trial:
    samples: np.ndarray
    vas: int
    report_time_s: float
    trial_id: int
    start_sample: int
    sample_rate_hz: float
    channel_names: list

    @property
    def n_samples(self):
        return self.samples.shape[1]


@dataclass
class Window:
    samples: np.ndarray
    trial_id: int
    window_index: int
    start_sample: int = 0


# ---------------------------------------------------------------------------
# Filter design
# ---------------------------------------------------------------------------

def _prewarp(freq_hz, fs):
    return 2.0 * fs * np.tan(np.pi * freq_hz / fs)


def _bilinear(s_roots, fs):
    fs2 = 2.0 * fs
    s_roots = np.asarray(s_roots, dtype=complex)
    return (fs2 + s_roots) / (fs2 - s_roots)


def _butter_prototype(order):
    k = np.arange(1, order + 1)
    return np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def _pair_poles(poles, tol=1e-12):
    """Group digital poles into denominator rows [1, a1, a2]."""
    poles = np.asarray(poles, dtype=complex)
    cplx = poles[poles.imag > tol]
    real = np.sort(poles[np.abs(poles.imag) <= tol].real)
    dens = [[1.0, -2.0 * p.real, abs(p) ** 2] for p in sorted(cplx, key=lambda p: (p.real, p.imag))]
    for i in range(0, len(real) - 1, 2):
        r1, r2 = real[i], real[i + 1]
        dens.append([1.0, -(r1 + r2), r1 * r2])
    if len(real) % 2:
        dens.append([1.0, -real[-1], 0.0])
    return dens


def _check_cutoff(freq_hz, fs, what):
    if not 0 < freq_hz < fs / 2.0:
        raise InvalidArgumentError(f"{what} {freq_hz} Hz must lie in (0, {fs / 2.0}) Hz")


@lru_cache(maxsize=256)
def butter_lowpass_sos(cutoff_hz, sample_rate_hz, order):
    """Butterworth low-pass as second-order sections (unit DC gain)."""
    fs = float(sample_rate_hz)
    _check_cutoff(cutoff_hz, fs, "cutoff")
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    wc = _prewarp(cutoff_hz, fs)
    poles = _bilinear(wc * _butter_prototype(order), fs)
    sos = []
    for den in _pair_poles(poles):
        num = [1.0, 2.0, 1.0] if den[2] != 0.0 else [1.0, 1.0, 0.0]
        g = sum(den) / sum(num)
        sos.append([g * c for c in num] + den)
    out = np.array(sos)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=256)
def butter_bandpass_sos(low_hz, high_hz, sample_rate_hz, order=2):
    """Butterworth band-pass from an order-``order`` prototype (2*order poles).

    Gain is normalized to 1 at the (pre-warped) geometric band center.
    """
    fs = float(sample_rate_hz)
    _check_cutoff(low_hz, fs, "low edge")
    _check_cutoff(high_hz, fs, "high edge")
    if not low_hz < high_hz:
        raise InvalidArgumentError("low edge must be below high edge")
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    w1, w2 = _prewarp(low_hz, fs), _prewarp(high_hz, fs)
    bw = w2 - w1
    w0sq = w1 * w2
    analog = []
    for p in _butter_prototype(order):
        pb = p * bw
        disc = np.sqrt(pb * pb - 4.0 * w0sq + 0j)
        analog.extend([(pb + disc) / 2.0, (pb - disc) / 2.0])
    poles = _bilinear(analog, fs)
    sos = np.array([[1.0, 0.0, -1.0] + den for den in _pair_poles(poles)])
    wc = 2.0 * np.arctan(np.sqrt(w0sq) / (2.0 * fs))
    gain = np.abs(sos_response(sos, np.array([wc * fs / (2 * np.pi)]), fs))[0]
    sos[0, :3] /= gain
    sos.setflags(write=False)
    return sos


@lru_cache(maxsize=64)
def notch_sos(freqs_hz, sample_rate_hz, quality=DEFAULT_NOTCH_Q):
    """One notch biquad per frequency in ``freqs_hz`` (a tuple)."""
    fs = float(sample_rate_hz)
    if quality <= 0:
        raise InvalidArgumentError("quality must be positive")
    rows = []
    for f0 in freqs_hz:
        _check_cutoff(f0, fs, "notch frequency")
        w0 = 2.0 * np.pi * f0 / fs
        beta = np.tan(w0 / (2.0 * quality))
        g = 1.0 / (1.0 + beta)
        c = np.cos(w0)
        rows.append([g, -2.0 * g * c, g, 1.0, -2.0 * g * c, 2.0 * g - 1.0])
    sos = np.array(rows).reshape(-1, 6)
    sos.setflags(write=False)
    return sos


def sos_response(sos, freqs_hz, sample_rate_hz):
    """Complex frequency response of a section cascade at ``freqs_hz``."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate_hz
    zi = np.exp(-1j * w)
    h = np.ones_like(zi)
    for b0, b1, b2, a0, a1, a2 in np.asarray(sos):
        h *= (b0 + b1 * zi + b2 * zi * zi) / (a0 + a1 * zi + a2 * zi * zi)
    return h


def apply_sos(sos, data, zero_phase=False):
    """Filter along the last axis; 1-D or 2-D input, same shape out."""
    x = np.asarray(data, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.ascontiguousarray(x.reshape(1, -1) if squeeze else x)
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    y = _kernels.sosfilt(sos, x2)
    if zero_phase:
        y = _kernels.sosfilt(sos, np.ascontiguousarray(y[:, ::-1]))[:, ::-1]
        y = np.ascontiguousarray(y)
    return y[0] if squeeze else y


def _filter_recording(rec, sos, zero_phase):
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    x = np.ascontiguousarray(rec.samples)
    if zero_phase:
        out = np.empty_like(x)
        for r in range(rec.n_channels):
            out[r] = apply_sos(sos, x[r], zero_phase=True)
    else:
        # written in place: peak memory stays at input + output
        out = _kernels.sosfilt(sos, x, out=np.empty_like(x))
    return rec.with_samples(out)


def notch_filter(rec, freqs_hz=DEFAULT_NOTCH_FREQS, quality=DEFAULT_NOTCH_Q, zero_phase=False):
    sos = notch_sos(tuple(float(f) for f in freqs_hz), rec.sample_rate_hz, float(quality))
    return _filter_recording(rec, sos, zero_phase)


def butterworth_lowpass(rec, cutoff_hz=200.0, order=5, zero_phase=False):
    sos = butter_lowpass_sos(float(cutoff_hz), rec.sample_rate_hz, int(order))
    return _filter_recording(rec, sos, zero_phase)


def butterworth_bandpass(x, band, sample_rate_hz, order=2, zero_phase=False):
    """Band-pass a 1-D signal (or a 2-D stack along its last axis)."""
    band.check_rate(sample_rate_hz)
    sos = butter_bandpass_sos(band.low_hz, band.high_hz, float(sample_rate_hz), int(order))
    return apply_sos(sos, x, zero_phase=zero_phase)


def preprocess(rec, notch_freqs=DEFAULT_NOTCH_FREQS, notch_q=DEFAULT_NOTCH_Q,
               lowpass_hz=200.0, lowpass_order=5, bad_channels=(), zero_phase=False):
    """Notch + low-pass, then drop all-zero and flagged channels."""
    rec = rec.with_samples(rec.samples)
    rec.mark_zero_channels()
    if bad_channels:
        rec.flag_channels(bad_channels)
    rec = rec.usable()
    if notch_freqs:
        rec = notch_filter(rec, notch_freqs, notch_q, zero_phase=zero_phase)
    if lowpass_hz:
        rec = butterworth_lowpass(rec, lowpass_hz, lowpass_order, zero_phase=zero_phase)
    return rec


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment_trials(rec: Recording, reports: Sequence, trial_seconds=TRIAL_SECONDS):
    """Cut one trial per report, centered on the report time.

    Reports whose window falls outside the recording are skipped with a
    :class:`SkippedReportWarning`. ``trial_id`` is the report's position in
    ``reports``.
    """
    fs = rec.sample_rate_hz
    n_trial = int(round(trial_seconds * fs))
    half = trial_seconds / 2.0
    trials = []
    for i, rep in enumerate(reports):
        t, vas = float(rep[0]), rep[1]
        if int(vas) != vas or not 0 <= vas <= 10:
            raise InvalidArgumentError(f"report {i}: VAS must be an integer in [0, 10], got {vas}")
        start = int(round(t * fs - half * fs))
        end = start + n_trial
        if start < 0 or end > rec.n_samples:
            msg = f"report {i} at t={t:g}s: recording does not cover [{t - half:g}, {t + half:g}) s; skipped"
            warnings.warn(msg, SkippedReportWarning, stacklevel=2)
            log.warning(msg)
            continue
        trials.append(
            Trial(
                samples=rec.samples[:, start:end],
                vas=int(vas),
                report_time_s=t,
                trial_id=i,
                start_sample=start,
                sample_rate_hz=fs,
                channel_names=list(rec.channel_names),
            )
        )
    return trials


def hanning(n):
    """Symmetric Hanning taper (zero endpoints)."""
    return np.hanning(n)


def window_trial(trial: Trial, window_seconds=WINDOW_SECONDS, n_windows=WINDOWS_PER_TRIAL, taper=False):
    """Split a trial into ``n_windows`` contiguous, non-overlapping windows.

    With ``taper=True`` each window is multiplied by a symmetric Hanning
    taper; otherwise windows are views into the trial.
    """
    win_len = int(round(window_seconds * trial.sample_rate_hz))
    if trial.n_samples != win_len * n_windows:
        raise InvalidArgumentError(
            f"trial {trial.trial_id} has {trial.n_samples} samples; expected {win_len * n_windows}"
        )
    taper_vec = hanning(win_len) if taper else None
    out = []
    for w in range(n_windows):
        seg = trial.samples[:, w * win_len:(w + 1) * win_len]
        if taper_vec is not None:
            seg = seg * taper_vec
        out.append(Window(seg, trial.trial_id, w, trial.start_sample + w * win_len))
    return out
