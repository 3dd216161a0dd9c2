"""Seeded synthetic multichannel recordings with label-tied spectral effects.

Every trial is synthesized in the frequency domain. Each channel's spectrum
is ``A(f) * z(f)`` with a 1/f amplitude profile ``A`` and unit complex
Gaussian coefficients ``z``. The two effect kinds act on that spectrum:

* ``band_power`` multiplies ``A`` inside the band by ``sqrt(effect_size)``,
  so the expected in-band power scales by ``effect_size``.
* ``coherence`` replaces a fraction ``s`` of a channel's in-band coefficient
  energy with a source shared by both channels of the pair. Two channels
  carrying shares ``s_a`` and ``s_b`` of one source (and no white floor)
  have coherence ``s_a * s_b``; with ``s_a = s_b = sqrt(c)`` the target is
  met in expectation at every in-band bin.

A white measurement floor (``noise_floor``) is independent across channels
and caps the reachable coherence; targets above the cap raise
:class:`~ieegpain.errors.ConfigError`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .labeling import LabelStrategy, PainClass, vas_pool
from .signal_core import BAND_BY_NAME, TRIAL_SECONDS, PainReport, Recording

EFFECT_KINDS = ("band_power", "coherence")
_KNEE_HZ = 0.5
_TAG_ORDER, _TAG_VAS, _TAG_TRIAL = 1, 2, 3


@dataclass
class EffectSpec:
    kind: str
    channels: list
    band: str
    effect_size: float
    applies_to_class: str = PainClass.PAIN.value

    def __post_init__(self):
        if self.kind not in EFFECT_KINDS:
            raise ConfigError(f"effect kind must be one of {EFFECT_KINDS}, got {self.kind!r}")
        if isinstance(self.channels, (str, int)):
            self.channels = [self.channels]
        self.channels = list(self.channels)
        if self.band not in BAND_BY_NAME:
            raise ConfigError(f"unknown band {self.band!r}")
        self.effect_size = float(self.effect_size)
        self.applies_to_class = PainClass(self.applies_to_class).value
        if self.kind == "band_power":
            if len(self.channels) != 1:
                raise ConfigError("band_power effects take exactly one channel")
            if not self.effect_size > 0:
                raise ConfigError("power ratio must be > 0")
        else:
            if len(self.channels) != 2 or self.channels[0] == self.channels[1]:
                raise ConfigError("coherence effects take two distinct channels")
            if not 0.0 <= self.effect_size <= 1.0:
                raise ConfigError("coherence target must lie in [0, 1]")


@dataclass
class SynthConfig:
    """Generator settings.

    ``trials_per_class`` maps class names of ``strategy``/``task`` to trial
    counts. Channels are named ``ch00``, ``ch01``, ...; effects may refer to
    channels by name or by index.
    """

    channels: int = 8
    trials_per_class: dict = field(default_factory=lambda: {"no_pain": 10, "pain": 10})
    sample_rate_hz: float = 500.0
    exponent: float = 1.0
    effects: list = field(default_factory=list)
    seed: int = 0
    strategy: str = "S1"
    task: str = "binary"
    noise_floor: float = 0.0
    trial_seconds: float = TRIAL_SECONDS

    def __post_init__(self):
        self.effects = [e if isinstance(e, EffectSpec) else EffectSpec(**e) for e in self.effects]
        if int(self.channels) != self.channels or self.channels < 1:
            raise ConfigError("channels must be a positive integer")
        self.channels = int(self.channels)
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.noise_floor < 0:
            raise ConfigError("noise_floor must be >= 0")
        try:
            self.label_strategy = LabelStrategy(self.strategy, self.task)
        except Exception as exc:
            raise ConfigError(str(exc)) from None
        allowed = set(self.label_strategy.class_names)
        if not self.trials_per_class:
            raise ConfigError("trials_per_class is empty")
        for name, count in self.trials_per_class.items():
            if name not in allowed:
                raise ConfigError(f"class {name!r} is not produced by {self.strategy}/{self.task}")
            if int(count) != count or count < 1:
                raise ConfigError(f"class {name!r} needs at least one trial")
        nyq = self.sample_rate_hz / 2.0
        for e in self.effects:
            if BAND_BY_NAME[e.band].high_hz > nyq:
                raise ConfigError(f"band {e.band} exceeds Nyquist at {self.sample_rate_hz} Hz")
            for ch in e.channels:
                self.channel_index(ch)

    @property
    def channel_names(self):
        width = max(2, len(str(self.channels - 1)))
        return [f"ch{i:0{width}d}" for i in range(self.channels)]

    def channel_index(self, ch):
        if isinstance(ch, (int, np.integer)) and not isinstance(ch, bool):
            if not 0 <= ch < self.channels:
                raise ConfigError(f"channel index {ch} outside 0..{self.channels - 1}")
            return int(ch)
        names = self.channel_names
        if ch not in names:
            raise ConfigError(f"unknown channel {ch!r}")
        return names.index(ch)

    def to_dict(self):
        doc = asdict(self)
        doc.pop("label_strategy", None)
        return doc

    @classmethod
    def from_dict(cls, doc):
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(doc) - set(known))
        if unknown:
            raise ConfigError(f"unknown synth config keys: {unknown}")
        return cls(**known)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def _amplitude_profile(freqs, exponent, n):
    amp = np.maximum(freqs, _KNEE_HZ) ** (-exponent / 2.0)
    amp[0] = 0.0
    # unit expected variance in the time domain
    return amp * (n / np.sqrt(2.0 * np.sum(amp * amp)))


def _band_mask(freqs, band_name):
    b = BAND_BY_NAME[band_name]
    return (freqs >= b.low_hz) & (freqs < b.high_hz)


def _class_plan(cfg, cls_name, freqs, base_amp):
    """Per-channel amplitude spectra and coherence shares for one class."""
    n_bins = freqs.shape[0]
    amp = np.tile(base_amp, (cfg.channels, 1))
    for e in cfg.effects:
        if e.kind == "band_power" and e.applies_to_class == cls_name:
            amp[cfg.channel_index(e.channels[0]), _band_mask(freqs, e.band)] *= np.sqrt(e.effect_size)

    sigma_w2 = cfg.noise_floor ** 2
    # expected white-floor coefficient power per bin, matched to _amplitude_profile scaling
    floor_pow = sigma_w2 * (n_bins - 1) * 2.0 if sigma_w2 > 0 else 0.0
    shares = []  # (mask, ch_a, ch_b, share_a(bins), share_b(bins))
    used = np.zeros((cfg.channels, n_bins))
    for e in cfg.effects:
        if e.kind != "coherence" or e.applies_to_class != cls_name or e.effect_size == 0:
            continue
        mask = _band_mask(freqs, e.band)
        ia, ib = cfg.channel_index(e.channels[0]), cfg.channel_index(e.channels[1])
        per_ch = []
        for ch in (ia, ib):
            p = amp[ch, mask] ** 2
            rho = p / (p + floor_pow)
            s = np.sqrt(e.effect_size) / rho
            if np.any(s > 1.0 + 1e-12):
                raise ConfigError(
                    f"coherence {e.effect_size:g} on {e.channels} in {e.band} is unreachable: "
                    f"the noise floor caps it at {float(np.min(rho)) ** 2:.3f}"
                )
            per_ch.append(np.minimum(s, 1.0))
            used[ch, mask] += per_ch[-1]
        shares.append((mask, ia, ib, per_ch[0], per_ch[1]))
    if np.any(used > 1.0 + 1e-12):
        ch = int(np.argmax(used.max(axis=1)))
        raise ConfigError(
            f"coherence effects on {cfg.channel_names[ch]} overlap in frequency and together "
            f"demand more than the channel's whole in-band power"
        )
    return amp, shares, np.minimum(used, 1.0), floor_pow


def _complex_normal(rng, shape):
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    z *= np.sqrt(0.5)
    return z


def _synth_trial(cfg, plan, n, rng):
    amp, shares, used, floor_pow = plan
    n_bins = amp.shape[1]
    z = _complex_normal(rng, (cfg.channels, n_bins))
    z *= np.sqrt(1.0 - used)
    for mask, ia, ib, sa, sb in shares:
        src = _complex_normal(rng, int(mask.sum()))
        z[ia, mask] += np.sqrt(sa) * src
        z[ib, mask] += np.sqrt(sb) * src
    spec = amp * z
    if floor_pow > 0:
        spec += np.sqrt(floor_pow) * _complex_normal(rng, (cfg.channels, n_bins))
    spec[:, 0] = 0.0
    return np.fft.irfft(spec, n=n, axis=1)


def generate(config: SynthConfig):
    """Synthesize a recording and its pain reports.

    Trials are concatenated back to back in a seeded random class order;
    each report sits at its trial's center with a VAS drawn from the scores
    that map to the trial's class.

    Returns
    -------
    (Recording, list of PainReport)
    """
    cfg = config
    fs = cfg.sample_rate_hz
    n = int(round(cfg.trial_seconds * fs))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    base_amp = _amplitude_profile(freqs, cfg.exponent, n)

    classes = []
    for name in cfg.label_strategy.class_names:
        classes.extend([name] * int(cfg.trials_per_class.get(name, 0)))
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_ORDER]))
    classes = [classes[i] for i in order_rng.permutation(len(classes))]

    plans = {name: _class_plan(cfg, name, freqs, base_amp) for name in set(classes)}
    vas_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_VAS]))
    samples = np.empty((cfg.channels, n * len(classes)))
    reports = []
    for t, name in enumerate(classes):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_TRIAL, t]))
        samples[:, t * n:(t + 1) * n] = _synth_trial(cfg, plans[name], n, rng)
        pool = vas_pool(name, cfg.label_strategy)
        vas = int(pool[vas_rng.integers(len(pool))])
        reports.append(PainReport((t * n + n / 2.0) / fs, vas))
    rec = Recording(samples, fs, cfg.channel_names)
    return rec, reports
