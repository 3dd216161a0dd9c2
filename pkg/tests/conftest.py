import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    """4 channels, 6 trials per class, alpha x4 on ch01 and gamma coherence 0.8 on (ch02, ch03)."""
    from ieegpain.datagen import SynthConfig, generate

    cfg = SynthConfig(
        channels=4,
        trials_per_class={"no_pain": 6, "pain": 6},
        seed=7,
        effects=[
            {"kind": "band_power", "channels": [1], "band": "alpha", "effect_size": 4.0},
            {"kind": "coherence", "channels": [2, 3], "band": "gamma", "effect_size": 0.8},
        ],
    )
    rec, reports = generate(cfg)
    return cfg, rec, reports


@pytest.fixture(scope="session")
def small_dataset(small_synth):
    from ieegpain.features import build_dataset
    from ieegpain.labeling import LabelStrategy

    _, rec, reports = small_synth
    return build_dataset(rec, reports, LabelStrategy("S1", "binary"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line[1])
