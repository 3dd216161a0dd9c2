import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from ieegpain.errors import InvalidArgumentError
from ieegpain.signal_core import BAND_BY_NAME, BANDS, Window
from ieegpain.spectral import (FeatureMatrix, analytic_signal, extract_msc_matrix, extract_pib_matrix, msc,
                               msc_column, parse_column, pib, pib_values, standardize, welch_spectra)

FS = 500.0
ALPHA = BAND_BY_NAME["alpha"]
GAMMA = BAND_BY_NAME["gamma"]


def _cos10(n=5000):
    return np.cos(2 * np.pi * 10 * np.arange(n) / FS)


def _windows(data, trial_id=0):
    return [Window(d, trial_id, i) for i, d in enumerate(data)]


# --- analytic signal --------------------------------------------------------

@pytest.mark.parametrize("n", [63, 64, 101])
def test_analytic_signal_matches_dft_oracle(n):
    x = np.random.default_rng(n).standard_normal(n)
    z = analytic_signal(x)
    np.testing.assert_allclose(z, oracles.dft_analytic(x), atol=1e-10)
    np.testing.assert_array_equal(z.real, x)


def test_analytic_envelope_of_cosine():
    env = np.abs(analytic_signal(_cos10()))
    assert np.max(np.abs(env[250:-250] - 1.0)) < 0.01
    assert not analytic_signal(np.zeros(32)).any()
    with pytest.raises(InvalidArgumentError):
        analytic_signal(np.array([]))


@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(-1e3, 1e3)))
def test_analytic_signal_has_no_negative_frequencies(x):
    spec = np.fft.fft(analytic_signal(x))
    n = len(x)
    neg = spec[n // 2 + 1:]
    assert np.all(np.abs(neg) <= 1e-10 * max(np.linalg.norm(x), 1.0) * np.sqrt(n))


# --- PIB --------------------------------------------------------------------

def test_pib_cosine_oracle_and_frozen():
    x = _cos10()
    retained = 5000 - 250
    got = pib(x, ALPHA, FS).value
    assert got == pytest.approx(oracles.pib_bruteforce(x, 8.0, 13.0, FS), rel=1e-9)
    assert abs(got - retained) <= 0.05 * retained
    assert got == pytest.approx(4749.7209010719, rel=1e-9)


@pytest.mark.parametrize("band", BANDS, ids=lambda b: b.name)
def test_pib_closed_form_equals_envelope_sum(band):
    x = np.random.default_rng(1).standard_normal((3, 5000))
    vals = pib_values(x, band, FS)
    ref = [oracles.pib_bruteforce(row, band.low_hz, band.high_hz, FS) for row in x]
    np.testing.assert_allclose(vals, ref, rtol=1e-9)
    np.testing.assert_allclose(vals, [pib(row, band, FS).value for row in x], rtol=1e-9)


def test_pib_zero_and_errors():
    assert pib(np.zeros(1000), ALPHA, FS).value == 0.0
    with pytest.raises(InvalidArgumentError):
        pib(np.zeros(100), ALPHA, FS)
    with pytest.raises(InvalidArgumentError):
        pib(np.zeros(1000), BAND_BY_NAME["high_gamma"], 300.0)


@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31))
def test_pib_homogeneity(c, seed):
    x = np.random.default_rng(seed).standard_normal(1000)
    base = pib_values(x, ALPHA, FS)[0]
    assert pib_values(c * x, ALPHA, FS)[0] == pytest.approx(c * c * base, rel=1e-9)
    assert base >= 0


# --- Welch and MSC ----------------------------------------------------------

def test_welch_peak_and_self_cross():
    x = _cos10()
    sxx, syy, sxy = welch_spectra(x, x, FS)
    assert sxx.frequencies_hz[np.argmax(sxx.values)] == 10.0
    np.testing.assert_array_equal(sxy.values.real, sxx.values)
    assert sxx.segment_count == 19
    y = np.random.default_rng(0).standard_normal(5000)
    _, _, s_xy = welch_spectra(x, y, FS)
    _, _, s_yx = welch_spectra(y, x, FS)
    np.testing.assert_allclose(s_yx.values, np.conj(s_xy.values))
    assert np.all(sxx.values >= 0)


def test_welch_parseval_frozen():
    x = np.random.default_rng(99).standard_normal(20000)
    sxx, _, _ = welch_spectra(x, x, FS)
    ratio = np.sum(sxx.values) * (sxx.frequencies_hz[1] - sxx.frequencies_hz[0]) / np.var(x)
    assert abs(ratio - 1) < 0.05
    assert ratio == pytest.approx(0.9983982368039622, rel=1e-9)


def test_welch_errors():
    with pytest.raises(InvalidArgumentError):
        welch_spectra(np.zeros(100), np.zeros(100), FS, segment_len=200)
    with pytest.raises(InvalidArgumentError):
        welch_spectra(np.zeros(100), np.zeros(99), FS)


def test_msc_identities():
    x = np.random.default_rng(5).standard_normal(5000)
    for band in BANDS:
        assert msc(x, x, band, FS).value == pytest.approx(1.0, abs=1e-9)
        assert msc(x, -x, band, FS).value == pytest.approx(1.0, abs=1e-9)


def test_msc_matches_scipy_coherence():
    rng = np.random.default_rng(8)
    s = rng.standard_normal(5000)
    x = s + rng.standard_normal(5000)
    y = s + rng.standard_normal(5000)
    for band in BANDS:
        assert msc(x, y, band, FS).value == pytest.approx(
            oracles.msc_scipy(x, y, band.low_hz, band.high_hz, FS), abs=1e-12)


def test_msc_white_noise_bias_oracle_and_frozen():
    vals = []
    for s in range(100):
        r = np.random.default_rng([s, 1])
        x, y = r.standard_normal(5000), r.standard_normal(5000)
        vals.append(msc(x, y, GAMMA, FS).value)
    mean = float(np.mean(vals))
    assert abs(mean - 1 / 19) <= 0.5 / 19
    assert mean == pytest.approx(0.057424172837691086, rel=1e-9)


def test_msc_degenerate_zero_power():
    x = np.random.default_rng(0).standard_normal(5000)
    feat = msc(x, np.zeros(5000), ALPHA, FS)
    assert feat.value == 0.0 and feat.degenerate


@given(st.integers(0, 2 ** 31), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3))
def test_msc_bounds_symmetry_scale(seed, a, b):
    r = np.random.default_rng(seed)
    x = r.standard_normal(1500)
    y = 0.5 * x + r.standard_normal(1500)
    m = msc(x, y, ALPHA, FS).value
    assert 0.0 <= m <= 1.0
    assert msc(y, x, ALPHA, FS).value == pytest.approx(m, rel=1e-12, abs=1e-15)
    assert msc(a * x, b * y, ALPHA, FS).value == pytest.approx(m, rel=1e-9)


# --- feature matrices -------------------------------------------------------

def test_pib_matrix_layout():
    data = np.random.default_rng(2).standard_normal((3, 4, 5000))
    chans = ["a", "b", "c", "d"]
    fm = extract_pib_matrix(_windows(data), BANDS, chans, FS)
    assert fm.shape == (3, 24)
    assert fm.columns[:7] == ["PIB:a:delta", "PIB:a:theta", "PIB:a:alpha", "PIB:a:beta", "PIB:a:gamma",
                              "PIB:a:high_gamma", "PIB:b:delta"]
    assert fm.values[1, fm.columns.index("PIB:c:alpha")] == pytest.approx(pib(data[1, 2], ALPHA, FS).value,
                                                                           rel=1e-12)
    one = extract_pib_matrix(_windows(data[:1, :1]), BANDS, ["a"], FS)
    assert one.shape == (1, 6)
    with pytest.raises(InvalidArgumentError):
        extract_pib_matrix(_windows(data), BANDS, chans[:3], FS)
    assert np.all(np.isfinite(fm.values))


def test_msc_matrix_layout_and_values():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((2, 4, 5000))
    chans = ["d", "b", "a", "c"]
    fm = extract_msc_matrix(_windows(data), BANDS, ["c", "a", "b"], chans, FS)
    pairs = [("a", "b"), ("a", "c"), ("b", "c")]
    assert fm.columns == [msc_column(a, b, band.name) for a, b in pairs for band in BANDS]
    idx = {c: i for i, c in enumerate(chans)}
    for w in range(2):
        for (a, b), band in itertools.product(pairs, BANDS):
            ref = msc(data[w, idx[a]], data[w, idx[b]], band, FS).value
            assert fm.values[w, fm.columns.index(msc_column(a, b, band.name))] == pytest.approx(ref, abs=1e-12)
    swapped = extract_msc_matrix(_windows(data), BANDS, ["a", "c", "b"], chans, FS)
    np.testing.assert_array_equal(swapped.values, fm.values)
    two = extract_msc_matrix(_windows(data), BANDS, ["a", "b"], chans, FS)
    assert two.shape == (2, 6)
    with pytest.raises(InvalidArgumentError):
        extract_msc_matrix(_windows(data), BANDS, ["a", "a"], chans, FS)


def test_msc_matrix_dense_and_sparse_paths_agree():
    data = np.random.default_rng(4).standard_normal((2, 6, 2000))
    chans = [f"c{i}" for i in range(6)]
    full = extract_msc_matrix(_windows(data), BANDS, chans, chans, FS)
    sub = extract_msc_matrix(_windows(data), BANDS, ["c0", "c5"], chans, FS)
    np.testing.assert_allclose(sub.values, full.take_columns(sub.columns).values, atol=1e-12)


def test_column_names_parse():
    assert parse_column("MSC:b|a:gamma") == ("MSC", ("b", "a"), "gamma")
    assert parse_column("PIB:x:alpha") == ("PIB", ("x",), "alpha")
    assert msc_column("z", "a", "beta") == "MSC:a|z:beta"
    with pytest.raises(InvalidArgumentError):
        parse_column("FOO:a:b")


def test_feature_matrix_hstack_and_standardize():
    a = FeatureMatrix(np.ones((2, 1)), ["PIB:a:alpha"], [0, 0], [0, 1])
    b = FeatureMatrix(np.zeros((2, 1)), ["MSC:a|b:alpha"], [0, 0], [0, 1])
    assert a.hstack(b).columns == ["PIB:a:alpha", "MSC:a|b:alpha"]
    with pytest.raises(InvalidArgumentError):
        a.hstack(FeatureMatrix(np.zeros((2, 1)), ["x"], [1, 1], [0, 1]))
    tr = np.array([[1.0, 5.0], [3.0, 5.0]])
    ztr, zte = standardize(tr, np.array([[2.0, 6.0]]))
    np.testing.assert_allclose(ztr, [[-1, 0], [1, 0]])
    np.testing.assert_allclose(zte, [[0, 1]])
