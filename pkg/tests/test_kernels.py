"""The compiled kernels and the pure-Python fallback must agree."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ieegpain import _kernels
from ieegpain._kernels import _fallback

try:
    _core = importlib.import_module("ieegpain._kernels._core")
except ImportError:  # pragma: no cover
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def _sos():
    from ieegpain.signal_core import butter_lowpass_sos, notch_sos

    return np.ascontiguousarray(np.vstack([notch_sos((60.0, 120.0, 180.0), 500.0),
                                           butter_lowpass_sos(200.0, 500.0, 5)]))


def _tree_args(n=300, d=6, k=3, seed=0):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, d))
    X[:, 2] = np.round(X[:, 2])  # ties in one feature
    y = ((X[:, 0] > 0).astype(int) + (X[:, 1] > 0.5)).astype(np.intp) % k
    rows, mult = np.unique(r.integers(0, n, n), return_counts=True)
    return X, y, rows.astype(np.intp), mult.astype(np.int64), k, 3, 2, 777


def test_backend_flag():
    assert _kernels.BACKEND in ("cython", "python")
    assert (_kernels.BACKEND == "cython") == (_core is not None)


def test_env_forces_fallback():
    code = "from ieegpain import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, IEEGPAIN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_sosfilt_matches_scipy():
    from scipy import signal

    x = np.random.default_rng(1).standard_normal((3, 2000))
    np.testing.assert_allclose(_fallback.sosfilt(_sos(), x), signal.sosfilt(_sos(), x, axis=1), atol=1e-12)


@needs_core
def test_sosfilt_agrees():
    x = np.random.default_rng(2).standard_normal((4, 3000))
    a = _core.sosfilt(_sos(), x)
    b = _fallback.sosfilt(_sos(), x)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    out = np.empty_like(x)
    assert _core.sosfilt(_sos(), x, out=out) is out
    np.testing.assert_array_equal(out, a)


@needs_core
@pytest.mark.parametrize("seed", range(5))
def test_grow_tree_identical(seed):
    args = _tree_args(seed=seed)
    a = _core.grow_tree(*args)
    b = _fallback.grow_tree(*args)
    assert a.keys() == b.keys()
    for key in a:
        np.testing.assert_array_equal(a[key], b[key], err_msg=key)


@needs_core
def test_apply_tree_identical():
    X, *rest = _tree_args(seed=9)
    t = _fallback.grow_tree(X, *rest)
    fields = (t["feature"], t["threshold"], t["left"], t["right"])
    Q = np.random.default_rng(3).standard_normal((200, X.shape[1]))
    np.testing.assert_array_equal(_core.apply_tree(Q, *fields), _fallback.apply_tree(Q, *fields))


@needs_core
@given(st.integers(0, 2 ** 31), st.integers(4, 40), st.floats(0.1, 10.0))
def test_smo_agrees(seed, n, C):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, 3))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    d = X[:, None, :] - X[None, :, :]
    K = np.ascontiguousarray(np.exp(-0.5 * np.einsum("ijk,ijk->ij", d, d)))
    a1, r1, i1 = _core.smo_solve(K, y, C, 1e-3, 100_000)
    a2, r2, i2 = _fallback.smo_solve(K, y, C, 1e-3, 100_000)
    assert i1 == i2
    np.testing.assert_allclose(a1, a2, rtol=1e-9, atol=1e-10)
    assert r1 == pytest.approx(r2, rel=1e-9, abs=1e-10)
    assert np.all((a1 >= 0) & (a1 <= C))
    assert abs(a1 @ y) <= 1e-8 * max(1.0, C * n)
