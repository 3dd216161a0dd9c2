"""Time the compiled kernels against their pure-Python twins.

Run from the repository root after building the extension::

    python3 setup.py build_ext --inplace -q
    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each case checks that both backends agree before timing them.
"""

import argparse
import importlib
import sys
import time

import numpy as np

from ieegpain._kernels import _fallback


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _sosfilt_case(scale):
    from ieegpain.signal_core import butter_lowpass_sos, notch_sos

    sos = np.ascontiguousarray(np.vstack([notch_sos((60.0, 120.0, 180.0), 500.0), butter_lowpass_sos(200.0, 500.0, 5)]))
    x = np.random.default_rng(0).standard_normal((16, int(150_000 * scale)))
    return "sosfilt 16ch x %d, %d sections" % (x.shape[1], sos.shape[0]), (sos, x), {}


def _grow_tree_case(scale):
    rng = np.random.default_rng(1)
    n = int(1500 * scale)
    X = rng.standard_normal((n, 48))
    y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(np.intp)
    boot = rng.integers(0, n, n)
    rows, mult = np.unique(boot, return_counts=True)
    args = (X, y, rows.astype(np.intp), mult.astype(np.int64), 2, 7, 2, 12345)
    return "grow_tree %d x 48, one bootstrap tree" % n, args, {}


def _smo_case(scale):
    rng = np.random.default_rng(2)
    n = int(400 * scale)
    X = rng.standard_normal((n, 10))
    y = np.where(X[:, 0] + 0.7 * rng.standard_normal(n) > 0, 1.0, -1.0)
    sq = (X * X).sum(axis=1)
    K = np.exp(-(sq[:, None] + sq[None, :] - 2.0 * X @ X.T) / X.shape[1])
    return "smo_solve RBF %d x %d" % (n, n), (np.ascontiguousarray(K), y, 1.0, 1e-3, 100_000), {}


def _same(a, b):
    if isinstance(a, dict):
        return all(np.array_equal(a[k], b[k]) for k in a)
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-10, atol=1e-12)
    return np.isclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    try:
        core = importlib.import_module("ieegpain._kernels._core")
    except ImportError:
        print("compiled extension not built; run: python3 setup.py build_ext --inplace", file=sys.stderr)
        return 1
    scale = 0.25 if args.quick else 1.0
    cases = [("sosfilt", _sosfilt_case), ("grow_tree", _grow_tree_case), ("smo_solve", _smo_case)]
    print(f"{'case':<44} {'cython s':>10} {'python s':>10} {'speedup':>8}  agree")
    for fname, make in cases:
        label, fargs, kw = make(scale)
        fast, slow = getattr(core, fname), getattr(_fallback, fname)
        agree = _same(fast(*fargs, **kw), slow(*fargs, **kw))
        tc = _best_of(lambda: fast(*fargs, **kw), args.repeat)
        tp = _best_of(lambda: slow(*fargs, **kw), args.repeat)
        print(f"{label:<44} {tc:>10.4f} {tp:>10.4f} {tp / tc:>7.1f}x  {'yes' if agree else 'NO'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
