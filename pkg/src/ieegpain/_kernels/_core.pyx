# cython: language_level=3
"""Compiled kernels: biquad cascade, Gini tree growth, SMO dual solver.

Every routine here has a pure-Python twin in ``_fallback.py`` that follows
the same arithmetic order, so both backends produce identical trees and
(up to last-ulp effects in the filters) identical outputs.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t

cnp.import_array()

ctypedef cnp.float64_t DTYPE_t
ctypedef cnp.intp_t ITYPE_t

cdef double SMO_TAU = 1e-12
cdef double MIN_GAIN = 1e-10


# ---------------------------------------------------------------------------
# Second-order sections
# ---------------------------------------------------------------------------

DEF ROW_BLOCK = 8


def sosfilt(const double[:, ::1] sos, const double[:, ::1] x, out=None):
    """Run a biquad cascade (transposed direct form II) along axis 1.

    One pass over time pushes each sample through every section, for a
    block of rows at once, so the independent recursions overlap in the
    pipeline. Per-row arithmetic matches a section-by-section cascade.
    """
    cdef Py_ssize_t n_rows = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t n_sec = sos.shape[0]
    cdef Py_ssize_t r0, nb, t, s, b
    cdef double v, yout
    if sos.shape[1] != 6:
        raise ValueError("sos must have shape (n_sections, 6)")
    if out is None:
        out_arr = np.empty((n_rows, n), dtype=np.float64)
    else:
        out_arr = out
        if out_arr.shape[0] != n_rows or out_arr.shape[1] != n:
            raise ValueError("out has the wrong shape")
    coef_arr = np.empty((n_sec, 5), dtype=np.float64)
    state_arr = np.zeros((n_sec, 2, ROW_BLOCK), dtype=np.float64)
    cdef double[:, ::1] res = out_arr
    cdef double[:, ::1] coef = coef_arr
    cdef double[:, :, ::1] z = state_arr
    cdef double lane[ROW_BLOCK]
    for s in range(n_sec):
        for b in range(5):
            coef[s, b] = sos[s, b if b < 3 else b + 1] / sos[s, 3]
    with nogil:
        for r0 in range(0, n_rows, ROW_BLOCK):
            nb = min(ROW_BLOCK, n_rows - r0)
            for s in range(n_sec):
                for b in range(ROW_BLOCK):
                    z[s, 0, b] = 0.0
                    z[s, 1, b] = 0.0
            for b in range(nb, ROW_BLOCK):
                lane[b] = 0.0
            for t in range(n):
                for b in range(nb):
                    lane[b] = x[r0 + b, t]
                for s in range(n_sec):
                    for b in range(nb):
                        v = lane[b]
                        yout = coef[s, 0] * v + z[s, 0, b]
                        z[s, 0, b] = coef[s, 1] * v - coef[s, 3] * yout + z[s, 1, b]
                        z[s, 1, b] = coef[s, 2] * v - coef[s, 4] * yout
                        lane[b] = yout
                for b in range(nb):
                    res[r0 + b, t] = lane[b]
    return out_arr


# ---------------------------------------------------------------------------
# Random-forest tree growth
# ---------------------------------------------------------------------------

cdef struct SortItem:
    double v
    Py_ssize_t y
    long long w


cdef inline void _swap(SortItem* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef SortItem t = a[i]
    a[i] = a[j]
    a[j] = t


cdef inline double _median3(SortItem* a, Py_ssize_t n) noexcept nogil:
    cdef double x = a[0].v, y = a[n // 2].v, z = a[n - 1].v
    if x < y:
        if y < z:
            return y
        elif x < z:
            return z
        return x
    elif x < z:
        return x
    elif y < z:
        return z
    return y


cdef void _sift_down(SortItem* a, Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t child, maxind, root = start
    while True:
        child = root * 2 + 1
        maxind = root
        if child < end and a[maxind].v < a[child].v:
            maxind = child
        if child + 1 < end and a[maxind].v < a[child + 1].v:
            maxind = child + 1
        if maxind == root:
            break
        _swap(a, root, maxind)
        root = maxind


cdef void _heapsort(SortItem* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t start = (n - 2) // 2, end = n
    while True:
        _sift_down(a, start, n)
        if start == 0:
            break
        start -= 1
    end = n - 1
    while end > 0:
        _swap(a, 0, end)
        _sift_down(a, 0, end)
        end -= 1


cdef void _introsort(SortItem* a, Py_ssize_t n, int maxd) noexcept nogil:
    """Sort by value: median-of-3 three-way quicksort, heapsort fallback."""
    cdef double pivot
    cdef Py_ssize_t i, l, r, j
    cdef SortItem t
    while n > 16:
        if maxd <= 0:
            _heapsort(a, n)
            return
        maxd -= 1
        pivot = _median3(a, n)
        i = 0
        l = 0
        r = n
        while i < r:
            if a[i].v < pivot:
                _swap(a, i, l)
                i += 1
                l += 1
            elif a[i].v > pivot:
                r -= 1
                _swap(a, i, r)
            else:
                i += 1
        _introsort(a, l, maxd)
        a += r
        n -= r
    for i in range(1, n):
        t = a[i]
        j = i - 1
        while j >= 0 and a[j].v > t.v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = t


cdef inline int _log2_floor(Py_ssize_t n) noexcept nogil:
    cdef int r = 0
    while n > 1:
        n >>= 1
        r += 1
    return r


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def grow_tree(const double[:, ::1] X, const ITYPE_t[::1] y,
              const ITYPE_t[::1] samples, const long long[::1] weights,
              Py_ssize_t n_classes, Py_ssize_t max_features,
              Py_ssize_t min_samples_split, uint64_t seed):
    """Grow one unpruned Gini tree over ``X[samples]``.

    ``weights`` holds integer multiplicities (bootstrap counts), so a
    weighted row behaves exactly like that many duplicated rows. Returns a
    dict of flat node arrays; leaves have ``feature == -1``.
    """
    cdef Py_ssize_t m = samples.shape[0]
    if weights.shape[0] != m:
        raise ValueError("weights must align with samples")
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t cap = 2 * m + 1
    if m < 1:
        raise ValueError("empty sample set")
    if max_features < 1 or max_features > d:
        raise ValueError("max_features out of range")

    feature_arr = np.full(cap, -1, dtype=np.intp)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.intp)
    right_arr = np.full(cap, -1, dtype=np.intp)
    value_arr = np.zeros((cap, n_classes), dtype=np.float64)
    impurity_arr = np.zeros(cap, dtype=np.float64)
    nsamp_arr = np.zeros(cap, dtype=np.float64)
    cdef ITYPE_t[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef ITYPE_t[::1] left = left_arr
    cdef ITYPE_t[::1] right = right_arr
    cdef double[:, ::1] value = value_arr
    cdef double[::1] impurity = impurity_arr
    cdef double[::1] nsamp = nsamp_arr

    idx_arr = np.array(samples, dtype=np.intp, copy=True)
    w_arr = np.array(weights, dtype=np.int64, copy=True)
    tmp_arr = np.empty(m, dtype=np.intp)
    tmpw_arr = np.empty(m, dtype=np.int64)
    perm_arr = np.empty(d, dtype=np.intp)
    stack_arr = np.empty((cap, 3), dtype=np.intp)
    counts_arr = np.zeros(n_classes, dtype=np.int64)
    cl_arr = np.zeros(n_classes, dtype=np.int64)
    cr_arr = np.zeros(n_classes, dtype=np.int64)
    cdef ITYPE_t[::1] idx = idx_arr
    cdef ITYPE_t[::1] tmp = tmp_arr
    cdef long long[::1] wt = w_arr
    cdef long long[::1] tmpw = tmpw_arr
    cdef ITYPE_t[::1] perm = perm_arr
    cdef ITYPE_t[:, ::1] stack = stack_arr
    cdef long long[::1] counts = counts_arr
    cdef long long[::1] cl = cl_arr
    cdef long long[::1] cr = cr_arr

    cdef SortItem* buf = <SortItem*>malloc(m * sizeof(SortItem))
    if buf == NULL:
        raise MemoryError()

    cdef uint64_t state = seed
    cdef Py_ssize_t top = 0, n_nodes = 1
    cdef Py_ssize_t node, start, end, cnt, i, j, fi, f, c, n_nonzero
    cdef Py_ssize_t best_f, p, q, swap
    cdef long long sqP, sqL, sqR, n, nl, nr, w
    cdef double proxy, best_proxy, best_thr, thr, gain

    try:
        with nogil:
            stack[0, 0] = 0
            stack[0, 1] = 0
            stack[0, 2] = m
            top = 1
            while top > 0:
                top -= 1
                node = stack[top, 0]
                start = stack[top, 1]
                end = stack[top, 2]
                cnt = end - start

                for c in range(n_classes):
                    counts[c] = 0
                n = 0
                for i in range(start, end):
                    counts[y[idx[i]]] += wt[i]
                    n += wt[i]
                sqP = 0
                n_nonzero = 0
                for c in range(n_classes):
                    value[node, c] = <double>counts[c]
                    sqP += counts[c] * counts[c]
                    if counts[c] > 0:
                        n_nonzero += 1
                nsamp[node] = <double>n
                impurity[node] = 1.0 - (<double>sqP) / ((<double>n) * (<double>n))

                if n < min_samples_split or n_nonzero <= 1:
                    continue

                for i in range(d):
                    perm[i] = i
                for i in range(max_features):
                    j = i + <Py_ssize_t>(_splitmix_next(&state) % <uint64_t>(d - i))
                    swap = perm[i]
                    perm[i] = perm[j]
                    perm[j] = swap

                best_proxy = -1.0
                best_f = -1
                best_thr = 0.0
                for fi in range(max_features):
                    f = perm[fi]
                    for i in range(cnt):
                        buf[i].v = X[idx[start + i], f]
                        buf[i].y = y[idx[start + i]]
                        buf[i].w = wt[start + i]
                    _introsort(buf, cnt, 2 * _log2_floor(cnt))
                    if buf[0].v >= buf[cnt - 1].v:
                        continue
                    for c in range(n_classes):
                        cl[c] = 0
                        cr[c] = counts[c]
                    sqL = 0
                    sqR = sqP
                    nl = 0
                    for i in range(cnt - 1):
                        c = buf[i].y
                        w = buf[i].w
                        sqL += 2 * cl[c] * w + w * w
                        cl[c] += w
                        sqR -= 2 * cr[c] * w - w * w
                        cr[c] -= w
                        nl += w
                        if buf[i].v < buf[i + 1].v:
                            nr = n - nl
                            proxy = (<double>sqL) / (<double>nl) + (<double>sqR) / (<double>nr)
                            if proxy > best_proxy:
                                best_proxy = proxy
                                best_f = f
                                thr = (buf[i].v + buf[i + 1].v) / 2.0
                                if thr >= buf[i + 1].v:
                                    thr = buf[i].v
                                best_thr = thr

                if best_f < 0:
                    continue
                gain = best_proxy - (<double>sqP) / (<double>n)
                if not (gain > MIN_GAIN):
                    continue

                # stable partition on X <= threshold
                p = start
                q = 0
                for i in range(start, end):
                    if X[idx[i], best_f] <= best_thr:
                        idx[p] = idx[i]
                        wt[p] = wt[i]
                        p += 1
                    else:
                        tmp[q] = idx[i]
                        tmpw[q] = wt[i]
                        q += 1
                for i in range(q):
                    idx[p + i] = tmp[i]
                    wt[p + i] = tmpw[i]
                cnt = p - start

                feature[node] = best_f
                threshold[node] = best_thr
                left[node] = n_nodes
                right[node] = n_nodes + 1
                stack[top, 0] = n_nodes + 1
                stack[top, 1] = start + cnt
                stack[top, 2] = end
                top += 1
                stack[top, 0] = n_nodes
                stack[top, 1] = start
                stack[top, 2] = start + cnt
                top += 1
                n_nodes += 2
    finally:
        free(buf)

    return {
        "feature": feature_arr[:n_nodes].copy(),
        "threshold": threshold_arr[:n_nodes].copy(),
        "left": left_arr[:n_nodes].copy(),
        "right": right_arr[:n_nodes].copy(),
        "value": value_arr[:n_nodes].copy(),
        "impurity": impurity_arr[:n_nodes].copy(),
        "n_node_samples": nsamp_arr[:n_nodes].copy(),
    }


def apply_tree(const double[:, ::1] X, const ITYPE_t[::1] feature,
               const double[::1] threshold, const ITYPE_t[::1] left,
               const ITYPE_t[::1] right):
    """Leaf index reached by each row of ``X``."""
    cdef Py_ssize_t n = X.shape[0], r, node
    out_arr = np.empty(n, dtype=np.intp)
    cdef ITYPE_t[::1] out = out_arr
    with nogil:
        for r in range(n):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = node
    return out_arr


# ---------------------------------------------------------------------------
# SMO for the soft-margin dual with a precomputed kernel
# ---------------------------------------------------------------------------

def smo_solve(const double[:, ::1] K, const double[::1] y, double C,
              double tol, Py_ssize_t max_iter):
    """Second-order working-set SMO. Returns (alpha, rho, n_iter)."""
    cdef Py_ssize_t n = K.shape[0]
    cdef Py_ssize_t it, t, i, j
    cdef double Gmax, Gmax2, obj_min, b, a, val, yG
    cdef double Kii, quad, delta, diff, ssum, old_ai, old_aj, dai, daj, yi, yj
    cdef double ub, lb, sum_free, rho
    cdef Py_ssize_t n_free
    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = np.full(n, -1.0, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr

    it = 0
    with nogil:
        while it < max_iter:
            Gmax = -1e300
            i = -1
            for t in range(n):
                if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                    if -y[t] * G[t] > Gmax:
                        Gmax = -y[t] * G[t]
                        i = t
            Gmax2 = -1e300
            obj_min = 1e300
            j = -1
            if i >= 0:
                Kii = K[i, i]
                for t in range(n):
                    if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                        yG = y[t] * G[t]
                        if yG > Gmax2:
                            Gmax2 = yG
                        b = Gmax + yG
                        if b > 0:
                            a = Kii + K[t, t] - 2.0 * K[i, t]
                            if a <= 0:
                                a = SMO_TAU
                            val = -(b * b) / a
                            if val < obj_min:
                                obj_min = val
                                j = t
            if i < 0 or j < 0 or Gmax + Gmax2 < tol:
                break
            it += 1

            yi = y[i]
            yj = y[j]
            old_ai = alpha[i]
            old_aj = alpha[j]
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = SMO_TAU
            if yi != yj:
                delta = (-G[i] - G[j]) / quad
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j] = 0
                        alpha[i] = diff
                else:
                    if alpha[i] < 0:
                        alpha[i] = 0
                        alpha[j] = -diff
                if diff > 0:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = C - diff
                else:
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = C + diff
            else:
                delta = (G[i] - G[j]) / quad
                ssum = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if ssum > C:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = ssum - C
                else:
                    if alpha[j] < 0:
                        alpha[j] = 0
                        alpha[i] = ssum
                if ssum > C:
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = ssum - C
                else:
                    if alpha[i] < 0:
                        alpha[i] = 0
                        alpha[j] = ssum

            dai = alpha[i] - old_ai
            daj = alpha[j] - old_aj
            for t in range(n):
                G[t] += y[t] * yi * K[i, t] * dai + y[t] * yj * K[j, t] * daj

        ub = 1e300
        lb = -1e300
        n_free = 0
        sum_free = 0.0
        for t in range(n):
            yG = y[t] * G[t]
            if alpha[t] >= C:
                if y[t] < 0:
                    if yG < ub:
                        ub = yG
                else:
                    if yG > lb:
                        lb = yG
            elif alpha[t] <= 0:
                if y[t] > 0:
                    if yG < ub:
                        ub = yG
                else:
                    if yG > lb:
                        lb = yG
            else:
                n_free += 1
                sum_free += yG
        if n_free > 0:
            rho = sum_free / n_free
        else:
            rho = (ub + lb) / 2.0
    return alpha_arr, rho, it
