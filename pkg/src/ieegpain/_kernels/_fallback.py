"""Pure-Python twins of the compiled kernels in ``_core.pyx``.

The tree grower and SMO solver mirror the compiled arithmetic step for step
(same RNG, same tie rules, same operation order), so a forest grown here is
identical to one grown by the extension. The biquad cascade delegates the
per-sample recursion to :func:`scipy.signal.sosfilt`.
"""

import numpy as np
from scipy import signal as _sig

_MASK64 = 0xFFFFFFFFFFFFFFFF
SMO_TAU = 1e-12
MIN_GAIN = 1e-10


def sosfilt(sos, x, out=None):
    sos = np.array(sos, dtype=np.float64)
    x = np.array(x, dtype=np.float64)
    if sos.ndim != 2 or sos.shape[1] != 6:
        raise ValueError("sos must have shape (n_sections, 6)")
    y = _sig.sosfilt(sos, x, axis=1)
    if out is None:
        return np.ascontiguousarray(y)
    out[...] = y
    return out


class SplitMix64:
    """64-bit splitmix generator; the compiled kernel uses the same stream."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound):
        return self.next() % bound


def _best_split_for_feature(vals, labels, weights, counts, n_classes):
    m = vals.shape[0]
    n = int(counts.sum())
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    if sv[0] >= sv[-1]:
        return None
    sy = labels[order]
    onehot = np.zeros((m, n_classes), dtype=np.int64)
    onehot[np.arange(m), sy] = weights[order]
    cl = np.cumsum(onehot, axis=0)[:-1]
    cr = counts[None, :] - cl
    nl = np.cumsum(weights[order])[:-1]
    nr = n - nl
    sq_l = (cl * cl).sum(axis=1)
    sq_r = (cr * cr).sum(axis=1)
    proxy = sq_l.astype(np.float64) / nl.astype(np.float64) + sq_r.astype(
        np.float64
    ) / nr.astype(np.float64)
    proxy[~(sv[:-1] < sv[1:])] = -np.inf
    i = int(np.argmax(proxy))
    if not np.isfinite(proxy[i]):
        return None
    thr = (sv[i] + sv[i + 1]) / 2.0
    if thr >= sv[i + 1]:
        thr = sv[i]
    return float(proxy[i]), float(thr)


def grow_tree(X, y, samples, weights, n_classes, max_features, min_samples_split, seed):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    idx = np.array(samples, dtype=np.intp, copy=True)
    wt = np.array(weights, dtype=np.int64, copy=True)
    m = idx.shape[0]
    if wt.shape[0] != m:
        raise ValueError("weights must align with samples")
    d = X.shape[1]
    if m < 1:
        raise ValueError("empty sample set")
    if max_features < 1 or max_features > d:
        raise ValueError("max_features out of range")
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.intp)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.intp)
    right = np.full(cap, -1, dtype=np.intp)
    value = np.zeros((cap, n_classes))
    impurity = np.zeros(cap)
    nsamp = np.zeros(cap)

    rng = SplitMix64(seed)
    stack = [(0, 0, m)]
    n_nodes = 1
    while stack:
        node, start, end = stack.pop()
        node_idx = idx[start:end]
        node_w = wt[start:end]
        labels = y[node_idx]
        counts = np.zeros(n_classes, dtype=np.int64)
        np.add.at(counts, labels, node_w)
        n = int(node_w.sum())
        sq_p = int((counts * counts).sum())
        value[node] = counts
        nsamp[node] = n
        impurity[node] = 1.0 - float(sq_p) / (float(n) * float(n))
        if n < min_samples_split or np.count_nonzero(counts) <= 1:
            continue

        perm = list(range(d))
        for i in range(max_features):
            j = i + rng.below(d - i)
            perm[i], perm[j] = perm[j], perm[i]

        best_proxy, best_f, best_thr = -1.0, -1, 0.0
        for f in perm[:max_features]:
            res = _best_split_for_feature(X[node_idx, f], labels, node_w, counts, n_classes)
            if res is not None and res[0] > best_proxy:
                best_proxy, best_thr = res
                best_f = f
        if best_f < 0:
            continue
        gain = best_proxy - float(sq_p) / float(n)
        if not gain > MIN_GAIN:
            continue

        goes_left = X[node_idx, best_f] <= best_thr
        idx[start:end] = np.concatenate([node_idx[goes_left], node_idx[~goes_left]])
        wt[start:end] = np.concatenate([node_w[goes_left], node_w[~goes_left]])
        nl = int(goes_left.sum())
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack.append((n_nodes + 1, start + nl, end))
        stack.append((n_nodes, start, start + nl))
        n_nodes += 2

    return {
        "feature": feature[:n_nodes].copy(),
        "threshold": threshold[:n_nodes].copy(),
        "left": left[:n_nodes].copy(),
        "right": right[:n_nodes].copy(),
        "value": value[:n_nodes].copy(),
        "impurity": impurity[:n_nodes].copy(),
        "n_node_samples": nsamp[:n_nodes].copy(),
    }


def apply_tree(X, feature, threshold, left, right):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[active]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def smo_solve(K, y, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = K.shape[0]
    alpha = np.zeros(n)
    G = np.full(n, -1.0)
    diag = np.diag(K).copy()
    pos = y > 0
    neg = y < 0
    it = 0
    while it < max_iter:
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        if not up.any():
            break
        score = np.where(up, -y * G, -np.inf)
        i = int(np.argmax(score))
        gmax = score[i]
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        if not low.any():
            break
        yg = y * G
        gmax2 = np.max(yg[low])
        b = gmax + yg
        cand = low & (b > 0)
        if not cand.any() or gmax + gmax2 < tol:
            break
        a = K[i, i] + diag - 2.0 * K[i]
        a = np.where(a <= 0, SMO_TAU, a)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1

        yi, yj = y[i], y[j]
        old_ai, old_aj = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = SMO_TAU
        ai, aj = alpha[i], alpha[j]
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            ssum = ai + aj
            ai -= delta
            aj += delta
            if ssum > C:
                if ai > C:
                    ai, aj = C, ssum - C
            elif aj < 0:
                aj, ai = 0.0, ssum
            if ssum > C:
                if aj > C:
                    aj, ai = C, ssum - C
            elif ai < 0:
                ai, aj = 0.0, ssum
        alpha[i], alpha[j] = ai, aj
        dai = ai - old_ai
        daj = aj - old_aj
        G += y * yi * K[i] * dai + y * yj * K[j] * daj

    yg = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free_ = ~(at_upper | at_lower)
    ub_mask = (at_upper & neg) | (at_lower & pos)
    lb_mask = (at_upper & pos) | (at_lower & neg)
    if free_.any():
        rho = float(np.sum(yg[free_]) / np.count_nonzero(free_))
    else:
        ub = float(np.min(yg[ub_mask])) if ub_mask.any() else 1e300
        lb = float(np.max(yg[lb_mask])) if lb_mask.any() else -1e300
        rho = (ub + lb) / 2.0
    return alpha, rho, it
