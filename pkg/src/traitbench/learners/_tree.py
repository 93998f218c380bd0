"""Binary CART core shared by the decision tree and the random forest.

Trees are grown to purity (no depth limit, minimum leaf size 1) with
Gini impurity, candidate thresholds at midpoints between consecutive
distinct feature values, and deterministic tie-breaking: among
equal-impurity splits the lowest feature index wins, then the lowest
threshold. Feature subsampling and bootstrap draws use an embedded
splitmix64 stream so results are bit-identical with or without the
numba backend.

The builder returns flat node arrays (feature, threshold, left, right,
leaf prediction); ``feature == -1`` marks a leaf.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_S30 = _U64(30)
_S27 = _U64(27)
_S31 = _U64(31)
_INV64 = 1.0 / 18446744073709551616.0


@njit(cache=True)
def _next_u64(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return state, z


@njit(cache=True)
def _next_index(state, bound):
    state, z = _next_u64(state)
    u = float(z) * _INV64
    idx = int(u * bound)
    if idx >= bound:
        idx = bound - 1
    return state, idx


@njit(cache=True)
def _sample_features(state, d, mtry, perm, out):
    """Partial Fisher-Yates draw of mtry distinct features, returned sorted."""
    for j in range(d):
        perm[j] = j
    for j in range(mtry):
        state, pick = _next_index(state, d - j)
        tmp = perm[j + pick]
        perm[j + pick] = perm[j]
        perm[j] = tmp
    out[:mtry] = np.sort(perm[:mtry])
    return state


@njit(cache=True)
def build_tree(X, y, mtry, seed):
    """Grow one CART tree on (X, y) and return its flat node arrays."""
    n, d = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    pred = np.zeros(max_nodes, np.int64)

    idx = np.arange(n)
    scratch = np.empty(n, np.int64)
    perm = np.empty(d, np.int64)
    feats = np.empty(d, np.int64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1
    state = _U64(seed)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        ones = 0
        for i in range(lo, hi):
            ones += y[idx[i]]
        pred[node] = 1 if 2 * ones > m else 0

        if ones == 0 or ones == m or m < 2:
            continue

        k = mtry if mtry < d else d
        state = _sample_features(state, d, k, perm, feats)

        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        for fi in range(k):
            f = feats[fi]
            vals = np.empty(m)
            labs = np.empty(m, np.int64)
            for i in range(m):
                vals[i] = X[idx[lo + i], f]
            order = np.argsort(vals)
            for i in range(m):
                labs[i] = y[idx[lo + order[i]]]
            c1 = 0
            for i in range(m - 1):
                c1 += labs[i]
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b:
                    continue
                thr = 0.5 * (a + b)
                if thr <= a or thr >= b:
                    continue
                m_l = i + 1
                m_r = m - m_l
                c1l = c1
                c0l = m_l - c1l
                c1r = ones - c1l
                c0r = m_r - c1r
                score = (c1l * c1l + c0l * c0l) / m_l + (c1r * c1r + c0r * c0r) / m_r
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_thr = thr

        if best_f < 0:
            continue

        # Stable in-place partition: left block (<= threshold) first.
        n_left = 0
        pos = 0
        for i in range(lo, hi):
            if X[idx[i], best_f] <= best_thr:
                scratch[pos] = idx[i]
                pos += 1
                n_left += 1
        for i in range(lo, hi):
            if X[idx[i], best_f] > best_thr:
                scratch[pos] = idx[i]
                pos += 1
        for i in range(m):
            idx[lo + i] = scratch[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        top += 1
        stack_node[top] = n_nodes + 1
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
        top += 1
        n_nodes += 2

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], pred[:n_nodes]


@njit(cache=True)
def predict_tree(feature, threshold, left, right, pred, X):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = pred[node]
    return out


@njit(cache=True)
def bootstrap_indices(n, seed):
    state = _U64(seed)
    out = np.empty(n, np.int64)
    for i in range(n):
        state, pick = _next_index(state, n)
        out[i] = pick
    return out
