"""Weighted regression trees compiled with numba.

Trees are grown from a frontier of candidate nodes. With ``max_splits > 0``
the candidate with the largest gain is split next (best-first, the way
``interaction.depth`` bounds the number of splits in boosting); otherwise
every splittable node is split, subject to ``max_depth``.
Split thresholds are midpoints between consecutive distinct values and the
gain is the weighted squared-error reduction.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _next(state):
    """splitmix64 step; ``state`` is a length-1 uint64 array."""
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _uniform(state):
    return (_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _randint(state, n):
    return int(_uniform(state) * n)


@njit(cache=True, nogil=True)
def _tree_seed(base, t):
    s = np.empty(1, dtype=np.uint64)
    s[0] = base ^ (np.uint64(t + 1) * _M2)
    _next(s)
    return _next(s)


def tree_seed(base, t) -> np.uint64:
    """Seed of tree ``t`` in a stream rooted at ``base`` (independent of the tree count)."""
    return np.uint64(_tree_seed(np.uint64(base), np.int64(t)))


@njit(cache=True, nogil=True)
def weighted_bootstrap(cumw, n, seed):
    """``n`` draws with probability proportional to weight (inverse CDF)."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    total = cumw[-1]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = np.searchsorted(cumw, _uniform(state) * total, side="right")
        if out[i] >= len(cumw):
            out[i] = len(cumw) - 1
    return np.sort(out)


@njit(cache=True, nogil=True)
def subsample(n, m, seed):
    """``m`` of ``n`` rows without replacement (partial Fisher-Yates), sorted."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    perm = np.arange(n)
    for i in range(m):
        j = i + _randint(state, n - i)
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])


@njit(cache=True, nogil=True)
def _best_split(X, y, w, idx, s, e, min_node, mtry, feats, state, order, mark, vals, srt):
    """Best (feature, threshold, gain) for the node holding ``idx[s:e]``.

    Large nodes read each feature's sorted order off the global presort
    ``order`` (a pass over all rows); small nodes sort their own values.
    """
    n = e - s
    N = X.shape[0]
    p = X.shape[1]
    W = 0.0
    S = 0.0
    for i in range(s, e):
        W += w[idx[i]]
        S += w[idx[i]] * y[idx[i]]
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    if n < 2 * min_node or W <= 0.0:
        return best_f, best_thr, best_gain
    m = mtry
    for j in range(p):
        feats[j] = j
    if m >= p:
        m = p
    else:
        for j in range(m):
            r = j + _randint(state, p - j)
            feats[j], feats[r] = feats[r], feats[j]
    use_presort = n * 12 > N
    if use_presort:
        for i in range(s, e):
            mark[idx[i]] += 1
    base = S * S / W
    for jj in range(m):
        f = feats[jj]
        if use_presort:
            k = 0
            for q in range(N):
                r = order[f, q]
                c = mark[r]
                for _ in range(c):
                    srt[k] = r
                    k += 1
        else:
            for i in range(n):
                vals[i] = X[idx[s + i], f]
            o = np.argsort(vals[:n], kind="mergesort")
            for i in range(n):
                srt[i] = idx[s + o[i]]
        if X[srt[0], f] == X[srt[n - 1], f]:
            continue
        WL = 0.0
        SL = 0.0
        for i in range(n - 1):
            r = srt[i]
            WL += w[r]
            SL += w[r] * y[r]
            if i + 1 < min_node:
                continue
            if n - i - 1 < min_node:
                break
            v0 = X[r, f]
            v1 = X[srt[i + 1], f]
            if v0 == v1:
                continue
            WR = W - WL
            if WL <= 0.0 or WR <= 0.0:
                continue
            SR = S - SL
            gain = SL * SL / WL + SR * SR / WR - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = 0.5 * (v0 + v1)
    if use_presort:
        for i in range(s, e):
            mark[idx[i]] = 0
    return best_f, best_thr, best_gain


@njit(cache=True, nogil=True)
def build_tree(X, y, w, rows, max_depth, max_splits, min_node, mtry, seed, order):
    """Grow one tree on the sample ``rows`` (duplicates allowed).

    Returns compact arrays ``(feature, threshold, left, right, value, gain)``;
    leaves have feature -1. ``order[f]`` is the stable argsort of column
    ``f`` of ``X``.
    """
    n = len(rows)
    mark = np.zeros(X.shape[0], dtype=np.int64)
    vals = np.empty(n)
    srt = np.empty(n, dtype=np.int64)
    cap = 2 * n + 1
    idx = rows.copy()
    buf = np.empty(n, dtype=rows.dtype)
    feats = np.empty(X.shape[1], dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed

    start = np.empty(cap, dtype=np.int64)
    end = np.empty(cap, dtype=np.int64)
    depth = np.empty(cap, dtype=np.int64)
    feature = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_t = np.zeros(cap)
    cand_g = np.zeros(cap)
    frontier = np.empty(cap, dtype=np.int64)

    n_nodes = 1
    start[0] = 0
    end[0] = n
    depth[0] = 0
    n_front = 0
    node = 0
    splits = 0
    while True:
        # evaluate the newest node (value and best split)
        s = start[node]
        e = end[node]
        W = 0.0
        S = 0.0
        for i in range(s, e):
            W += w[idx[i]]
            S += w[idx[i]] * y[idx[i]]
        value[node] = S / W if W > 0 else 0.0
        if max_depth < 0 or depth[node] < max_depth:
            f, t, g = _best_split(X, y, w, idx, s, e, min_node, mtry, feats, state, order, mark, vals, srt)
            if f >= 0:
                cand_f[node] = f
                cand_t[node] = t
                cand_g[node] = g
                frontier[n_front] = node
                n_front += 1
        if n_front == 0 or (max_splits > 0 and splits >= max_splits):
            break
        # choose the node to split
        pick = n_front - 1
        if max_splits > 0:
            for k in range(n_front):
                if cand_g[frontier[k]] > cand_g[frontier[pick]] or (
                    cand_g[frontier[k]] == cand_g[frontier[pick]] and frontier[k] < frontier[pick]
                ):
                    pick = k
        node = frontier[pick]
        frontier[pick] = frontier[n_front - 1]
        n_front -= 1
        # stable partition
        s = start[node]
        e = end[node]
        f = cand_f[node]
        t = cand_t[node]
        nl = 0
        for i in range(s, e):
            if X[idx[i], f] <= t:
                buf[nl] = idx[i]
                nl += 1
        nr = nl
        for i in range(s, e):
            if X[idx[i], f] > t:
                buf[nr] = idx[i]
                nr += 1
        for i in range(e - s):
            idx[s + i] = buf[i]
        feature[node] = f
        thr[node] = t
        gain[node] = cand_g[node]
        splits += 1
        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        left[node] = l
        right[node] = r
        start[l] = s
        end[l] = s + nl
        start[r] = s + nl
        end[r] = e
        depth[l] = depth[node] + 1
        depth[r] = depth[node] + 1
        # evaluate the right child now; the left child becomes the next node
        s2 = start[r]
        e2 = end[r]
        W = 0.0
        S = 0.0
        for i in range(s2, e2):
            W += w[idx[i]]
            S += w[idx[i]] * y[idx[i]]
        value[r] = S / W if W > 0 else 0.0
        if max_depth < 0 or depth[r] < max_depth:
            f2, t2, g2 = _best_split(X, y, w, idx, s2, e2, min_node, mtry, feats, state, order, mark, vals, srt)
            if f2 >= 0:
                cand_f[r] = f2
                cand_t[r] = t2
                cand_g[r] = g2
                frontier[n_front] = r
                n_front += 1
        node = l
    return (
        feature[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        gain[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(X, feature, thr, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def presort(X) -> np.ndarray:
    """Stable column-wise argsort, shared by every tree grown on ``X``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)


class Tree:
    """A fitted regression tree (arrays indexed by node id, root 0)."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "gain")

    def __init__(self, feature, threshold, left, right, value, gain):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.gain = np.asarray(gain, dtype=float)

    @classmethod
    def fit(cls, X, y, w, rows, max_depth=-1, max_splits=0, min_node=1, mtry=None, seed=0, order=None):
        X = np.ascontiguousarray(X, dtype=float)
        mtry = X.shape[1] if mtry is None else int(mtry)
        if order is None:
            order = presort(X)
        return cls(*build_tree(X, np.asarray(y, float), np.asarray(w, float), np.asarray(rows, np.int64),
                               int(max_depth), int(max_splits), int(min_node), mtry, np.uint64(seed), order))

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def importance(self, p) -> np.ndarray:
        split = self.feature >= 0
        return np.bincount(self.feature[split], weights=self.gain[split], minlength=p)

    def to_dict(self) -> dict:
        """Nested-node representation."""

        def node(k):
            if self.feature[k] < 0:
                return {"value": float(self.value[k])}
            return {
                "feature": int(self.feature[k]),
                "threshold": float(self.threshold[k]),
                "gain": float(self.gain[k]),
                "value": float(self.value[k]),
                "left": node(self.left[k]),
                "right": node(self.right[k]),
            }

        return node(0)

    @classmethod
    def from_dict(cls, d) -> "Tree":
        feature, thr, left, right, value, gain = [], [], [], [], [], []

        def add(nd):
            k = len(feature)
            feature.append(nd.get("feature", -1))
            thr.append(nd.get("threshold", 0.0))
            value.append(nd["value"])
            gain.append(nd.get("gain", 0.0))
            left.append(-1)
            right.append(-1)
            if "left" in nd:
                left[k] = add(nd["left"])
                right[k] = add(nd["right"])
            return k

        add(d)
        return cls(feature, thr, left, right, value, gain)
