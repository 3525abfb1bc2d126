"""Random forests and squared-error gradient boosting on :mod:`.trees`."""

from __future__ import annotations

import numpy as np

from .trees import Tree, presort, subsample, tree_seed, weighted_bootstrap


def stream_seed(*keys) -> np.uint64:
    """Root seed of a tree stream identified by integer ``keys``."""
    return np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]


class RandomForest:
    """Bagged regression trees; workers are drawn with probability
    proportional to their weight, so leaves average the drawn rows."""

    family = "random_forest"

    def __init__(self, trees, n_features, params):
        self.trees = list(trees)
        self.n_features = n_features
        self.params = dict(params)

    @classmethod
    def fit(cls, X, y, w, n_trees=500, mtry=None, min_node=5, seed=0, order=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        n, p = X.shape
        mtry = max(1, int(np.floor(np.sqrt(p)))) if mtry is None else int(mtry)
        order = presort(X) if order is None else order
        cumw = np.cumsum(w)
        ones = np.ones(n)
        trees = []
        for t in range(int(n_trees)):
            rows = weighted_bootstrap(cumw, n, tree_seed(seed, 2 * t))
            trees.append(Tree.fit(X, y, ones, rows, min_node=min_node, mtry=mtry,
                                  seed=tree_seed(seed, 2 * t + 1), order=order))
        return cls(trees, p, {"n_trees": int(n_trees), "mtry": mtry, "min_node": int(min_node)})

    def staged_predict(self, X, checkpoints):
        """Predictions of the first ``c`` trees for each ``c`` in ``checkpoints``."""
        X = np.ascontiguousarray(X, dtype=float)
        acc = np.zeros(len(X))
        out = {}
        cps = sorted(set(int(c) for c in checkpoints))
        for t, tree in enumerate(self.trees, 1):
            acc += tree.predict(X)
            if t in cps:
                out[t] = acc / t
        return out

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if not self.trees:
            raise ValueError("forest has no trees")
        acc = np.zeros(len(X))
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        for tree in self.trees:
            imp += tree.importance(self.n_features)
        return imp / max(len(self.trees), 1)


class GradientBoosting:
    """Least-squares boosting: each tree (at most ``depth`` splits, grown
    best-first) fits current residuals on a ``bag`` fraction of rows drawn
    without replacement; predictions add ``shrinkage`` times the tree."""

    family = "gbm"

    def __init__(self, trees, base_score, shrinkage, n_features, params):
        self.trees = list(trees)
        self.base_score = float(base_score)
        self.shrinkage = float(shrinkage)
        self.n_features = n_features
        self.params = dict(params)

    @classmethod
    def fit(cls, X, y, w, n_trees=200, depth=4, shrinkage=0.1, bag=0.8, min_node=10, seed=0, order=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        n, p = X.shape
        order = presort(X) if order is None else order
        base = float(np.dot(w, y) / w.sum())
        F = np.full(n, base)
        m = max(1, int(np.floor(bag * n)))
        trees = []
        for t in range(int(n_trees)):
            rows = subsample(n, m, tree_seed(seed, 2 * t)) if m < n else np.arange(n)
            tree = Tree.fit(X, y - F, w, rows, max_splits=depth, min_node=min_node,
                            seed=tree_seed(seed, 2 * t + 1), order=order)
            trees.append(tree)
            if shrinkage != 0.0:
                F += shrinkage * tree.predict(X)
        params = {"n_trees": int(n_trees), "depth": int(depth), "shrinkage": float(shrinkage),
                  "bag": float(bag), "min_node": int(min_node)}
        return cls(trees, base, shrinkage, p, params)

    def staged_predict(self, X, checkpoints):
        X = np.ascontiguousarray(X, dtype=float)
        acc = np.full(len(X), self.base_score)
        cps = sorted(set(int(c) for c in checkpoints))
        out = {c: acc.copy() for c in cps if c == 0}
        for t, tree in enumerate(self.trees, 1):
            acc += self.shrinkage * tree.predict(X)
            if t in cps:
                out[t] = acc.copy()
        return out

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        acc = np.full(len(X), self.base_score)
        for tree in self.trees:
            acc += self.shrinkage * tree.predict(X)
        return acc

    def importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        for tree in self.trees:
            imp += tree.importance(self.n_features)
        return imp / max(len(self.trees), 1)


def normalize_importance(imp) -> np.ndarray:
    """Scale so the largest importance is 100 (all zeros stay zero)."""
    imp = np.asarray(imp, dtype=float)
    top = imp.max(initial=0.0)
    return imp * (100.0 / top) if top > 0 else np.zeros_like(imp)
