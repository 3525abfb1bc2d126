"""Cross-fitted conditional means of worker-year variables given covariates."""

from __future__ import annotations

import numpy as np

from ..panel import CovariateMatrix, Panel
from .cv import INSTRUMENT_COLUMNS
from .ensembles import GradientBoosting, stream_seed
from .folds import make_folds
from .linear import basis_expand, wls_fit
from .trees import presort

DEFAULT_GBM = {"n_trees": 200, "depth": 4, "shrinkage": 0.05, "bag": 0.8, "min_node": 10}


def crossfit_residuals(panel: Panel, covariates: CovariateMatrix, Y, k=5, seed=0, learner="ols",
                       weight_col="analysis_weight", exclude=INSTRUMENT_COLUMNS, gbm_params=None,
                       return_folds=False):
    """Residuals ``Y_it - m(x_i)`` with ``m`` fitted on the other folds.

    Conditional means are learned at the worker level on weighted worker
    means of each column of ``Y`` (weight = summed observation weight),
    which gives the same squared-error fit as the observation-level problem
    for covariates that do not vary within a worker.
    """
    if learner not in ("ols", "basis", "gbm"):
        raise ValueError(f"unknown cross-fit learner {learner!r}")
    Y = np.asarray(Y, dtype=float)
    Y = Y[:, None] if Y.ndim == 1 else Y
    df = panel.frame
    a = df[weight_col].to_numpy()
    codes = panel.worker_codes
    nw = panel.n_workers
    W = np.bincount(codes, weights=a, minlength=nw)
    Ybar = np.column_stack([np.bincount(codes, weights=a * Y[:, j], minlength=nw) for j in range(Y.shape[1])])
    Ybar = Ybar / np.where(W > 0, W, 1.0)[:, None]
    cov = covariates.drop([c for c in exclude if c in covariates.names])
    X = cov.X[cov.rows(panel.worker_ids)]
    B = basis_expand(X, list(cov.names), cov.kinds)[0] if learner == "basis" else None
    folds = make_folds(panel.worker_ids, k, seed)
    fold = folds.fold
    M = np.empty_like(Ybar)
    params = dict(DEFAULT_GBM, **(gbm_params or {}))
    for f in range(k):
        tr = np.flatnonzero((fold != f) & (W > 0))
        te = np.flatnonzero(fold == f)
        if learner in ("ols", "basis"):
            Z = X if learner == "ols" else B
            b0, b, _ = wls_fit(Ybar[tr], Z[tr], W[tr])
            M[te] = b0 + Z[te] @ b
            continue
        order = presort(X[tr])
        for j in range(Y.shape[1]):
            # one seed per fold: identical targets get identical fits
            gb = GradientBoosting.fit(X[tr], Ybar[tr, j], W[tr], params["n_trees"], params["depth"],
                                      params["shrinkage"], params["bag"], params["min_node"],
                                      seed=stream_seed(seed, f, 99), order=order)
            M[te, j] = gb.predict(X[te])
    R = Y - M[codes]
    return (R, folds) if return_folds else R
