"""Weighted summary statistics shared by every stage."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedVarianceError

# relative slack when comparing cumulative weight shares to a probability level
_CW_TOL = 1e-12


def _as_weights(w, n):
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights have shape {w.shape}, expected ({n},)")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return w


def weighted_mean(x, w=None):
    x = np.asarray(x, dtype=float)
    w = _as_weights(w, len(x))
    return float(np.dot(w, x) / w.sum())


def weighted_var(x, w=None):
    """Population-convention weighted variance (divides by the weight total)."""
    x = np.asarray(x, dtype=float)
    w = _as_weights(w, len(x))
    m = np.dot(w, x) / w.sum()
    return float(np.dot(w, (x - m) ** 2) / w.sum())


def weighted_cov(x, y, w=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = _as_weights(w, len(x))
    sw = w.sum()
    mx = np.dot(w, x) / sw
    my = np.dot(w, y) / sw
    return float(np.dot(w, (x - mx) * (y - my)) / sw)


def weighted_corr(x, y, w=None):
    return weighted_cov(x, y, w) / np.sqrt(weighted_var(x, w) * weighted_var(y, w))


def weighted_spearman(x, y, w=None):
    """Weighted Pearson correlation of the (unweighted, average-tie) ranks."""
    return weighted_corr(rankdata(x), rankdata(y), w)


def weighted_quantile(x, q, w=None):
    """Left-continuous inverse of the weighted empirical CDF.

    Returns ``min{x_i : F_w(x_i) >= q}``; ``q`` may be a scalar or an array of
    probabilities in [0, 1]. Zero-weight observations never define a quantile.
    """
    x = np.asarray(x, dtype=float)
    w = _as_weights(w, len(x))
    keep = w > 0
    x, w = x[keep], w[keep]
    if x.size == 0:
        raise ValueError("no observations with positive weight")
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any((q_arr < 0) | (q_arr > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    idx = np.searchsorted(cw, q_arr - _CW_TOL, side="left")
    out = xs[np.minimum(idx, len(xs) - 1)]
    return out if np.ndim(q) else float(out[0])


def weighted_median(x, w=None):
    """Weighted median; averages the lower and upper medians when the
    cumulative weight hits one half exactly (the usual even-count median)."""
    x = np.asarray(x, dtype=float)
    w = _as_weights(w, len(x))
    keep = w > 0
    x, w = x[keep], w[keep]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    lo = np.searchsorted(cw, 0.5 - _CW_TOL, side="left")
    hi = np.searchsorted(cw, 0.5 + _CW_TOL, side="right")
    hi = min(hi, len(xs) - 1)
    return float(0.5 * (xs[lo] + xs[hi]))


def weighted_r2(y, yhat, w=None):
    """``1 - sum w (y - yhat)^2 / sum w (y - ybar_w)^2``; may be negative."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or len(y) < 2:
        raise ValueError("y and yhat must be equal-length vectors with at least 2 entries")
    w = _as_weights(w, len(y))
    sw = w.sum()
    if sw <= 0:
        raise ValueError("weights sum to zero")
    ybar = np.dot(w, y) / sw
    tss = np.dot(w, (y - ybar) ** 2)
    if not tss > 0:
        raise UndefinedVarianceError("weighted variance of y is zero; R^2 undefined")
    sse = np.dot(w, (y - yhat) ** 2)
    return float(1.0 - sse / tss)


def log_points_to_premium(b):
    """Convert a log-point wage gap into a proportional premium, ``exp(b) - 1``."""
    return np.expm1(b)


def format_premium(b):
    """Rounded percentage string for a log-point coefficient (0.36 -> '43%')."""
    return f"{round(100 * float(log_points_to_premium(b)))}%"


def winsorize_logs(values, lower_pct=2.5, upper_pct=97.5, w=None):
    if not 0 <= lower_pct < upper_pct <= 100:
        raise ValueError("need 0 <= lower_pct < upper_pct <= 100")
    values = np.asarray(values, dtype=float)
    lo, hi = weighted_quantile(values, [lower_pct / 100, upper_pct / 100], w)
    return np.clip(values, lo, hi)


def weighted_mean_se(x, w=None):
    """Weighted mean and its sandwich standard error (weights treated as fixed)."""
    x = np.asarray(x, dtype=float)
    w = _as_weights(w, len(x))
    sw = w.sum()
    m = np.dot(w, x) / sw
    n = np.count_nonzero(w)
    if n < 2:
        return float(m), np.nan
    se = np.sqrt(np.sum((w * (x - m)) ** 2) / sw**2 * n / (n - 1))
    return float(m), float(se)
