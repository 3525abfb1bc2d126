"""Least-squares learners: education dummies and the full quadratic basis."""

from __future__ import annotations

import numpy as np

EDU_PREFIX = "edu_"


def _is_binary(col) -> bool:
    u = np.unique(col)
    return len(u) <= 2 and set(u.tolist()) <= {0.0, 1.0}


def basis_expand(X, names, kinds=None, return_spec=False):
    """Original columns, squares of non-binary columns, then all pairwise
    products in lexicographic (i < j) column order.

    Columns with no variation in the supplied ``X`` are dropped, so a
    training design and a prediction design must come from the same name list;
    ``return_spec`` adds the (i, j) column pairs that :func:`expand_like`
    uses to rebuild the same expansion on new rows.
    """
    X = np.asarray(X, dtype=float)
    names = list(names)
    p = X.shape[1]
    binary = [
        (kinds or {}).get(n) in ("dummy", "indicator") or _is_binary(X[:, j]) for j, n in enumerate(names)
    ]
    cols, out_names, spec = [], [], []
    for j in range(p):
        cols.append(X[:, j]); out_names.append(names[j]); spec.append((j, -1))
    for j in range(p):
        if not binary[j]:
            cols.append(X[:, j] ** 2); out_names.append(f"{names[j]}^2"); spec.append((j, j))
    for i in range(p):
        for j in range(i + 1, p):
            cols.append(X[:, i] * X[:, j]); out_names.append(f"{names[i]}*{names[j]}"); spec.append((i, j))
    M = np.column_stack(cols) if cols else np.zeros((len(X), 0))
    var = M.std(axis=0) > 0
    out = M[:, var], [n for n, v in zip(out_names, var) if v]
    if return_spec:
        return out + ([s for s, v in zip(spec, var) if v],)
    return out


def expand_like(X, spec):
    """Rebuild expanded columns from a stored list of (i, j) pairs (j=-1: raw)."""
    X = np.asarray(X, dtype=float)
    cols = [X[:, i] if j < 0 else X[:, i] * X[:, j] for i, j in spec]
    return np.column_stack(cols) if cols else np.zeros((len(X), 0))


def wls_fit(y, X, w):
    """Weighted least squares with intercept via a pseudo-inverse solve.

    Returns ``(intercept, coef, rank)``; rank-deficient designs get the
    minimum-norm solution on the centred columns. A 2-d ``y`` fits every
    column at once (intercepts of shape (m,), coefs of shape (p, m)).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    w = np.asarray(w, dtype=float)
    sw = w.sum()
    xm = w @ X / sw
    ym = w @ y / sw
    if X.shape[1] == 0:
        return (float(ym) if y.ndim == 1 else ym), np.zeros((0,) + y.shape[1:]), 0
    s = np.sqrt(w)
    Xc = (X - xm) * s[:, None]
    yc = (y - ym) * (s if y.ndim == 1 else s[:, None])
    coef, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
    b0 = ym - xm @ coef
    return (float(b0) if y.ndim == 1 else b0), coef, int(rank)
