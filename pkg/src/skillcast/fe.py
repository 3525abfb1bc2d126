"""Weighted least squares with absorbed fixed effects and sandwich covariances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConvergenceError


def group_codes(labels) -> np.ndarray:
    """Dense integer codes for an arbitrary label array (sorted label order)."""
    return pd.factorize(np.asarray(labels), sort=True)[0]


def _group_means(M, codes, w, ng):
    sw = np.bincount(codes, weights=w, minlength=ng)
    sw[sw == 0] = 1.0
    out = np.empty((ng, M.shape[1]))
    for j in range(M.shape[1]):
        out[:, j] = np.bincount(codes, weights=w * M[:, j], minlength=ng) / sw
    return out


def demean(M, groups, w=None, tol=1e-10, max_iter=1000):
    """Sweep out weighted group means for each factor in ``groups`` by
    alternating projections until the largest update falls below ``tol``.

    Returns the demeaned matrix (same shape as ``M``) and the sweep count.
    """
    M = np.asarray(M, dtype=float)
    vec = M.ndim == 1
    R = M.reshape(len(M), -1).copy()
    w = np.ones(len(R)) if w is None else np.asarray(w, dtype=float)
    groups = [np.asarray(g) for g in groups]
    if not groups:
        return (R[:, 0] if vec else R), 0
    sizes = [int(g.max()) + 1 for g in groups]
    for sweep in range(1, max_iter + 1):
        change = 0.0
        for codes, ng in zip(groups, sizes):
            gm = _group_means(R, codes, w, ng)
            upd = gm[codes]
            R -= upd
            change = max(change, float(np.abs(upd).max(initial=0.0)))
        if len(groups) == 1 or change < tol:
            break
    else:
        raise ConvergenceError(f"alternating projections did not converge in {max_iter} sweeps")
    return (R[:, 0] if vec else R), sweep


def absorbed_dof(groups, w=None) -> int:
    """Parameters absorbed by the fixed effects (levels minus one per extra factor)."""
    if not groups:
        return 0
    dof = 0
    for i, g in enumerate(groups):
        active = g if w is None else g[np.asarray(w) > 0]
        dof += len(np.unique(active)) - (0 if i == 0 else 1)
    return dof


@dataclass
class OLSResult:
    names: list
    coef: np.ndarray
    cov: np.ndarray
    nobs: int
    df_resid: int
    r2: float
    within_r2: float
    resid: np.ndarray
    se_type: str
    dropped: list = field(default_factory=list)
    n_clusters: int | None = None
    n_singleton_clusters: int | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def tvalues(self) -> np.ndarray:
        return self.coef / self.se

    def params(self) -> pd.Series:
        return pd.Series(self.coef, index=self.names)

    def bse(self) -> pd.Series:
        return pd.Series(self.se, index=self.names)

    def __getitem__(self, name):
        i = self.names.index(name)
        return self.coef[i], float(np.sqrt(self.cov[i, i]))

    def wald(self, name):
        """Chi-square(1) Wald statistic and p-value for a single coefficient."""
        from scipy.stats import chi2

        b, s = self[name]
        stat = (b / s) ** 2
        return float(stat), float(chi2.sf(stat, 1))


def independent_columns(X, w=None, rtol=1e-10):
    """Indices of columns kept by a left-to-right rank screen."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return []
    sw = np.sqrt(np.ones(len(X)) if w is None else np.asarray(w, dtype=float))
    Xs = X * sw[:, None]
    norms = np.linalg.norm(Xs, axis=0)
    _, r = np.linalg.qr(Xs, mode="reduced")
    diag = np.abs(np.diag(r))
    return [j for j in range(X.shape[1]) if norms[j] > 0 and diag[j] > rtol * max(norms[j], 1.0)]


def wls(
    y,
    X,
    w=None,
    names=None,
    se="hc1",
    clusters=None,
    extra_dof=0,
    fe_nested_in_clusters=False,
    y_total=None,
):
    """Weighted least squares on already-demeaned data.

    ``extra_dof`` counts absorbed fixed-effect parameters; ``y_total`` is the
    untransformed outcome used for the overall R^2 (defaults to ``y``).
    Collinear columns are dropped left to right and listed in ``dropped``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    keep = independent_columns(X, w)
    dropped = [names[j] for j in range(X.shape[1]) if j not in keep]
    X = X[:, keep]
    names = [names[j] for j in keep]

    pos = w > 0
    n = int(pos.sum())
    XtW = X.T * w
    bread = np.linalg.inv(XtW @ X) if X.shape[1] else np.zeros((0, 0))
    coef = bread @ (XtW @ y) if X.shape[1] else np.zeros(0)
    resid = y - X @ coef
    k = X.shape[1]
    K = k + int(extra_dof)
    df_resid = n - K
    ssr = float(np.dot(w, resid**2))

    if se == "iid":
        cov = bread * (ssr / df_resid)
        n_cl = None
    elif se == "hc1":
        sc = X * (w * resid)[:, None]
        cov = bread @ (sc.T @ sc) @ bread * (n / df_resid)
        n_cl = None
    elif se == "cluster":
        if clusters is None:
            raise ValueError("cluster standard errors need a cluster variable")
        codes = group_codes(np.asarray(clusters)[pos])
        sc = (X * (w * resid)[:, None])[pos]
        G = int(codes.max()) + 1
        S = np.zeros((G, k))
        for j in range(k):
            S[:, j] = np.bincount(codes, weights=sc[:, j], minlength=G)
        Kc = k if fe_nested_in_clusters else K
        factor = G / (G - 1) * (n - 1) / (n - Kc)
        cov = bread @ (S.T @ S) @ bread * factor
        n_cl = G
    else:
        raise ValueError(f"unknown se type {se!r}")

    yt = y if y_total is None else np.asarray(y_total, dtype=float)
    sw = w.sum()
    tss_total = np.dot(w, (yt - np.dot(w, yt) / sw) ** 2)
    tss_within = np.dot(w, (y - (np.dot(w, y) / sw if y_total is None else 0.0)) ** 2)
    r2 = 1 - ssr / tss_total if tss_total > 0 else np.nan
    within = 1 - ssr / tss_within if tss_within > 0 else np.nan
    return OLSResult(
        names=names,
        coef=coef,
        cov=cov,
        nobs=n,
        df_resid=df_resid,
        r2=float(r2),
        within_r2=float(within),
        resid=resid,
        se_type=se,
        dropped=dropped,
        n_clusters=n_cl,
    )


def ols_fe(y, X, fe=(), w=None, names=None, se="hc1", clusters=None, add_constant=None,
           tol=1e-10, max_iter=1000):
    """Weighted OLS with the factors in ``fe`` absorbed.

    Without fixed effects a constant is added (named ``const``) unless
    ``add_constant`` is False.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    groups = [group_codes(g) for g in fe]
    if add_constant is None:
        add_constant = not groups
    if add_constant:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const"] + names
    if groups:
        both = demean(np.column_stack([y, X]), groups, w, tol=tol, max_iter=max_iter)[0]
        yd, Xd = both[:, 0], both[:, 1:]
        nested = False
        if clusters is not None:
            cl = group_codes(clusters)
            nested = any(_nested(g, cl) for g in groups)
        res = wls(yd, Xd, w, names, se=se, clusters=clusters,
                  extra_dof=absorbed_dof(groups, w), fe_nested_in_clusters=nested, y_total=y)
        res.within_r2 = float(1 - np.dot(w, res.resid**2) / np.dot(w, yd**2)) if np.dot(w, yd**2) > 0 else np.nan
        return res
    return wls(y, X, w, names, se=se, clusters=clusters)


def _nested(fe_codes, cluster_codes) -> bool:
    """True when every fixed-effect level sits inside a single cluster."""
    df = pd.DataFrame({"f": fe_codes, "c": cluster_codes})
    return bool((df.groupby("f")["c"].nunique() == 1).all())
