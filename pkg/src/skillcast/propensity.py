"""Government-membership logit and ATT reweighting of private-sector workers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from .errors import ConvergenceError, RankDeficiencyError, SeparationError, SkillcastError
from .fe import independent_columns
from .panel import Panel

log = logging.getLogger(__name__)

GRAD_TOL = 1e-10
MAX_ITER = 100
P_CLIP = 1e-6


@dataclass
class LogitFit:
    names: list
    coef: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    grad_norm: float
    cov: np.ndarray | None = None

    @property
    def coefficients(self) -> pd.Series:
        return pd.Series(self.coef, index=self.names)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return expit(self.coef[0] + X @ self.coef[1:])


def _check_separation(X, y, w, names):
    """Name a binary feature whose active rows all share one label."""
    pos = w > 0
    for j, name in enumerate(names):
        col = X[pos, j]
        vals = np.unique(col)
        if len(vals) == 2 and set(vals) <= {0.0, 1.0}:
            for v in (0.0, 1.0):
                lab = y[pos][col == v]
                if len(np.unique(lab)) == 1:
                    raise SeparationError(
                        f"feature {name!r} perfectly separates the labels (all rows with {name}={v:g} "
                        f"have label {int(lab[0])})",
                        feature=name,
                    )


def fit_logit(X, y, w=None, names=None, tol=GRAD_TOL, max_iter=MAX_ITER) -> LogitFit:
    """Weighted logistic regression by iteratively reweighted least squares.

    An intercept is prepended. Convergence is declared when the max-norm of the
    gradient of the weight-normalised log-likelihood falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    names = [f"x{j}" for j in range(X.shape[1])] if names is None else list(names)
    pos = w > 0
    if len(np.unique(y[pos])) < 2:
        raise SkillcastError("logit needs both label values with positive weight")

    Z = np.column_stack([np.ones(len(y)), X])
    all_names = ["intercept"] + names
    keep = independent_columns(Z, w)
    if len(keep) < Z.shape[1]:
        dropped = [all_names[j] for j in range(Z.shape[1]) if j not in keep]
        raise RankDeficiencyError(f"rank-deficient logit design; dependent columns: {dropped}", dropped)
    _check_separation(X, y, w, names)

    sw = w.sum()
    pbar = np.dot(w, y) / sw
    beta = np.zeros(Z.shape[1])
    beta[0] = np.log(pbar / (1 - pbar))
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        eta = Z @ beta
        p = expit(eta)
        grad = Z.T @ (w * (y - p)) / sw
        grad_norm = float(np.abs(grad).max())
        if grad_norm < tol:
            break
        H = (Z.T * (w * p * (1 - p))) @ Z / sw
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        beta = beta + step
        if np.abs(beta).max() > 50:
            j = int(np.argmax(np.abs(beta[1:]))) + 1
            raise SeparationError(
                f"logit coefficients diverge (quasi-separation), largest on {all_names[j]!r}",
                feature=all_names[j],
            )
    else:
        eta = Z @ beta
        p = expit(eta)
        grad_norm = float(np.abs(Z.T @ (w * (y - p)) / sw).max())
        if grad_norm >= tol:
            j = int(np.argmax(np.abs(beta[1:]))) + 1
            raise ConvergenceError(
                f"logit did not converge in {max_iter} iterations (gradient {grad_norm:.3g}); "
                f"largest coefficient on {all_names[j]!r}"
            )
    eta = Z @ beta
    ll = float(np.dot(w, y * log_expit(eta) + (1 - y) * log_expit(-eta)))
    p = expit(eta)
    H = (Z.T * (w * p * (1 - p))) @ Z
    return LogitFit(all_names, beta, True, it, ll, grad_norm, cov=np.linalg.inv(H))


def att_weights(p, treated, clip=P_CLIP, return_clipped=False):
    """Design weights: 1 for treated units and ``p / (1 - p)`` for controls.

    Propensities above ``1 - clip`` are clipped; the number clipped is
    returned as a second value when ``return_clipped`` is set.
    """
    p = np.asarray(p, dtype=float)
    treated = np.asarray(treated, dtype=bool)
    if np.any((p <= 0) | (p > 1)):
        raise ValueError("propensities must lie in (0, 1)")
    hi = 1.0 - clip
    clipped = (~treated) & (p > hi)
    pc = np.minimum(p, hi)
    out = np.where(treated, 1.0, pc / (1.0 - pc))
    n_clip = int(clipped.sum())
    if n_clip:
        log.warning("clipped %d propensities at %.7f", n_clip, hi)
    if out.ndim == 0:
        out = float(out)
    return (out, n_clip) if return_clipped else out


def propensity_design(frame: pd.DataFrame):
    """Logit features: occupation and sector dummies (first level dropped), age, male."""
    occ = pd.get_dummies(frame["occupation"], prefix="occ", drop_first=True, dtype=float)
    sec = pd.get_dummies(frame["sector"], prefix="sec", drop_first=True, dtype=float)
    age = (frame["year"] - frame["birth_year"]).astype(float).rename("age")
    male = frame["male"].astype(float).rename("male")
    X = pd.concat([occ, sec, age, male], axis=1)
    return X.to_numpy(), list(X.columns)


@dataclass
class PropensityResult:
    panel: Panel
    fit: LogitFit
    scores: pd.DataFrame  # worker_id, year, p, analysis_weight
    n_clipped: int


def propensity_weights(panel: Panel, weighted: bool = True, clip: float = P_CLIP) -> PropensityResult:
    """Fit the government logit on government and private worker-years and set
    ``analysis_weight = survey_weight * att_weight``.

    Workers in the ``other`` group (self-employed, casual, unpaid) are filtered
    out before fitting and receive zero analysis weight.
    """
    df = panel.frame
    keep = df["group"].isin(["government", "private"]).to_numpy()
    sub = df.loc[keep]
    X, names = propensity_design(sub)
    y = (sub["group"] == "government").to_numpy(dtype=float)
    w = sub["survey_weight"].to_numpy() if weighted else None
    fit = fit_logit(X, y, w, names)
    p = fit.predict(X)
    aw, n_clip = att_weights(p, y == 1, clip=clip, return_clipped=True)

    p_all = np.full(len(df), np.nan)
    p_all[keep] = p
    weight = np.zeros(len(df))
    weight[keep] = sub["survey_weight"].to_numpy() * aw
    out = panel.with_columns(analysis_weight=weight)
    scores = pd.DataFrame(
        {"worker_id": df["worker_id"], "year": df["year"], "p": p_all, "analysis_weight": weight}
    )
    log.info("propensity logit: %d iterations, %d clipped", fit.iterations, n_clip)
    return PropensityResult(out, fit, scores, n_clip)


def comparable_sample(panel: Panel) -> Panel:
    """Comparable private-sector worker-years with positive analysis weight."""
    df = panel.frame
    return panel.subset((df["group"] == "private") & (df["analysis_weight"] > 0))
