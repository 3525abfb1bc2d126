"""Selection on unobservables: probit first stage, inverse Mills ratio,
cross-fitted partialling with Mundlak means, and the exclusion test."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr, log_ndtr
from scipy.stats import chi2, norm

from .errors import ConvergenceError, IdentificationError, RankDeficiencyError, SeparationError
from .fe import independent_columns, ols_fe
from .panel import CovariateMatrix, Panel
from .price import SkillPriceSeries
from .profile import ProfileFit, price_adjusted, worker_mean_residual
from .propensity import _check_separation

log = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2 * np.pi)
_CF_TERMS = 60


def inverse_mills(x):
    """``phi(x) / Phi(x)``.

    Below -8 the ratio comes from the continued fraction
    ``Phi(x)/phi(x) = 1/(t + 1/(t + 2/(t + 3/(t + ...))))`` with ``t = -x``,
    which avoids dividing two underflowing tails.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    tail = x < -8
    xm = x[~tail]
    out[~tail] = np.exp(-0.5 * xm**2 - log_ndtr(xm)) / _SQRT_2PI
    if tail.any():
        t = -x[tail]
        cf = t.copy()
        for k in range(_CF_TERMS, 0, -1):
            cf = t + k / cf
        out[tail] = cf
    return out if out.ndim else float(out)


@dataclass
class ProbitFit:
    names: list
    coef: np.ndarray
    cov: np.ndarray  # HC1 sandwich
    iterations: int
    log_likelihood: float
    instrument: str | None = None

    @property
    def se(self):
        return np.sqrt(np.diag(self.cov))

    @property
    def coefficients(self) -> pd.Series:
        return pd.Series(self.coef, index=self.names)

    def wald(self, name):
        i = self.names.index(name)
        stat = float(self.coef[i] ** 2 / self.cov[i, i])
        return stat, float(chi2.sf(stat, 1))

    @property
    def wald_instrument(self):
        return self.wald(self.instrument)[0] if self.instrument else np.nan

    @property
    def p_value(self):
        return self.wald(self.instrument)[1] if self.instrument else np.nan

    def index(self, Z):
        return np.asarray(Z, dtype=float) @ self.coef


def fit_probit(Z, s, w=None, names=None, instrument=None, tol=1e-10, max_iter=100) -> ProbitFit:
    """Weighted probit by Newton-Raphson on the full design ``Z`` (include
    the intercept yourself). Reports an HC1 sandwich covariance."""
    Z = np.asarray(Z, dtype=float)
    s = np.asarray(s, dtype=float)
    w = np.ones(len(s)) if w is None else np.asarray(w, dtype=float)
    names = [f"x{j}" for j in range(Z.shape[1])] if names is None else list(names)
    if len(np.unique(s[w > 0])) < 2:
        raise IdentificationError("probit needs both outcomes")
    keep = independent_columns(Z, w)
    if len(keep) < Z.shape[1]:
        dropped = [names[j] for j in range(Z.shape[1]) if j not in keep]
        raise RankDeficiencyError(f"rank-deficient probit design; dependent columns: {dropped}", dropped)
    nonconst = [j for j in range(Z.shape[1]) if np.ptp(Z[:, j]) > 0]
    _check_separation(Z[:, nonconst], s, w, [names[j] for j in nonconst])
    if instrument is not None and np.ptp(Z[:, names.index(instrument)]) == 0:
        raise IdentificationError(f"instrument {instrument!r} does not vary")

    sw = w.sum()
    q = 2 * s - 1
    beta = np.zeros(Z.shape[1])
    for it in range(1, max_iter + 1):
        xb = Z @ beta
        lam = inverse_mills(q * xb)  # d log Phi(q xb) / d(q xb)
        g_i = q * lam
        grad = Z.T @ (w * g_i) / sw
        if np.abs(grad).max() < tol:
            break
        h_i = lam * (q * xb + lam)  # minus second derivative, > 0
        H = (Z.T * (w * h_i)) @ Z / sw
        step = np.linalg.solve(H, grad)
        # halve until the likelihood does not fall
        ll0 = np.dot(w, log_ndtr(q * xb))
        t = 1.0
        while t > 1e-8 and np.dot(w, log_ndtr(q * (Z @ (beta + t * step)))) < ll0 - 1e-12 * abs(ll0):
            t /= 2
        beta = beta + t * step
        if np.abs(beta).max() > 40:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(f"probit coefficients diverge, largest on {names[j]!r}", feature=names[j])
    else:
        raise ConvergenceError(f"probit did not converge in {max_iter} iterations")
    xb = Z @ beta
    lam = inverse_mills(q * xb)
    h_i = lam * (q * xb + lam)
    bread = np.linalg.inv((Z.T * (w * h_i)) @ Z)
    sc = Z * (w * q * lam)[:, None]
    n, k = Z.shape
    cov = bread @ (sc.T @ sc) @ bread * (n / (n - k))
    ll = float(np.dot(w, log_ndtr(q * xb)))
    return ProbitFit(names, beta, cov, it, ll, instrument)


def mundlak_means(panel: Panel):
    """Within-worker means of experience and experience squared."""
    df = panel.frame
    codes = panel.worker_codes
    e = df["experience"].to_numpy()
    cnt = np.bincount(codes)
    m1 = np.bincount(codes, weights=e) / cnt
    m2 = np.bincount(codes, weights=e**2) / cnt
    return m1[codes], m2[codes]


def selection_design(panel: Panel, covariates: CovariateMatrix, instrument="parent_private", province=False):
    """Probit design: intercept, skill covariates, instrument, experience and
    its square, their Mundlak means, year dummies (first year dropped) and
    optionally province dummies."""
    df = panel.frame
    rows = covariates.rows(df["worker_id"].to_numpy())
    skill = covariates.drop([instrument])
    Xs = skill.X[rows]
    r = covariates.column(instrument)[rows]
    e = df["experience"].to_numpy()
    m1, m2 = mundlak_means(panel)
    years = np.sort(df["year"].unique())
    D = np.column_stack([(df["year"].to_numpy() == y).astype(float) for y in years[1:]]) if len(years) > 1 else np.zeros((len(df), 0))
    parts = [np.ones((len(df), 1)), Xs, r[:, None], np.column_stack([e, e**2, m1, m2]), D]
    names = ["intercept", *skill.names, instrument, "experience", "experience_sq", "mean_experience",
             "mean_experience_sq", *[f"year_{y}" for y in years[1:]]]
    if province:
        P = pd.get_dummies(df["province"], drop_first=True, dtype=float)
        parts.append(P.to_numpy())
        names += [f"province_{c}" for c in P.columns]
    Z = np.column_stack(parts)
    keep = [j for j in range(Z.shape[1]) if j == 0 or np.ptp(Z[:, j]) > 0]
    return Z[:, keep], [names[j] for j in keep]


@dataclass
class HeckmanOutcome:
    gamma_imr: float
    gamma_se: float
    delta0: float
    delta1: float
    outcome: object  # OLSResult of the partialled regression
    signals: object  # corrected SkillSignals
    exclusion_wald: float = np.nan
    exclusion_p: float = np.nan
    probit: ProbitFit | None = None
    imr: np.ndarray | None = field(default=None, repr=False)

    @property
    def profile(self) -> ProfileFit:
        (s0, s1) = (self.outcome["experience"][1], self.outcome["experience_sq"][1])
        return ProfileFit(self.delta0, self.delta1, (s0, s1), self.outcome.nobs,
                          len(self.signals.frame), self.outcome.r2, None, "heckman")

    def summary(self) -> dict:
        return {"gamma_imr": self.gamma_imr, "gamma_se": self.gamma_se, "delta0": self.delta0,
                "delta1": self.delta1, "exclusion_wald": self.exclusion_wald, "exclusion_p": self.exclusion_p,
                "probit_wald_instrument": self.probit.wald_instrument if self.probit else np.nan,
                "probit_p_instrument": self.probit.p_value if self.probit else np.nan,
                "n_obs": int(self.outcome.nobs)}


def robinson_corrected_fit(panel: Panel, covariates: CovariateMatrix, price: SkillPriceSeries,
                           instrument="parent_private", learner="gbm", k=5, seed=0, weight_col="analysis_weight",
                           selected_group="private", probit_weighted=True, se="cluster", exclusion=True,
                           province_in_probit=False, probit=None):
    """Two-step correction on the selected (comparable private) sample.

    The probit is fit on all government and selected worker-years; each
    selected worker's mean inverse Mills ratio then enters a Robinson
    regression in which the covariates are partialled out of the
    price-adjusted wage, experience, experience squared, the mean IMR and the
    Mundlak means by cross-fitted conditional means. Standard errors are
    clustered by worker unless ``se='hc1'``.
    """
    from .learners.crossfit import crossfit_residuals

    df = panel.frame
    inc = df["group"].isin(["government", selected_group]).to_numpy()
    base = panel.subset(inc)
    bdf = base.frame
    s = (bdf["group"] == selected_group).to_numpy(dtype=float)
    Z, names = selection_design(base, covariates, instrument, province_in_probit)
    if probit is None:
        pw = bdf["survey_weight"].to_numpy() if probit_weighted else None
        probit = fit_probit(Z, s, pw, names, instrument=instrument)
    imr_all = inverse_mills(probit.index(Z))

    sel = (s == 1) & (bdf[weight_col].to_numpy() > 0)
    sp = base.subset(sel)
    sdf = sp.frame
    imr = imr_all[sel]
    codes = sp.worker_codes
    cnt = np.bincount(codes)
    imr_bar = (np.bincount(codes, weights=imr) / cnt)[codes]
    if np.ptp(imr_bar) < 1e-12:
        raise IdentificationError("inverse Mills ratio does not vary; gamma is not identified")
    e = sdf["experience"].to_numpy()
    m1, m2 = mundlak_means(sp)
    r = covariates.column(instrument)[covariates.rows(sdf["worker_id"].to_numpy())]
    Y = np.column_stack([price_adjusted(sp, price), e, e**2, imr_bar, m1, m2, r])
    R = crossfit_residuals(sp, covariates, Y, k=k, seed=seed, learner=learner, weight_col=weight_col)
    w = sdf[weight_col].to_numpy()
    wid = sdf["worker_id"].to_numpy()
    xnames = ["experience", "experience_sq", "imr", "mean_experience", "mean_experience_sq"]
    kw = dict(w=w, se=se, clusters=wid if se == "cluster" else None, add_constant=True)
    res = ols_fe(R[:, 0], R[:, 1:6], names=xnames, **kw)
    if "imr" in res.dropped:
        raise IdentificationError("inverse Mills ratio is collinear after partialling")
    g, gse = res["imr"]
    d0, d1 = res["experience"][0], res["experience_sq"][0]

    excl_w = excl_p = np.nan
    if exclusion:
        ex = ols_fe(R[:, 0], R[:, 1:7], names=xnames + [instrument], **kw)
        if instrument in ex.names:
            excl_w, excl_p = ex.wald(instrument)

    prof = ProfileFit(float(d0), float(d1), (res["experience"][1], res["experience_sq"][1]), res.nobs,
                      sp.n_workers, res.r2, None, "heckman")
    signals = worker_mean_residual(sp, price, prof, weight_col=weight_col, offset=g * imr_bar)
    return HeckmanOutcome(float(g), float(gse), float(d0), float(d1), res, signals, excl_w, excl_p, probit, imr)


def exclusion_test(outcome: HeckmanOutcome):
    """Robust Wald statistic and p-value of the instrument in the partialled
    outcome equation (computed inside :func:`robinson_corrected_fit`)."""
    return outcome.exclusion_wald, outcome.exclusion_p


DEFAULT_RELEARN_GRID = {"bag": [0.8], "depth": [4], "n_trees": [200], "shrinkage": [0.05]}


def relearn_skills(signals, covariates: CovariateMatrix, family="gbm", grid=None, k=10, seed=0, threads=1):
    """Re-run the learner stage on (corrected) skill signals and predict
    skills for every worker in ``covariates``. Returns ``(predictions, model)``."""
    from .learners.cv import train_family, training_data
    from .learners.folds import make_folds

    grid = DEFAULT_RELEARN_GRID if grid is None and family == "gbm" else grid
    data = training_data(signals, covariates)
    folds = make_folds(data.worker_ids, k, seed)
    model = train_family(family, data, folds, grid=grid, seed=seed, threads=threads)
    return model.predict(covariates), model


def rank_agreement(a: pd.Series, b: pd.Series) -> float:
    """Spearman correlation of two skill vectors on their common workers."""
    from scipy.stats import spearmanr

    j = a.index.intersection(b.index)
    return float(spearmanr(a.loc[j], b.loc[j]).statistic)
