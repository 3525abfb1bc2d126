"""Quadratic experience profile with worker and province effects, and the
worker-mean residual skill signal."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import IdentificationError
from .fe import group_codes, ols_fe
from .panel import CovariateMatrix, Panel
from .price import SkillPriceSeries

log = logging.getLogger(__name__)


@dataclass
class ProfileFit:
    delta0: float
    delta1: float
    cluster_se: tuple
    n_obs: int
    n_workers: int
    within_r2: float
    cov: np.ndarray = field(repr=False, default=None)
    method: str = "within"

    @property
    def peak(self) -> float:
        return -self.delta0 / (2 * self.delta1) if self.delta1 != 0 else np.inf

    def h(self, e):
        e = np.asarray(e, dtype=float)
        return self.delta0 * e + self.delta1 * e**2

    def growth(self, e):
        """Implied log human-capital growth per year at experience ``e``."""
        return self.delta0 + 2 * self.delta1 * np.asarray(e, dtype=float)

    def to_dict(self) -> dict:
        return {
            "delta0": self.delta0,
            "delta1": self.delta1,
            "se_delta0": self.cluster_se[0],
            "se_delta1": self.cluster_se[1],
            "n_obs": self.n_obs,
            "n_workers": self.n_workers,
            "within_r2": self.within_r2,
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, d) -> "ProfileFit":
        return cls(d["delta0"], d["delta1"], (d.get("se_delta0", np.nan), d.get("se_delta1", np.nan)),
                   d.get("n_obs", 0), d.get("n_workers", 0), d.get("within_r2", np.nan), None,
                   d.get("method", "within"))


def price_adjusted(panel: Panel, price: SkillPriceSeries) -> np.ndarray:
    df = panel.frame
    return df["log_wage"].to_numpy() - price.log_price_at(df["year"].to_numpy())


def fit_within_quadratic(
    panel: Panel,
    price: SkillPriceSeries,
    weight_col="analysis_weight",
    tol=1e-10,
    max_iter=1000,
) -> ProfileFit:
    """Weighted within-worker regression of price-adjusted log wages on
    experience and its square, absorbing worker and province effects, with
    CR1 standard errors clustered by worker."""
    df = panel.frame
    w = df[weight_col].to_numpy()
    pos = w > 0
    wid = df["worker_id"].to_numpy()[pos]
    counts = pd.Series(wid).value_counts()
    if (counts >= 2).sum() < 2:
        raise IdentificationError("need at least two workers observed in two or more years")
    y = price_adjusted(panel, price)[pos]
    e = df["experience"].to_numpy()[pos]
    fe = [wid, df["province"].to_numpy()[pos]]
    res = ols_fe(y, np.column_stack([e, e**2]), fe=fe, w=w[pos], names=["experience", "experience_sq"],
                 se="cluster", clusters=wid, tol=tol, max_iter=max_iter)
    if res.dropped:
        raise IdentificationError(f"no within-worker variation in {res.dropped}")
    b0, s0 = res["experience"]
    b1, s1 = res["experience_sq"]
    return ProfileFit(float(b0), float(b1), (s0, s1), res.nobs, len(counts), res.within_r2, res.cov)


@dataclass
class SkillSignals:
    """Per-worker skill signals ``zhat`` (province-residualised worker means)."""

    frame: pd.DataFrame  # worker_id, zhat, zbar, n_years, province, weight
    n_excluded: int = 0

    @property
    def zhat(self) -> pd.Series:
        return self.frame.set_index("worker_id")["zhat"]

    @property
    def weights(self) -> pd.Series:
        return self.frame.set_index("worker_id")["weight"]

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def read_csv(cls, path):
        df = pd.read_csv(path, dtype={"worker_id": str, "province": str}, float_precision="round_trip")
        if "weight" not in df:
            df["weight"] = 1.0
        return cls(df)


def residualize_on_groups(values, groups, w=None):
    """Subtract weighted group means."""
    values = np.asarray(values, dtype=float)
    codes = group_codes(groups)
    w = np.ones(len(values)) if w is None else np.asarray(w, dtype=float)
    sw = np.bincount(codes, weights=w)
    sv = np.bincount(codes, weights=w * values)
    means = np.divide(sv, sw, out=np.zeros_like(sv), where=sw > 0)
    return values - means[codes]


def worker_mean_residual(
    panel: Panel,
    price: SkillPriceSeries,
    profile,
    weight_col="analysis_weight",
    weighted_province=True,
    offset=None,
) -> SkillSignals:
    """Worker-level average of ``w - p_t - h(e)``, residualised on province.

    ``profile`` is anything with an ``h`` method. Years with zero analysis
    weight are dropped; workers left with no years are excluded and counted.
    ``offset`` optionally subtracts an extra observation-level term (used by
    the selection correction).
    """
    df = panel.frame
    w = df[weight_col].to_numpy()
    pos = w > 0
    r = price_adjusted(panel, price) - profile.h(df["experience"].to_numpy())
    if offset is not None:
        r = r - np.asarray(offset, dtype=float)
    codes = panel.worker_codes
    n_all = panel.n_workers
    cnt = np.bincount(codes[pos], minlength=n_all)
    sr = np.bincount(codes[pos], weights=r[pos], minlength=n_all)
    sw = np.bincount(codes[pos], weights=w[pos], minlength=n_all)
    keep = cnt > 0
    zbar = sr[keep] / cnt[keep]
    wt = sw[keep] / cnt[keep]
    ids = panel.worker_ids[keep]
    # province of the worker's last positive-weight year
    last = pd.Series(np.flatnonzero(pos)).groupby(codes[pos]).max().to_numpy()
    prov = df["province"].to_numpy()[last]
    zhat = residualize_on_groups(zbar, prov, wt if weighted_province else None)
    out = pd.DataFrame(
        {"worker_id": ids, "zhat": zhat, "zbar": zbar, "n_years": cnt[keep], "province": prov, "weight": wt}
    )
    n_ex = int((~keep).sum())
    if n_ex:
        log.info("excluded %d workers with zero analysis weight", n_ex)
    return SkillSignals(out, n_ex)


def robinson_profile(
    panel: Panel,
    price: SkillPriceSeries,
    covariates: CovariateMatrix,
    k=5,
    seed=0,
    learner="ols",
    weight_col="analysis_weight",
) -> ProfileFit:
    """Joint estimate of the quadratic profile: partial the covariates out of
    price-adjusted wages, experience and experience squared with cross-fitted
    conditional means, then regress residual on residuals (CR1 by worker)."""
    from .learners.crossfit import crossfit_residuals

    df = panel.frame
    w = df[weight_col].to_numpy()
    pos = w > 0
    sub = panel.subset(pos)
    e = sub.frame["experience"].to_numpy()
    Y = np.column_stack([price_adjusted(sub, price), e, e**2])
    R = crossfit_residuals(sub, covariates, Y, k=k, seed=seed, learner=learner, weight_col=weight_col)
    wid = sub.frame["worker_id"].to_numpy()
    res = ols_fe(R[:, 0], R[:, 1:], w=sub.frame[weight_col].to_numpy(), names=["experience", "experience_sq"],
                 se="cluster", clusters=wid, add_constant=True)
    b0, s0 = res["experience"]
    b1, s1 = res["experience_sq"]
    return ProfileFit(float(b0), float(b1), (s0, s1), res.nobs, sub.n_workers, res.r2, res.cov, "robinson")
