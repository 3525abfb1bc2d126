"""Per-year skill prices: flat-spot within-worker changes and a hedonic alternative."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import SeriesGapError, SkillcastError
from .fe import group_codes, ols_fe
from .panel import CovariateMatrix, Panel
from .stats import weighted_median

DEFAULT_WINDOW = (22.0, 34.0)
ALT_WINDOW = (24.0, 36.0)


@dataclass
class SkillPriceSeries:
    years: np.ndarray
    log_price: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_obs: np.ndarray
    se: np.ndarray | None = None
    method: str = "flatspot"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=np.int64)
        self.log_price = np.asarray(self.log_price, dtype=float)
        if len(self.log_price) and self.log_price[0] != 0.0:
            raise ValueError("log price must be normalised to 0 in the first year")

    @property
    def price(self) -> np.ndarray:
        return np.exp(self.log_price)

    @classmethod
    def from_log_price(cls, years, log_price, method="truth"):
        lp = np.asarray(log_price, dtype=float)
        lp = lp - lp[0]
        z = np.zeros(len(lp), dtype=np.int64)
        return cls(np.asarray(years), lp, lp.copy(), lp.copy(), z, np.zeros(len(lp)), method)

    def log_price_at(self, years) -> np.ndarray:
        years = np.asarray(years)
        pos = np.searchsorted(self.years, years)
        pos = np.minimum(pos, len(self.years) - 1)
        bad = self.years[pos] != years
        if np.any(bad):
            raise SeriesGapError("price series does not cover all panel years", sorted(set(years[bad].tolist())))
        return self.log_price[pos]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "year": self.years,
                "log_price": self.log_price,
                "price": self.price,
                "ci_low": np.exp(self.ci_low),
                "ci_high": np.exp(self.ci_high),
                "se": self.se if self.se is not None else np.nan,
                "n_obs": self.n_obs,
            }
        )

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def read_csv(cls, path):
        df = pd.read_csv(path, float_precision="round_trip")
        se = df["se"].to_numpy() if "se" in df else None
        return cls(
            df["year"].to_numpy(),
            df["log_price"].to_numpy(),
            np.log(df["ci_low"].to_numpy()),
            np.log(df["ci_high"].to_numpy()),
            df["n_obs"].to_numpy(),
            se,
            method="file",
        )


def flatspot_pairs(panel: Panel, window=DEFAULT_WINDOW, weight_col="analysis_weight", allow_gaps=False):
    """Within-worker wage changes whose experience midpoint lies in ``window``.

    Returns a frame with one row per (pair, transition year): the transition
    start year ``t``, change per year ``dlw``, pair weight, worker code and
    the later-year province. A gap of ``g`` years spreads ``dlw / g`` over the
    ``g`` transitions it spans (only when ``allow_gaps``).
    """
    df = panel.frame
    codes = panel.worker_codes
    same = codes[1:] == codes[:-1]
    year = df["year"].to_numpy()
    gap = year[1:] - year[:-1]
    e = df["experience"].to_numpy()
    mid = 0.5 * (e[1:] + e[:-1])
    ok = same & (mid >= window[0]) & (mid <= window[1])
    ok &= (gap == 1) if not allow_gaps else (gap >= 1)
    idx = np.flatnonzero(ok)
    lw = df["log_wage"].to_numpy()
    w = df[weight_col].to_numpy()
    g = gap[idx]
    dlw = (lw[idx + 1] - lw[idx]) / g
    pw = 0.5 * (w[idx] + w[idx + 1])
    rep = np.repeat(np.arange(len(idx)), g)
    step = np.arange(len(rep)) - np.repeat(np.cumsum(g) - g, g)
    prov = df["province"].to_numpy()
    out = pd.DataFrame(
        {
            "t": year[idx][rep] + step,
            "dlw": dlw[rep],
            "weight": pw[rep],
            "worker": codes[idx][rep],
            "province": prov[idx + 1][rep],
        }
    )
    return out[out["weight"] > 0].reset_index(drop=True)


def _province_adjust(d, w, prov_codes, n_prov):
    """Remove province means from changes and restore the overall mean."""
    sw = np.bincount(prov_codes, weights=w, minlength=n_prov)
    sd = np.bincount(prov_codes, weights=w * d, minlength=n_prov)
    pm = np.divide(sd, sw, out=np.zeros(n_prov), where=sw > 0)
    return d - pm[prov_codes] + np.dot(w, d) / w.sum()


def _step(d, w, prov, n_prov, statistic, province):
    if w.sum() <= 0:
        return np.nan
    adj = _province_adjust(d, w, prov, n_prov) if province else d
    if statistic == "median":
        return weighted_median(adj, w)
    return float(np.dot(w, adj) / w.sum())


def flat_spot_price(
    panel: Panel,
    window=DEFAULT_WINDOW,
    statistic="median",
    weight_col="analysis_weight",
    n_boot=200,
    seed=0,
    allow_gaps=False,
    province=True,
    level=0.95,
    years=None,
) -> SkillPriceSeries:
    """Cumulate per-transition median (or mean) within-worker wage changes of
    workers in the flat spot of the experience profile.

    Percentile bands come from a worker-clustered bootstrap of the whole
    cumulated path, so they widen with distance from the base year.
    """
    if statistic not in ("median", "mean"):
        raise ValueError("statistic must be 'median' or 'mean'")
    all_years = np.unique(panel.frame["year"].to_numpy()) if years is None else np.asarray(years)
    if len(all_years) == 1:
        z = np.zeros(1)
        return SkillPriceSeries(all_years, z, z, z, np.zeros(1, dtype=np.int64), z.copy(), "flatspot")
    pairs = flatspot_pairs(panel, window, weight_col, allow_gaps)
    trans = all_years[:-1]
    missing = sorted(set(trans.tolist()) - set(pairs["t"].unique().tolist()))
    if missing:
        raise SeriesGapError(f"no flat-spot pairs for transitions starting in {missing}", missing)

    pairs = pairs.sort_values(["t", "worker"], kind="mergesort").reset_index(drop=True)
    t = pairs["t"].to_numpy()
    d = pairs["dlw"].to_numpy()
    w = pairs["weight"].to_numpy()
    wk = pairs["worker"].to_numpy()
    prov = group_codes(pairs["province"].to_numpy())
    n_prov = int(prov.max()) + 1
    bounds = np.searchsorted(t, np.r_[trans, trans[-1] + 1])

    steps = np.empty(len(trans))
    counts = np.empty(len(trans), dtype=np.int64)
    for k in range(len(trans)):
        s = slice(bounds[k], bounds[k + 1])
        steps[k] = _step(d[s], w[s], prov[s], n_prov, statistic, province)
        counts[k] = bounds[k + 1] - bounds[k]
    lp = np.r_[0.0, np.cumsum(steps)]

    se = np.zeros(len(all_years))
    lo = hi = lp.copy()
    if n_boot:
        n_workers = panel.n_workers
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        boot = np.empty((n_boot, len(trans)))
        for b in range(n_boot):
            mult = np.bincount(rng.integers(0, n_workers, size=n_workers), minlength=n_workers)
            wb = w * mult[wk]
            for k in range(len(trans)):
                s = slice(bounds[k], bounds[k + 1])
                boot[b, k] = _step(d[s], wb[s], prov[s], n_prov, statistic, province)
        # a resample can miss every pair of a thin transition; fall back to the point step
        boot = np.where(np.isnan(boot), steps[None, :], boot)
        paths = np.column_stack([np.zeros(n_boot), np.cumsum(boot, axis=1)])
        se = paths.std(axis=0, ddof=1)
        a = (1 - level) / 2
        lo = np.quantile(paths, a, axis=0)
        hi = np.quantile(paths, 1 - a, axis=0)
        lo[0] = hi[0] = 0.0
    n_obs = np.r_[0, counts]
    return SkillPriceSeries(
        all_years,
        lp,
        lo,
        hi,
        n_obs,
        se,
        "flatspot",
        {"window": list(window), "statistic": statistic, "n_boot": n_boot, "seed": seed},
    )


def hedonic_price(
    panel: Panel,
    covariates: CovariateMatrix,
    base_year=None,
    expand=False,
    weight_col="analysis_weight",
) -> SkillPriceSeries:
    """Hedonic price path from a single base-year cross-section.

    Log wages in ``base_year`` are regressed on the covariates (optionally the
    squares-and-interactions expansion), experience, experience squared and
    province effects. The residual ``w - f(x) - h(e)`` of every worker-year is
    then regressed on year dummies with province effects; the year
    coefficients relative to the base year form the log price.
    """
    from .learners.linear import basis_expand

    df = panel.frame
    years = np.unique(df["year"].to_numpy())
    base_year = int(years[0]) if base_year is None else int(base_year)
    if base_year not in years:
        raise SkillcastError(f"base year {base_year} not present in the panel")
    if len(years) == 1:
        z = np.zeros(1)
        return SkillPriceSeries(years, z, z, z, np.array([len(df)]), z.copy(), "hedonic")

    rows = covariates.rows(df["worker_id"].to_numpy())
    Xc = covariates.X[rows]
    names = list(covariates.names)
    if expand:
        Xc, names = basis_expand(Xc, names, covariates.kinds)
    e = df["experience"].to_numpy()
    X = np.column_stack([Xc, e, e**2])
    names = names + ["experience", "experience_sq"]
    w = df[weight_col].to_numpy()
    y = df["log_wage"].to_numpy()
    base = (df["year"].to_numpy() == base_year) & (w > 0)
    prov = df["province"].to_numpy()
    fit = ols_fe(y[base], X[base], fe=[prov[base]], w=w[base], names=names, se="iid")
    coef = pd.Series(0.0, index=names)
    coef[fit.names] = fit.coef
    resid = y - X @ coef.to_numpy()

    pos = w > 0
    yr = df["year"].to_numpy()[pos]
    others = [y_ for y_ in years if y_ != base_year]
    D = np.column_stack([(yr == y_).astype(float) for y_ in others])
    dnames = [str(y_) for y_ in others]
    step = ols_fe(resid[pos], D, fe=[prov[pos]], w=w[pos], names=dnames, se="hc1")
    est = dict(zip(step.names, step.coef))
    ses = dict(zip(step.names, step.se))
    lp = np.array([0.0 if y_ == base_year else est.get(str(y_), np.nan) for y_ in years])
    se = np.array([0.0 if y_ == base_year else ses.get(str(y_), np.nan) for y_ in years])
    lp = lp - lp[0]  # re-reference to the first year when the base year is later
    counts = np.array([(yr == y_).sum() for y_ in years])
    return SkillPriceSeries(years, lp, lp - 1.96 * se, lp + 1.96 * se, counts, se, "hedonic",
                            {"base_year": base_year, "expand": expand})
