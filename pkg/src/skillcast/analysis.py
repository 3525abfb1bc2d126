"""Downstream regressions on predicted skills: wage informativeness, the
government wage premium and gender gap, relative-skill series, cohort
hiring regressions and stability comparisons."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, IdentificationError, SchemaError
from .fe import OLSResult, ols_fe
from .panel import Panel
from .stats import weighted_corr, weighted_mean, weighted_quantile, weighted_spearman, weighted_var

log = logging.getLogger(__name__)

AGE_RANGE = (25, 58)
N_COHORT_BINS = 15
COHORT_MIN_OBS = (0, 10, 25, 50)
JOBFIX_REFERENCE = ("Teacher", "Social services")


# ---------------------------------------------------------------------------
# regression engine


@dataclass
class RegressionSpec:
    """One table column.

    ``regressors`` are column names; ``"a:b"`` is the product of two columns.
    ``fe`` lists categorical columns absorbed as fixed effects.
    """

    outcome: str
    regressors: list
    fe: list = field(default_factory=list)
    weight: str | None = None
    se: str = "hc1"  # iid | hc1 | cluster
    cluster: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.se not in ("iid", "hc1", "cluster"):
            raise ConfigError(f"unknown se type {self.se!r}")
        if self.se == "cluster" and not self.cluster:
            raise ConfigError("cluster standard errors need a cluster column")

    def columns(self) -> list:
        cols = {self.outcome, *self.fe}
        for r in self.regressors:
            cols.update(r.split(":"))
        if self.weight:
            cols.add(self.weight)
        if self.cluster:
            cols.add(self.cluster)
        return sorted(cols)


def _term(data: pd.DataFrame, term: str) -> np.ndarray:
    out = np.ones(len(data))
    for part in term.split(":"):
        out = out * data[part].to_numpy(dtype=float)
    return out


def weighted_ols_fe(spec: RegressionSpec, data: pd.DataFrame) -> OLSResult:
    """Weighted OLS with absorbed fixed effects and the requested covariance.

    Rows with a missing value in any used column (or nonpositive weight) are
    dropped. Collinear regressors are dropped and listed in ``dropped``.
    """
    missing = [c for c in spec.columns() if c not in data.columns]
    if missing:
        raise SchemaError(f"regression data lack columns: {missing}")
    d = data[spec.columns()]
    ok = d.notna().all(axis=1).to_numpy()
    if spec.weight:
        ok &= d[spec.weight].to_numpy(dtype=float) > 0
    d = d.loc[ok]
    if len(d) == 0:
        raise IdentificationError(f"no usable rows for regression {spec.name or spec.outcome!r}")
    y = d[spec.outcome].to_numpy(dtype=float)
    X = np.column_stack([_term(d, r) for r in spec.regressors]) if spec.regressors else np.zeros((len(d), 0))
    w = d[spec.weight].to_numpy(dtype=float) if spec.weight else None
    fe = [d[c].astype(str).to_numpy() for c in spec.fe]
    cl = d[spec.cluster].to_numpy() if spec.se == "cluster" else None
    res = ols_fe(y, X, fe=fe, w=w, names=list(spec.regressors), se=spec.se, clusters=cl)
    if res.dropped:
        log.info("regression %s dropped collinear terms %s", spec.name or spec.outcome, res.dropped)
    if cl is not None:
        sizes = pd.Series(cl).value_counts()
        res.n_singleton_clusters = int((sizes == 1).sum())
    return res


def results_table(results: dict) -> pd.DataFrame:
    """Long table (column, term, coef, se) plus fit rows per column."""
    rows = []
    for col, r in results.items():
        for name, b, s in zip(r.names, r.coef, r.se):
            rows.append({"column": col, "term": name, "coef": float(b), "se": float(s)})
        rows.append({"column": col, "term": "_nobs", "coef": float(r.nobs), "se": np.nan})
        rows.append({"column": col, "term": "_r2", "coef": r.r2, "se": np.nan})
        rows.append({"column": col, "term": "_r2_within", "coef": r.within_r2, "se": np.nan})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# analysis frame


def analysis_frame(panel: Panel, skills: pd.Series, profile=None, weight_col="analysis_weight",
                   groups=("government", "private")) -> pd.DataFrame:
    """Worker-year rows of the given groups with skill, life-cycle skill
    (``skill + h(e)``), a government dummy and a linear year trend."""
    df = panel.frame
    d = df[df["group"].isin(groups)].copy()
    d["skill"] = skills.reindex(d["worker_id"]).to_numpy(dtype=float)
    if profile is not None:
        d["lc_skill"] = d["skill"] + profile.h(d["experience"].to_numpy())
    d["gov"] = (d["group"] == "government").astype(float)
    d["male"] = d["male"].astype(float)
    d["trend"] = (d["year"] - df["year"].min()).astype(float)
    d["experience_sq"] = d["experience"] ** 2
    d["weight"] = d[weight_col].astype(float)
    return d


def informativeness_tables(frame: pd.DataFrame) -> dict:
    """Wages regressed on skill, life-cycle skill, or skill plus experience,
    separately for government and comparable-private workers (IID SEs)."""
    specs = {
        "skill": ["skill"],
        "lc_skill": ["lc_skill"],
        "skill_experience": ["skill", "experience", "experience_sq"],
    }
    out = {}
    for label, grp in (("gov", 1.0), ("private", 0.0)):
        d = frame[frame["gov"] == grp]
        for name, regs in specs.items():
            spec = RegressionSpec("log_wage", regs, weight="weight", se="iid", name=f"{label}_{name}")
            out[spec.name] = weighted_ols_fe(spec, d)
    return out


def informativeness_ratio(tables: dict) -> float:
    """Private over government R^2 of the skill-only columns."""
    return tables["private_skill"].r2 / tables["gov_skill"].r2


def premium_table(frame: pd.DataFrame) -> dict:
    """Eight premium columns: base, year FE, job FE, skill, skill + job,
    life-cycle skill, life-cycle + job, life-cycle + job + government trend.
    SEs clustered by year except the IID base column."""
    job = ["year", "occupation", "sector"]
    cl = dict(weight="weight", se="cluster", cluster="year")
    specs = {
        "base": RegressionSpec("log_wage", ["gov"], weight="weight", se="iid"),
        "year_fe": RegressionSpec("log_wage", ["gov"], ["year"], **cl),
        "job_fe": RegressionSpec("log_wage", ["gov"], job, **cl),
        "skill": RegressionSpec("log_wage", ["gov", "skill"], ["year"], **cl),
        "skill_job": RegressionSpec("log_wage", ["gov", "skill"], job, **cl),
        "lc": RegressionSpec("log_wage", ["gov", "lc_skill"], ["year"], **cl),
        "lc_job": RegressionSpec("log_wage", ["gov", "lc_skill"], job, **cl),
        "lc_trend": RegressionSpec("log_wage", ["gov", "lc_skill", "gov:trend"], job, **cl),
    }
    return {k: weighted_ols_fe(s, frame) for k, s in specs.items()}


def gender_table(frame: pd.DataFrame) -> dict:
    """Five columns with a government x male interaction."""
    job = ["year", "occupation", "sector"]
    cl = dict(weight="weight", se="cluster", cluster="year")
    base = ["gov", "male", "gov:male"]
    specs = {
        "base": RegressionSpec("log_wage", base, weight="weight", se="iid"),
        "job_fe": RegressionSpec("log_wage", base, job, **cl),
        "skill": RegressionSpec("log_wage", base + ["skill"], job, **cl),
        "lc": RegressionSpec("log_wage", base + ["lc_skill"], job, **cl),
        "lc_trend": RegressionSpec("log_wage", base + ["lc_skill", "gov:trend", "male:trend"], job, **cl),
    }
    return {k: weighted_ols_fe(s, frame) for k, s in specs.items()}


def premium_and_gender_tables(frame: pd.DataFrame):
    return premium_table(frame), gender_table(frame)


# ---------------------------------------------------------------------------
# relative skills


def _age_filter(df: pd.DataFrame, age=AGE_RANGE) -> pd.DataFrame:
    a = df["year"] - df["birth_year"]
    return df[(a >= age[0]) & (a <= age[1])]


def jobfix_skills(frame: pd.DataFrame, reference=JOBFIX_REFERENCE) -> np.ndarray:
    """Government skills with occupation and sector effects removed.

    Effects come from a weighted government-only regression of skill on
    occupation and sector dummies; skills are moved to the reference job
    and shifted so the weighted government mean is unchanged. Other rows
    keep their skill.
    """
    out = frame["skill"].to_numpy(dtype=float).copy()
    g = (frame["group"] == "government").to_numpy()
    if not g.any():
        return out
    d = frame.loc[g]
    w = d["weight"].to_numpy(dtype=float)
    occ = pd.get_dummies(d["occupation"], prefix="o", dtype=float)
    sec = pd.get_dummies(d["sector"], prefix="s", dtype=float)
    X = pd.concat([occ.iloc[:, 1:], sec.iloc[:, 1:]], axis=1)
    res = ols_fe(d["skill"].to_numpy(float), X.to_numpy(), w=w, names=list(X.columns))
    b = dict(zip(res.names, res.coef))
    eff = X.to_numpy() @ np.array([b.get(c, 0.0) for c in X.columns])
    ref = np.zeros(X.shape[1])
    for prefix, level in (("o", reference[0]), ("s", reference[1])):
        col = f"{prefix}_{level}"
        if col in X.columns:
            ref[list(X.columns).index(col)] = 1.0
    ref_eff = float(ref @ np.array([b.get(c, 0.0) for c in X.columns]))
    adj = d["skill"].to_numpy(float) - eff + ref_eff
    adj += weighted_mean(d["skill"].to_numpy(float), w) - weighted_mean(adj, w)
    out[g] = adj
    return out


def cohort_bins(birth_year, w=None, n_bins=N_COHORT_BINS) -> np.ndarray:
    """Bin index (0..n_bins-1) from weighted quantiles of pooled birth years."""
    b = np.asarray(birth_year, dtype=float)
    edges = np.unique(weighted_quantile(b, np.linspace(0, 1, n_bins + 1)[1:-1], w))
    return np.searchsorted(edges, b, side="right")


def _cell_stats(v, w):
    sw = w.sum()
    m = np.dot(w, v) / sw
    var = np.dot(w, (v - m) ** 2) / sw
    neff = sw**2 / np.dot(w, w)
    return m, var / neff if neff > 1 else np.nan, len(v)


def relative_skill_series(frame: pd.DataFrame, by="year", jobfix=False, comparison=("private",),
                          n_bins=N_COHORT_BINS, age=AGE_RANGE, level=0.95):
    """Government minus comparison mean skill per cell with normal CIs that
    treat skills as known.

    ``frame`` is an :func:`analysis_frame` (any groups). Cells lacking either
    group are skipped and listed in ``attrs['skipped']``.
    """
    from scipy.stats import norm

    d = _age_filter(frame, age).copy()
    if jobfix:
        d["skill"] = jobfix_skills(d)
    if by == "year":
        d["cell"] = d["year"]
    elif by == "cohort_bin":
        d["cell"] = cohort_bins(d["birth_year"], d["weight"], n_bins)
    elif by == "cohort":
        d["cell"] = d["birth_year"]
    else:
        raise ConfigError(f"unknown cell variable {by!r}")
    q = norm.ppf(0.5 + level / 2)
    rows, skipped = [], []
    for cell, c in d.groupby("cell", sort=True):
        gov = c[c["group"] == "government"]
        cmp_ = c[c["group"].isin(comparison)]
        if len(gov) == 0 or len(cmp_) == 0 or gov["weight"].sum() <= 0 or cmp_["weight"].sum() <= 0:
            skipped.append(cell)
            continue
        mg, vg, ng = _cell_stats(gov["skill"].to_numpy(float), gov["weight"].to_numpy(float))
        mc, vc, nc = _cell_stats(cmp_["skill"].to_numpy(float), cmp_["weight"].to_numpy(float))
        se = np.sqrt(vg + vc)
        rows.append({"cell": cell, "gov_mean": mg, "comparison_mean": mc, "relative": mg - mc, "se": se,
                     "ci_low": mg - mc - q * se, "ci_high": mg - mc + q * se, "n_gov": ng, "n_comparison": nc,
                     "birth_year_mean": float(np.average(c["birth_year"], weights=c["weight"]))})
    if skipped:
        log.warning("relative skill cells skipped for lack of data: %s", skipped)
    out = pd.DataFrame(rows)
    out.attrs["skipped"] = skipped
    return out


# ---------------------------------------------------------------------------
# cohort hiring


def cohort_table(frame: pd.DataFrame, min_gov_obs=25, age=AGE_RANGE, comparison=("private",)) -> pd.DataFrame:
    """Per birth cohort: relative skill (raw and job-fixed), government
    employment share among all worker-years, and government observation
    counts; cohorts below ``min_gov_obs`` government worker-years dropped."""
    d = _age_filter(frame, age).copy()
    d["skill_jobfix"] = jobfix_skills(d)
    rows = []
    for c, g in d.groupby("birth_year", sort=True):
        gov = g[g["group"] == "government"]
        cmp_ = g[g["group"].isin(comparison)]
        n_gov = len(gov)
        row = {"cohort": int(c), "n_gov": n_gov, "n_comparison": len(cmp_),
               "ges": float(gov["weight"].sum() / g["weight"].sum())}
        if n_gov and len(cmp_):
            for col, name in (("skill", "relative"), ("skill_jobfix", "relative_jobfix")):
                row[name] = (weighted_mean(gov[col], gov["weight"]) - weighted_mean(cmp_[col], cmp_["weight"]))
        else:
            row["relative"] = row["relative_jobfix"] = np.nan
        rows.append(row)
    t = pd.DataFrame(rows)
    t = t[(t["n_gov"] >= min_gov_obs) & t["relative"].notna()].reset_index(drop=True)
    return t


def cohort_hiring_regression(table: pd.DataFrame, min_cohorts=10) -> dict:
    """Six cohort-level columns: levels with a cubic cohort trend (raw,
    job-fixed) and first differences without/with the trend (raw, job-fixed).
    HC1 standard errors; differences are taken between consecutive retained
    cohorts."""
    if len(table) < min_cohorts:
        raise IdentificationError(f"only {len(table)} cohorts after filtering; need at least {min_cohorts}")
    t = table.sort_values("cohort").reset_index(drop=True).copy()
    c = (t["cohort"] - t["cohort"].mean()) / 10.0
    t["c1"], t["c2"], t["c3"] = c, c**2, c**3
    for col in ("relative", "relative_jobfix", "ges"):
        t[f"d_{col}"] = t[col].diff()
    trend = ["c1", "c2", "c3"]
    specs = {
        "level": RegressionSpec("relative", ["ges"] + trend, se="hc1"),
        "level_jobfix": RegressionSpec("relative_jobfix", ["ges"] + trend, se="hc1"),
        "diff": RegressionSpec("d_relative", ["d_ges"], se="hc1"),
        "diff_trend": RegressionSpec("d_relative", ["d_ges"] + trend, se="hc1"),
        "diff_jobfix": RegressionSpec("d_relative_jobfix", ["d_ges"], se="hc1"),
        "diff_jobfix_trend": RegressionSpec("d_relative_jobfix", ["d_ges"] + trend, se="hc1"),
    }
    return {k: weighted_ols_fe(s, t) for k, s in specs.items()}


def cohort_filter_variants(frame: pd.DataFrame, min_obs=COHORT_MIN_OBS, **kw) -> dict:
    """The six cohort columns for each minimum-government-observation filter."""
    return {m: cohort_hiring_regression(cohort_table(frame, m, **kw)) for m in min_obs}


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    pearson_r: float
    spearman_rho: float
    slope_through_origin: float
    bins: pd.DataFrame
    n_compare: int
    n_train: int | None = None

    def to_dict(self) -> dict:
        return {"pearson_r": self.pearson_r, "spearman_rho": self.spearman_rho,
                "slope_through_origin": self.slope_through_origin, "n_compare": self.n_compare,
                "n_train": self.n_train}


def stability_compare(baseline: pd.Series, alternative: pd.Series, weights: pd.Series | None = None,
                      n_bins=10, n_train=None) -> StabilityReport:
    """Agreement of two skill vectors on their common workers: weighted
    Pearson and Spearman, the slope of a weighted regression through the
    origin on centred skills, and means in weighted baseline-quantile bins."""
    j = baseline.index.intersection(alternative.index)
    if len(j) < 2:
        raise IdentificationError("fewer than two overlapping workers")
    b = baseline.loc[j].to_numpy(float)
    a = alternative.loc[j].to_numpy(float)
    w = np.ones(len(j)) if weights is None else weights.reindex(j).to_numpy(float)
    bc = b - weighted_mean(b, w)
    ac = a - weighted_mean(a, w)
    slope = float(np.dot(w, bc * ac) / np.dot(w, bc * bc))
    edges = np.unique(weighted_quantile(b, np.linspace(0, 1, n_bins + 1)[1:-1], w))
    bin_ = np.searchsorted(edges, b, side="right")
    bins = pd.DataFrame({"bin": bin_, "baseline": b, "alternative": a, "w": w}).groupby("bin").apply(
        lambda g: pd.Series({"baseline": np.average(g["baseline"], weights=g["w"]),
                             "alternative": np.average(g["alternative"], weights=g["w"]),
                             "n": len(g)}), include_groups=False).reset_index()
    return StabilityReport(weighted_corr(b, a, w), weighted_spearman(b, a, w), slope, bins, len(j), n_train)


def retrain_on_subset(panel: Panel, price, profile, covariates, mask, family="gbm", grid=None, k=10, seed=0,
                      threads=1, weight_col="analysis_weight"):
    """Skill signals built only from the worker-years in ``mask``, a fresh
    learner fit on them, and predictions for every worker in ``covariates``.

    Used for year-split and occupation-split stability checks and for
    re-estimating skills from government wages.
    """
    from .heckman import relearn_skills
    from .profile import worker_mean_residual

    sub = panel.subset(np.asarray(mask, dtype=bool))
    signals = worker_mean_residual(sub, price, profile, weight_col=weight_col)
    pred, model = relearn_skills(signals, covariates, family=family, grid=grid, k=k, seed=seed, threads=threads)
    return pred, model, len(signals.frame)


def year_split_stability(panel: Panel, price, profile, covariates, baseline: pd.Series, year, **kw):
    """Retrain on one year's comparable-private observations and compare."""
    d = panel.frame
    mask = ((d["year"] == year) & (d["group"] == "private") & (d["analysis_weight"] > 0)).to_numpy()
    pred, _, n = retrain_on_subset(panel, price, profile, covariates, mask, **kw)
    return stability_compare(baseline, pred, n_train=n)
