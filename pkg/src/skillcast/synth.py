"""Synthetic worker panels with known latent skills, prices and selection.

Log wages of comparable private-sector workers follow

    w_it = p_t + h(e_it) + z_i + eta_province + eps_it,   z_i = f0(x_i) + v_i

with a quadratic experience profile ``h`` (or a factor profile ``g_i * delta_e``),
so every downstream estimator can be checked against the generating values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import ConfigError
from .panel import CovariateMatrix, Panel, preprocess_covariates, write_covariates

OCCUPATIONS = ("Teacher", "Health", "Clerical", "Manager", "Sales", "Production", "Agriculture")
SECTORS = (
    "Social services",
    "Public administration",
    "Finance",
    "Trade",
    "Manufacturing",
    "Agriculture",
)
CONTINUOUS = (
    "raven",
    "word_recall",
    "delayed_recall",
    "counting_back",
    "word_ability",
    "big5_extraversion",
    "big5_conscientiousness",
    "big5_neuroticism",
    "big5_openness",
    "big5_agreeableness",
)
DUMMIES = (
    "edu_primary",
    "edu_junior_secondary",
    "edu_senior_secondary",
    "edu_higher",
    "edu_islamic",
    "reads_newspaper",
    "speaks_bahasa",
    "writes_letters",
)
INSTRUMENT = "parent_private"
EDU_STEPS = np.array([0.0, 0.10, 0.20, 0.35, 0.60])

# multinomial-logit occupation choice: base score, slope on education level
_OCC_BASE = np.array([-0.6, -1.0, 0.0, -1.2, 0.3, 0.6, 0.6])
_OCC_EDU = np.array([0.6, 0.5, 0.4, 0.6, 0.0, -0.2, -0.5])
# sector given occupation (rows follow OCCUPATIONS)
_SECTOR_GIVEN_OCC = np.array(
    [
        [0.85, 0.10, 0.00, 0.05, 0.00, 0.00],
        [0.80, 0.15, 0.00, 0.05, 0.00, 0.00],
        [0.15, 0.35, 0.25, 0.20, 0.05, 0.00],
        [0.05, 0.20, 0.30, 0.25, 0.20, 0.00],
        [0.00, 0.00, 0.15, 0.80, 0.05, 0.00],
        [0.00, 0.00, 0.00, 0.05, 0.90, 0.05],
        [0.00, 0.00, 0.00, 0.05, 0.05, 0.90],
    ]
)
_GOV_OCC = np.array([1.5, 1.0, 0.8, 0.0, -1.5, -2.0, -2.0])
_GOV_SECTOR = np.array([1.0, 2.0, -0.5, -1.0, -1.0, -1.0])

DEFAULT_LINEAR_F0 = {
    "edu_primary": 0.10,
    "edu_junior_secondary": 0.20,
    "edu_senior_secondary": 0.35,
    "edu_higher": 0.60,
    "raven": 0.08,
    "word_ability": 0.05,
    "big5_conscientiousness": 0.04,
    "reads_newspaper": 0.06,
    "speaks_bahasa": 0.03,
}


@dataclass(frozen=True)
class SelectionSpec:
    """Worker-year selection into comparable private-sector jobs.

    The latent index is ``intercept + sum g_weights[x] * x + a*e + b*e^2 +
    instrument_effect * r + pi_t + u`` with ``(u, eps/noise_sd)`` standard
    bivariate normal with correlation ``rho``.
    """

    g_weights: dict = field(default_factory=lambda: {"raven": -0.3, "edu_higher": -0.4})
    intercept: float = 0.6
    experience_effect: tuple = (-0.02, 0.0003)
    instrument_effect: float = 0.3
    instrument_share: float = 0.4
    year_effect_sd: float = 0.1
    rho: float = 0.5
    direct_effect: float = 0.0


@dataclass(frozen=True)
class FactorSpec:
    """Experience profile ``g_i * delta_e`` replacing the quadratic ``h(e)``."""

    g_dist: str = "lognormal"  # "ones" | "lognormal"
    g_sd: float = 0.3
    delta_path: tuple | None = None  # None: delta0*e + delta1*e^2 at integer e


@dataclass(frozen=True)
class DgpConfig:
    n_workers: int = 20000
    first_year: int = 1990
    n_years: int = 25
    f0_spec: str = "interaction"  # linear | additive | interaction
    linear_coefficients: dict | None = None
    price_path: tuple | None = None  # multiplicative, first entry 1
    delta0: float = 0.03
    delta1: float = -0.03 / 56  # profile peaks at 28 years, centre of the flat spot
    noise_sd: float = 0.35
    projection_sd: float = 0.2
    province_sd: float = 0.05
    n_provinces: int = 8
    career_length: int = 40
    mean_spell: float = 5.0
    missing_rate: float = 0.06
    other_share: float = 0.1
    gov_intercept: float = -1.0
    gov_skill_selection: float = 1.0
    gov_premium: float = 0.3
    gov_skill_loading: float = 1.0
    gov_tenure_slope: float | None = None
    instrument_share: float = 0.4
    instrument_gov_effect: float = -0.5
    male_premium_private: float = 0.0
    selection: SelectionSpec | None = None
    factor: FactorSpec | None = None
    seed: int = 0

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.first_year + self.n_years)

    def validate(self):
        if self.n_workers < 1 or self.n_years < 1:
            raise ConfigError("need at least one worker and one year")
        if self.f0_spec not in ("linear", "additive", "interaction"):
            raise ConfigError(f"unknown f0_spec {self.f0_spec!r}")
        if self.noise_sd < 0 or self.projection_sd < 0 or self.province_sd < 0:
            raise ConfigError("standard deviations must be nonnegative")
        if self.price_path is not None:
            if len(self.price_path) != self.n_years:
                raise ConfigError("price_path needs one factor per year")
            if self.price_path[0] != 1:
                raise ConfigError("price_path must equal 1 in the first year")
            if min(self.price_path) <= 0:
                raise ConfigError("price factors must be positive")
        if self.selection is not None and not abs(self.selection.rho) < 1:
            raise ConfigError("selection rho must lie in (-1, 1)")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        d = dict(d)
        if d.get("selection") is not None:
            sel = dict(d["selection"])
            if "experience_effect" in sel:
                sel["experience_effect"] = tuple(sel["experience_effect"])
            d["selection"] = SelectionSpec(**sel)
        if d.get("factor") is not None:
            fac = dict(d["factor"])
            if fac.get("delta_path") is not None:
                fac["delta_path"] = tuple(fac["delta_path"])
            d["factor"] = FactorSpec(**fac)
        if d.get("price_path") is not None:
            d["price_path"] = tuple(d["price_path"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def default_log_price(years) -> np.ndarray:
    """U-shaped log price path with a one-year crisis dip in 1998."""
    years = np.asarray(years)
    s = (years - years[0]) / max(len(years) - 1, 1)
    lp = -0.45 * s + 0.6 * s**2
    lp = lp - 0.08 * (years == 1998)
    return lp - lp[0]


@dataclass
class GroundTruth:
    """Generating values behind a synthetic panel.

    ``workers`` is indexed by worker id; ``obs`` is aligned row-for-row with
    the panel frame.
    """

    workers: pd.DataFrame
    log_price: pd.Series
    delta0: float
    delta1: float
    obs: pd.DataFrame
    delta_e: np.ndarray | None = None
    selection: dict | None = None
    config: dict | None = None

    def h(self, e):
        e = np.asarray(e, dtype=float)
        if self.delta_e is not None:
            return self.delta_e[np.rint(e).astype(int)]
        return self.delta0 * e + self.delta1 * e**2

    def price_series(self):
        from .price import SkillPriceSeries

        lp = self.log_price.to_numpy()
        return SkillPriceSeries.from_log_price(self.log_price.index.to_numpy(), lp)

    def attainable_r2(self, weights=None, zhat=None):
        """Share of skill-signal variance explained by f0(x)."""
        from .stats import weighted_var

        if zhat is None:
            raise ValueError("need the skill signal to form the bound")
        f0 = self.workers.loc[zhat.index, "f0"].to_numpy()
        w = None if weights is None else np.asarray(weights)
        return weighted_var(f0, w) / weighted_var(zhat.to_numpy(), w)

    def reconstruct_log_wage(self, panel: Panel) -> np.ndarray:
        df = panel.frame
        wk = self.workers.loc[df["worker_id"].to_numpy()]
        lp = self.log_price.loc[df["year"].to_numpy()].to_numpy()
        e = df["experience"].to_numpy()
        o = self.obs
        gov = (df["group"] == "government").to_numpy()
        prof = wk["g"].to_numpy() * self.h(e) if self.delta_e is not None else self.h(e)
        cfg = self.config or {}
        loading = cfg.get("gov_skill_loading", 1.0)
        slope = cfg.get("gov_tenure_slope")
        gov_prof = prof if slope is None else slope * e
        private = (
            lp
            + prof
            + wk["z"].to_numpy()
            + wk["province_effect"].to_numpy()
            + cfg.get("male_premium_private", 0.0) * df["male"].to_numpy()
            + o["direct"].to_numpy()
            + o["eps"].to_numpy()
        )
        government = (
            lp
            + cfg.get("gov_premium", 0.0)
            + gov_prof
            + loading * wk["z"].to_numpy()
            + wk["province_effect"].to_numpy()
            + o["eps"].to_numpy()
        )
        return np.where(gov, government, private)

    def to_json(self) -> dict:
        return {
            "workers": {c: self.workers[c].tolist() for c in self.workers.columns}
            | {"worker_id": self.workers.index.tolist()},
            "log_price": {str(k): float(v) for k, v in self.log_price.items()},
            "delta0": self.delta0,
            "delta1": self.delta1,
            "delta_e": None if self.delta_e is None else self.delta_e.tolist(),
            "selection": self.selection,
            "obs": {c: self.obs[c].tolist() for c in self.obs.columns},
            "config": self.config,
        }


def _streams(seed, names):
    ss = np.random.SeedSequence(seed)
    return {n: np.random.Generator(np.random.Philox(s)) for n, s in zip(names, ss.spawn(len(names)))}


def _f0(spec, X: dict, coefs=None):
    if spec == "linear":
        coefs = DEFAULT_LINEAR_F0 if coefs is None else coefs
        return sum(c * X[k] for k, c in coefs.items())
    edu = X["_edu_level"]
    out = (
        EDU_STEPS[edu]
        + 0.10 * np.tanh(1.5 * X["raven"])
        + 0.06 * np.maximum(X["word_ability"], 0.0)
        + 0.04 * X["big5_conscientiousness"]
        - 0.03 * X["big5_neuroticism"] ** 2
        + 0.06 * X["reads_newspaper"]
        + 0.03 * X["speaks_bahasa"]
    )
    if spec == "interaction":
        out = out + 0.15 * X["raven"] * X["edu_higher"] + 0.08 * X["counting_back"] * (X["raven"] > 0.5)
    return out


def _draw_covariates(rng, n, birth_year, missing_rate):
    ability = rng.standard_normal(n)
    cohort = (birth_year - 1960) / 20.0
    edu_latent = 0.9 * ability + 0.6 * cohort + 0.8 * rng.standard_normal(n)
    level = np.searchsorted(np.array([-1.0, -0.2, 0.5, 1.3]), edu_latent)

    def loaded(load):
        return load * ability + np.sqrt(1 - load**2) * rng.standard_normal(n)

    X = {"_edu_level": level}
    X["raven"] = loaded(0.7)
    X["word_recall"] = loaded(0.5)
    X["delayed_recall"] = 0.6 * X["word_recall"] + 0.8 * rng.standard_normal(n)
    X["counting_back"] = loaded(0.5)
    X["word_ability"] = loaded(0.6)
    X["big5_extraversion"] = rng.standard_normal(n)
    X["big5_conscientiousness"] = loaded(0.2)
    X["big5_neuroticism"] = rng.standard_normal(n)
    X["big5_openness"] = loaded(0.15)
    X["big5_agreeableness"] = rng.standard_normal(n)
    for j, name in enumerate(("edu_primary", "edu_junior_secondary", "edu_senior_secondary", "edu_higher"), 1):
        X[name] = (level == j).astype(float)
    X["edu_islamic"] = (rng.random(n) < 0.15).astype(float)
    X["reads_newspaper"] = (0.8 * ability + 0.3 * level + rng.standard_normal(n) > 1.0).astype(float)
    X["speaks_bahasa"] = (0.5 * ability + 0.4 * level + rng.standard_normal(n) > -0.5).astype(float)
    X["writes_letters"] = (0.6 * ability + 0.4 * level + rng.standard_normal(n) > 0.3).astype(float)

    raw = {k: X[k].copy() for k in CONTINUOUS + DUMMIES}
    if missing_rate > 0:
        for name in ("raven", "word_recall", "delayed_recall", "reads_newspaper"):
            raw[name][rng.random(n) < missing_rate] = np.nan
    return X, raw


def _categorical(rng, probs):
    """Row-wise categorical draws from an (n, k) probability matrix."""
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    return (rng.random(len(probs))[:, None] > cum).sum(axis=1)


def generate_panel(cfg: DgpConfig = DgpConfig()):
    """Draw a synthetic panel.

    Returns ``(panel, covariates, truth)``; the covariate matrix includes the
    worker-level instrument ``parent_private`` as a dummy column.
    """
    cfg.validate()
    rs = _streams(cfg.seed, ["career", "covariates", "skills", "jobs", "groups", "wages", "selection", "factor"])
    n = cfg.n_workers
    years = cfg.years
    first, last = int(years[0]), int(years[-1])

    rc = rs["career"]
    entry = rc.integers(first - cfg.career_length + 1, last, endpoint=True, size=n)
    age_at_entry = rc.integers(18, 24, endpoint=True, size=n)
    birth = entry - age_at_entry
    lo = np.maximum(entry, first)
    hi = np.minimum(entry + cfg.career_length, last)
    span = hi - lo + 1
    length = np.minimum(1 + rc.poisson(max(cfg.mean_spell - 1, 0), size=n), span)
    start = lo + np.floor(rc.random(n) * (span - length + 1)).astype(int)
    male = rc.random(n) < 0.5
    province = rc.integers(0, cfg.n_provinces, size=n)
    survey_w = np.exp(0.25 * rc.standard_normal(n))

    X, raw = _draw_covariates(rs["covariates"], n, birth, cfg.missing_rate)
    f0 = _f0(cfg.f0_spec, X, cfg.linear_coefficients)
    rsk = rs["skills"]
    v = cfg.projection_sd * rsk.standard_normal(n)
    z = f0 + v
    prov_eff = cfg.province_sd * rsk.standard_normal(cfg.n_provinces)
    instrument_share = cfg.selection.instrument_share if cfg.selection else cfg.instrument_share
    r = (rsk.random(n) < instrument_share).astype(float)

    rj = rs["jobs"]
    level = X["_edu_level"]
    occ_score = _OCC_BASE[None, :] + _OCC_EDU[None, :] * level[:, None]
    occ_p = np.exp(occ_score)
    occ_p /= occ_p.sum(axis=1, keepdims=True)
    occ = _categorical(rj, occ_p)
    sec = _categorical(rj, _SECTOR_GIVEN_OCC[occ])

    rg = rs["groups"]
    zs = (z - z.mean()) / (z.std() if z.std() > 0 else 1.0)
    gov_index = (
        cfg.gov_intercept
        + _GOV_OCC[occ]
        + _GOV_SECTOR[sec]
        + 0.3 * male
        + cfg.gov_skill_selection * zs
        + cfg.instrument_gov_effect * r
    )
    is_other = rg.random(n) < cfg.other_share
    is_gov = (~is_other) & (rg.random(n) < expit(gov_index))
    worker_group = np.where(is_other, "other", np.where(is_gov, "government", "private"))

    # worker-year expansion
    rows = np.repeat(np.arange(n), length)
    offset = np.arange(len(rows)) - np.repeat(np.cumsum(length) - length, length)
    year = start[rows] + offset
    exp_ = (year - entry[rows]).astype(float)

    if cfg.price_path is None:
        log_price = default_log_price(years)
    else:
        log_price = np.log(np.asarray(cfg.price_path, dtype=float))
    lp = log_price[year - first]

    delta_e = None
    g = np.ones(n)
    if cfg.factor is not None:
        fac = cfg.factor
        levels = np.arange(cfg.career_length + 1)
        if fac.delta_path is None:
            delta_e = cfg.delta0 * levels + cfg.delta1 * levels**2
        else:
            delta_e = np.asarray(fac.delta_path, dtype=float)
            if delta_e[0] != 0:
                raise ConfigError("factor delta_path must start at 0")
        if fac.g_dist == "lognormal":
            g = np.exp(fac.g_sd * rs["factor"].standard_normal(n))
        elif fac.g_dist != "ones":
            raise ConfigError(f"unknown g_dist {fac.g_dist!r}")
        prof = g[rows] * delta_e[exp_.astype(int)]
    else:
        prof = cfg.delta0 * exp_ + cfg.delta1 * exp_**2

    rw = rs["wages"]
    n_obs = len(rows)
    eps_std = rw.standard_normal(n_obs)
    direct = np.zeros(n_obs)
    selection_truth = None
    if cfg.selection is not None:
        sel = cfg.selection
        rsel = rs["selection"]
        pi_t = sel.year_effect_sd * rsel.standard_normal(len(years))
        pi_t -= pi_t[0]
        gx = np.zeros(n)
        for name, wt in sel.g_weights.items():
            gx = gx + wt * X[name]
        a, b = sel.experience_effect
        index = sel.intercept + gx[rows] + a * exp_ + b * exp_**2 + sel.instrument_effect * r[rows] + pi_t[year - first]
        u = rsel.standard_normal(n_obs)
        eps_std = sel.rho * u + np.sqrt(1 - sel.rho**2) * eps_std
        selected = index + u > 0
        group = np.where(selected, "private", "government")
        direct = sel.direct_effect * r[rows]
        selection_truth = {
            "g_weights": dict(sel.g_weights),
            "intercept": sel.intercept,
            "experience_effect": list(sel.experience_effect),
            "instrument_effect": sel.instrument_effect,
            "year_effects": {str(y): float(p) for y, p in zip(years, pi_t)},
            "rho": sel.rho,
            "direct_effect": sel.direct_effect,
            "index": index.tolist(),
        }
    else:
        group = worker_group[rows]
    eps = cfg.noise_sd * eps_std
    direct = np.where(group == "government", 0.0, direct)

    gov = group == "government"
    base = lp + prov_eff[province[rows]]
    private_w = base + prof + z[rows] + cfg.male_premium_private * male[rows] + direct + eps
    gov_prof = prof if cfg.gov_tenure_slope is None else cfg.gov_tenure_slope * exp_
    gov_w = base + cfg.gov_premium + gov_prof + cfg.gov_skill_loading * z[rows] + eps
    log_wage = np.where(gov, gov_w, private_w)

    ids = np.array([f"w{i:07d}" for i in range(n)])
    frame = pd.DataFrame(
        {
            "worker_id": ids[rows],
            "year": year,
            "log_wage": log_wage,
            "experience": exp_,
            "group": group,
            "occupation": np.array(OCCUPATIONS)[occ][rows],
            "sector": np.array(SECTORS)[sec][rows],
            "province": np.array([f"P{k:02d}" for k in range(cfg.n_provinces)])[province][rows],
            "birth_year": birth[rows],
            "male": male[rows],
            "survey_weight": survey_w[rows],
        }
    )
    panel = Panel(frame)

    raw_frame = pd.DataFrame({"worker_id": ids, **raw, INSTRUMENT: r})
    schema = {k: "continuous" for k in CONTINUOUS} | {k: "dummy" for k in DUMMIES} | {INSTRUMENT: "dummy"}
    thresh = max(1, min(1000, n // 20))
    cov = preprocess_covariates(raw_frame, schema, missing_indicator_threshold=thresh, weights=survey_w)

    workers = pd.DataFrame(
        {
            "z": z,
            "f0": f0,
            "v": v,
            "g": g,
            "instrument": r,
            "entry_year": entry,
            "province_effect": prov_eff[province],
            "edu_level": level,
            "worker_group": worker_group,
        },
        index=pd.Index(ids, name="worker_id"),
    )
    obs = pd.DataFrame({"eps": eps, "direct": direct})
    truth = GroundTruth(
        workers=workers,
        log_price=pd.Series(log_price, index=years, name="log_price"),
        delta0=cfg.delta0 if cfg.factor is None else np.nan,
        delta1=cfg.delta1 if cfg.factor is None else np.nan,
        obs=obs,
        delta_e=delta_e,
        selection=selection_truth,
        config=cfg.to_dict(),
    )
    truth.raw_covariates = raw_frame
    truth.schema = schema
    truth.missing_indicator_threshold = thresh
    truth.survey_weight = survey_w
    return panel, cov, truth


def generate_selected_panel(cfg: DgpConfig):
    """Panel whose comparable-private sample is selected on wage errors.

    Every worker-year is in the comparable private sector when the selection
    index plus a shock correlated (``rho``) with the wage error is positive,
    and in government otherwise.
    """
    if cfg.selection is None:
        raise ConfigError("generate_selected_panel needs a selection spec")
    return generate_panel(cfg)


def write_synth(out_dir, cfg: DgpConfig):
    """Generate a panel and write panel.csv, covariates.csv (+ schema) and ground_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel, cov, truth = generate_panel(cfg)
    panel.to_csv(out / "panel.csv")
    schema = dict(truth.schema)
    schema[INSTRUMENT] = "instrument"
    raw = truth.raw_covariates.assign(survey_weight=truth.survey_weight)
    write_covariates(raw, schema, out / "covariates.csv", weight_column="survey_weight",
                     missing_indicator_threshold=truth.missing_indicator_threshold)
    (out / "ground_truth.json").write_text(json.dumps(truth.to_json()) + "\n")
    return panel, cov, truth


# ---------------------------------------------------------------------------
# small targeted designs for the regression suite


def generate_wage_setting_panel(
    n_workers=6000,
    n_years=10,
    first_year=2000,
    premium=0.36,
    skill_gap=0.14,
    private_gender_gap=0.0,
    gov_share=0.3,
    skill_sd=0.3,
    noise_sd=0.3,
    gov_skill_loading=1.0,
    gov_tenure_slope=None,
    seed=0,
):
    """Government and comparable-private workers with a known wage premium.

    Government workers' skills are shifted up by ``skill_gap`` so the
    unconditional premium is ``premium + skill_gap``. A nonzero
    ``private_gender_gap`` (female minus male, log points) applies only to
    private-sector wages. Returns ``(panel, skills)`` with ``skills`` indexed
    by worker id.
    """
    rng = np.random.default_rng(seed)
    n = n_workers
    years = np.arange(first_year, first_year + n_years)
    gov = rng.random(n) < gov_share
    male = rng.random(n) < 0.5
    skill = skill_sd * rng.standard_normal(n) + skill_gap * gov
    entry = rng.integers(first_year - 30, first_year, size=n)
    rows = np.repeat(np.arange(n), n_years)
    year = np.tile(years, n)
    e = (year - entry[rows]).astype(float)
    h = 0.03 * e - 0.0005 * e**2
    gov_r = gov[rows]
    skill_term = np.where(gov_r, gov_skill_loading, 1.0) * skill[rows]
    prof = h if gov_tenure_slope is None else np.where(gov_r, gov_tenure_slope * e, h)
    w = (
        premium * gov_r
        + skill_term
        + prof
        - private_gender_gap * male[rows] * (~gov_r)
        + noise_sd * rng.standard_normal(len(rows))
    )
    occ = rng.integers(0, 3, size=n)
    frame = pd.DataFrame(
        {
            "worker_id": np.array([f"w{i:07d}" for i in range(n)])[rows],
            "year": year,
            "log_wage": w,
            "experience": e,
            "group": np.where(gov_r, "government", "private"),
            "occupation": np.array(OCCUPATIONS[:3])[occ][rows],
            "sector": np.where(occ[rows] == 2, "Public administration", "Social services"),
            "province": "P00",
            "birth_year": (entry - 22)[rows],
            "male": male[rows],
            "survey_weight": np.exp(0.2 * rng.standard_normal(n))[rows],
        }
    )
    skills = pd.Series(skill, index=[f"w{i:07d}" for i in range(n)], name="skill")
    return Panel(frame), skills


def generate_cohort_panel(
    n_cohorts=50,
    workers_per_cohort=3000,
    first_cohort=1940,
    ges_effect=-1.0,
    mechanism="linear",
    base_gap=0.2,
    ges_mean=0.2,
    ges_sd=0.05,
    cohort_trend=0.004,
    skill_sd=0.3,
    pool_noise=0.3,
    seed=0,
):
    """One observation per worker across birth cohorts with varying
    government employment shares (GES).

    ``mechanism="linear"`` shifts the government-minus-private skill gap by
    exactly ``ges_effect * (GES_c - ges_mean)``; ``"finite_pool"`` instead lets
    the government hire the top GES share of each cohort on a noisy skill
    ranking, so heavier hiring reaches further down the distribution.
    Returns ``(panel, skills, ges)``.
    """
    rng = np.random.default_rng(seed)
    cohorts = first_cohort + np.arange(n_cohorts)
    ges = np.clip(ges_mean + ges_sd * rng.standard_normal(n_cohorts), 0.02, 0.9)
    n = n_cohorts * workers_per_cohort
    c_idx = np.repeat(np.arange(n_cohorts), workers_per_cohort)
    mu = 0.01 * (cohorts - first_cohort)
    z = mu[c_idx] + skill_sd * rng.standard_normal(n)
    if mechanism == "linear":
        gov = rng.random(n) < ges[c_idx]
        gap = base_gap + cohort_trend * (cohorts - first_cohort) + ges_effect * (ges - ges_mean)
        z = z + gap[c_idx] * gov
    elif mechanism == "finite_pool":
        score = z + pool_noise * rng.standard_normal(n)
        gov = np.zeros(n, dtype=bool)
        for c in range(n_cohorts):
            idx = np.flatnonzero(c_idx == c)
            k = int(round(ges[c] * len(idx)))
            top = idx[np.argsort(-score[idx], kind="mergesort")[:k]]
            gov[top] = True
    else:
        raise ConfigError(f"unknown mechanism {mechanism!r}")
    age = rng.integers(25, 58, endpoint=True, size=n)
    birth = cohorts[c_idx]
    occ = rng.integers(0, 3, size=n)
    ids = np.array([f"w{i:07d}" for i in range(n)])
    frame = pd.DataFrame(
        {
            "worker_id": ids,
            "year": birth + age,
            "log_wage": z,
            "experience": (age - 22).astype(float),
            "group": np.where(gov, "government", "private"),
            "occupation": np.array(OCCUPATIONS[:3])[occ],
            "sector": np.where(occ == 2, "Public administration", "Social services"),
            "province": "P00",
            "birth_year": birth,
            "male": rng.random(n) < 0.5,
            "survey_weight": 1.0,
        }
    )
    return Panel(frame), pd.Series(z, index=ids, name="skill"), pd.Series(ges, index=cohorts, name="ges")
