"""Single-factor experience profiles ``log z_i + g_i * delta_e`` estimated
from cross-sectional averages of worker-demeaned wages."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import IdentificationError
from .panel import Panel
from .price import SkillPriceSeries
from .profile import price_adjusted

log = logging.getLogger(__name__)

MIN_CELL = 30
SMALL_T = 5


@dataclass
class ExperienceFactors:
    levels: np.ndarray  # retained integer experience levels, ascending
    delta: np.ndarray  # delta_e, zero at the reference (lowest) level
    g_norm: float  # normalisation of the mean loading
    n_workers: np.ndarray  # workers per retained level
    dropped: dict = field(default_factory=dict)  # level -> worker count
    unit_delta: np.ndarray | None = None  # delta under g_norm = 1

    def __post_init__(self):
        if self.unit_delta is None:
            self.unit_delta = np.asarray(self.delta, dtype=float) * self.g_norm

    def at(self, e, unit=False) -> np.ndarray:
        """``delta_e`` at integer experience ``e`` (NaN for dropped levels)."""
        lut = dict(zip(self.levels.tolist(), self.unit_delta if unit else self.delta))
        return np.array([lut.get(int(v), np.nan) for v in np.atleast_1d(e)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"experience": self.levels, "delta": self.delta, "n_workers": self.n_workers})


@dataclass
class FactorFit:
    factors: ExperienceFactors
    workers: pd.DataFrame  # worker_id, log_z, g, resid_var, se_log_z, se_g, n_levels, small_t
    n_skipped: int

    @property
    def delta_e(self) -> pd.Series:
        return pd.Series(self.factors.delta, index=self.factors.levels, name="delta")

    @property
    def log_z(self) -> pd.Series:
        return self.workers.set_index("worker_id")["log_z"]

    @property
    def g(self) -> pd.Series:
        return self.workers.set_index("worker_id")["g"]

    def to_csv(self, path):
        self.workers.to_csv(path, index=False, float_format="%.10g")


def _factor_inputs(panel: Panel, price: SkillPriceSeries, weight_col):
    df = panel.frame
    pos = df[weight_col].to_numpy() > 0
    sub = panel.subset(pos)
    d = sub.frame
    return sub, price_adjusted(sub, price), np.rint(d["experience"].to_numpy()).astype(int)


def estimate_experience_factors(panel: Panel, price: SkillPriceSeries, min_cell=MIN_CELL, g_norm=1.0,
                                weight_col="analysis_weight") -> ExperienceFactors:
    """Experience factors from cross-sectional means of worker-demeaned wages.

    Worker demeaning turns ``g_i * delta_e`` into ``g_i * (delta_e - dbar_i)``
    with ``dbar_i`` the mean of ``delta`` over the worker's own levels. The
    mean over workers observed at ``e`` is therefore
    ``gbar * (delta_e - sum_l A[e, l] delta_l)`` where ``A[e, l]`` is the
    average share of level ``l`` in those workers' series. Fixing
    ``gbar = g_norm`` and ``delta`` at the lowest retained level to zero makes
    this a linear system in the remaining levels, solved by least squares.
    Levels seen by fewer than ``min_cell`` workers are dropped before
    demeaning and reported.
    """
    if g_norm == 0:
        raise IdentificationError("the loading normalisation must be nonzero")
    sub, wt, lev = _factor_inputs(panel, price, weight_col)
    codes = sub.worker_codes
    levels, inv = np.unique(lev, return_inverse=True)
    cells = np.array([len(np.unique(codes[inv == j])) for j in range(len(levels))])
    keep_lv = cells >= min_cell
    dropped = {int(l): int(c) for l, c in zip(levels[~keep_lv], cells[~keep_lv])}
    if dropped:
        log.warning("dropped experience levels with fewer than %d workers: %s", min_cell, dropped)
    m = keep_lv[inv]
    levels = levels[keep_lv]
    if len(levels) < 2:
        raise IdentificationError("need at least two experience levels to estimate experience factors")
    codes, pos_lv = codes[m], np.searchsorted(levels, lev[m])
    y = wt[m]
    w = sub.frame[weight_col].to_numpy()[m]
    _, codes = np.unique(codes, return_inverse=True)
    nw, L = codes.max() + 1, len(levels)

    cnt = np.bincount(codes, minlength=nw).astype(float)
    ystar = y - (np.bincount(codes, weights=y, minlength=nw) / cnt)[codes]
    # S[i, l]: share of worker i's observations at level l
    S = np.zeros((nw, L))
    np.add.at(S, (codes, pos_lv), 1.0)
    S /= cnt[:, None]
    # weighted cross-sectional means over observations at each level
    wsum = np.bincount(pos_lv, weights=w, minlength=L)
    mbar = np.bincount(pos_lv, weights=w * ystar, minlength=L) / wsum
    A = np.zeros((L, L))
    np.add.at(A, pos_lv, w[:, None] * S[codes])
    A /= wsum[:, None]
    D = (np.eye(L) - A)[:, 1:]
    sol, *_ = np.linalg.lstsq(D, mbar, rcond=None)
    unit = np.concatenate([[0.0], sol])
    nworkers = np.array([len(np.unique(codes[pos_lv == j])) for j in range(L)])
    return ExperienceFactors(levels, unit / g_norm, float(g_norm), nworkers, dropped, unit)


def estimate_worker_loadings(panel: Panel, price: SkillPriceSeries, factors: ExperienceFactors,
                             weight_col="analysis_weight", small_t=SMALL_T) -> FactorFit:
    """Per-worker least squares of price-adjusted wages on ``[1, delta_e]``.

    The intercept is ``log z_i`` and the slope ``g_i``. Workers with fewer
    than two distinct usable ``delta_e`` values are skipped and counted.
    Standard errors assume i.i.d. errors within the worker and are flagged
    when the series is shorter than ``small_t``. The fits run on the
    normalisation-free factors so ``log z_i`` does not depend on ``g_norm``.
    """
    sub, wt, lev = _factor_inputs(panel, price, weight_col)
    d = factors.at(lev, unit=True)
    ok = np.isfinite(d)
    codes_all = sub.worker_codes
    ids = sub.worker_ids
    c, x, y = codes_all[ok], d[ok], wt[ok]
    nw = len(ids)
    n = np.bincount(c, minlength=nw).astype(float)
    sx = np.bincount(c, weights=x, minlength=nw)
    sy = np.bincount(c, weights=y, minlength=nw)
    with np.errstate(invalid="ignore", divide="ignore"):
        xm, ym = sx / n, sy / n
        sxx = np.bincount(c, weights=(x - xm[c]) ** 2, minlength=nw)
        sxy = np.bincount(c, weights=(x - xm[c]) * (y - ym[c]), minlength=nw)
        usable = (n >= 2) & (sxx > 1e-12 * np.maximum(1.0, np.bincount(c, weights=x**2, minlength=nw)))
        g = np.where(usable, sxy / sxx, np.nan)
        a = ym - g * xm
        rss = np.bincount(c, weights=(y - a[c] - g[c] * x) ** 2, minlength=nw)
        dof = n - 2
        s2 = np.where(usable & (dof > 0), rss / dof, np.nan)
        se_g = np.sqrt(s2 / sxx)
        se_a = np.sqrt(s2 * (1.0 / n + xm**2 / sxx))
        g, se_g = g * factors.g_norm, se_g * abs(factors.g_norm)
    out = pd.DataFrame({
        "worker_id": ids, "log_z": a, "g": g, "resid_var": s2, "se_log_z": se_a, "se_g": se_g,
        "n_levels": n.astype(int), "small_t": n < small_t,
    })[usable].reset_index(drop=True)
    n_skip = int((~usable).sum())
    if n_skip:
        log.info("skipped %d workers with fewer than two distinct experience factors", n_skip)
    return FactorFit(factors, out, n_skip)


def fit_factor_model(panel: Panel, price: SkillPriceSeries, min_cell=MIN_CELL, g_norm=1.0,
                     weight_col="analysis_weight") -> FactorFit:
    """Experience factors followed by worker loadings."""
    fac = estimate_experience_factors(panel, price, min_cell, g_norm, weight_col)
    return estimate_worker_loadings(panel, price, fac, weight_col)
