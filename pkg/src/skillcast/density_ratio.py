"""Direct density-ratio estimation (uLSIF) for government selection rules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import SkillcastError
from .stats import weighted_quantile, weighted_var

DEFAULT_SIGMA = 0.1
DEFAULT_LAMBDA = 0.2


def _as2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def gaussian_kernel(x, c, sigma):
    """``K[i, l] = exp(-|x_i - c_l|^2 / (2 sigma^2))``."""
    x = _as2d(x)
    c = _as2d(c)
    d2 = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * sigma**2))


@dataclass
class UlsifModel:
    centers: np.ndarray
    sigma: float
    lam: float
    alpha: np.ndarray
    H: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    cv_scores: pd.DataFrame | None = field(default=None, repr=False)

    def __call__(self, z):
        return density_ratio_at(self, z)

    def residual(self) -> float:
        b = len(self.alpha)
        return float(np.abs((self.H + self.lam * np.eye(b)) @ self.alpha - self.h).max())


def _pick_centers(num, n_centers, seed):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = rng.permutation(len(num))
    return num[perm[:n_centers]]


def ulsif_fit(numerator, denominator, sigma=DEFAULT_SIGMA, lam=DEFAULT_LAMBDA, n_centers=None, seed=0,
              w_num=None, w_den=None) -> UlsifModel:
    """Fit ``r(z) = sum_l alpha_l K(z, c_l)`` to the ratio of the numerator
    density to the denominator density by ridge-regularised least squares.

    Optional weights turn the sample means in ``H`` and ``h`` into weighted
    means.
    """
    num = _as2d(numerator)
    den = _as2d(denominator)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n_centers = min(100, len(num)) if n_centers is None else int(n_centers)
    if not 1 <= n_centers <= min(len(num), len(den)):
        raise ValueError("need 1 <= n_centers <= both sample sizes")
    centers = _pick_centers(num, n_centers, seed)
    wn = np.full(len(num), 1.0 / len(num)) if w_num is None else np.asarray(w_num, float) / np.sum(w_num)
    wd = np.full(len(den), 1.0 / len(den)) if w_den is None else np.asarray(w_den, float) / np.sum(w_den)

    for attempt in range(2):
        Kd = gaussian_kernel(den, centers, sigma)
        Kn = gaussian_kernel(num, centers, sigma)
        H = (Kd.T * wd) @ Kd
        h = wn @ Kn
        A = H + lam * np.eye(len(centers))
        try:
            cond = np.linalg.cond(A)
            if not np.isfinite(cond) or cond > 1e14:
                raise np.linalg.LinAlgError("ill-conditioned")
            alpha = np.linalg.solve(A, h)
            break
        except np.linalg.LinAlgError:
            if attempt == 0:
                centers = np.unique(centers, axis=0)
                continue
            raise SkillcastError("uLSIF system is singular even after removing duplicate centres")
    return UlsifModel(centers, float(sigma), float(lam), alpha, H, h)


def density_ratio_at(model: UlsifModel, z) -> np.ndarray:
    """Fitted ratio, clamped at zero."""
    scalar = np.ndim(z) == 0
    K = gaussian_kernel(np.atleast_1d(z), model.centers, model.sigma)
    r = np.maximum(K @ model.alpha, 0.0)
    return float(r[0]) if scalar else r


def ulsif_loocv(numerator, denominator, sigmas, lambdas, n_centers=None, seed=0):
    """Analytic leave-one-out squared-loss score for each (sigma, lambda).

    Follows the closed form of the original uLSIF algorithm: the first
    ``min(n_num, n_den)`` points of each sample are left out in pairs.
    """
    num = _as2d(numerator)
    den = _as2d(denominator)
    n_nu, n_de = len(num), len(den)
    n_min = min(n_nu, n_de)
    b = min(100, n_nu) if n_centers is None else int(n_centers)
    centers = _pick_centers(num, b, seed)
    rows = []
    for sigma in sigmas:
        Xde = gaussian_kernel(den, centers, sigma).T  # b x n_de
        Xnu = gaussian_kernel(num, centers, sigma).T
        H = Xde @ Xde.T / n_de
        h = Xnu.mean(axis=1)
        Xde_m = Xde[:, :n_min]
        Xnu_m = Xnu[:, :n_min]
        for lam in lambdas:
            B = H + np.eye(b) * (lam * (n_de - 1) / n_de)
            BiX = np.linalg.solve(B, Xde_m)
            tmp = n_de * np.ones(n_min) - np.ones(b) @ (Xde_m * BiX)
            Bih = np.linalg.solve(B, h)
            B0 = Bih[:, None] + BiX * ((h @ BiX) / tmp)[None, :]
            B1 = np.linalg.solve(B, Xnu_m) + BiX * ((np.ones(b) @ (Xnu_m * BiX)) / tmp)[None, :]
            B2 = np.maximum((n_de - 1) * (n_nu * B0 - B1) / (n_de * (n_nu - 1)), 0.0)
            r_de = (Xde_m * B2).sum(axis=0)
            r_nu = (Xnu_m * B2).sum(axis=0)
            score = r_de @ r_de / 2 / n_min - r_nu.sum() / n_min
            rows.append({"sigma": float(sigma), "lambda": float(lam), "score": float(score)})
    return pd.DataFrame(rows)


def default_cv_grid(numerator, denominator):
    pooled = np.concatenate([np.ravel(numerator), np.ravel(denominator)])
    s = float(np.std(pooled)) or 1.0
    return s * np.array([0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0]), np.array([1e-3, 1e-2, 0.03, 0.1, 0.3, 1.0])


def ulsif_cv(numerator, denominator, sigmas=None, lambdas=None, n_centers=None, seed=0) -> UlsifModel:
    """uLSIF with (sigma, lambda) chosen by the leave-one-out criterion.

    Ties go to the smaller (sigma, lambda) pair.
    """
    if sigmas is None or lambdas is None:
        s_def, l_def = default_cv_grid(numerator, denominator)
        sigmas = s_def if sigmas is None else sigmas
        lambdas = l_def if lambdas is None else lambdas
    scores = ulsif_loocv(numerator, denominator, sigmas, lambdas, n_centers, seed)
    best = scores.sort_values(["score", "sigma", "lambda"], kind="mergesort").iloc[0]
    model = ulsif_fit(numerator, denominator, best["sigma"], best["lambda"], n_centers, seed)
    model.cv_scores = scores
    return model


def ulsif_bootstrap(numerator, denominator, grid, sigma, lam, n_boot=100, seed=0, n_centers=None, level=0.95,
                    simultaneous=False):
    """Bootstrap band of the fitted ratio on ``grid`` from resampling both samples.

    The default is a pointwise percentile band. With ``simultaneous=True`` the
    band is the full-sample fit plus or minus the ``level`` quantile of the
    bootstrap sup-norm deviation, so it covers the whole curve jointly.
    """
    num = np.asarray(numerator, float)
    den = np.asarray(denominator, float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
    curves = np.empty((n_boot, len(grid)))
    for b in range(n_boot):
        nb = num[rng.integers(0, len(num), len(num))]
        db = den[rng.integers(0, len(den), len(den))]
        curves[b] = density_ratio_at(ulsif_fit(nb, db, sigma, lam, n_centers, seed + b + 1), grid)
    if simultaneous:
        center = density_ratio_at(ulsif_fit(num, den, sigma, lam, n_centers, seed), grid)
        c = np.quantile(np.abs(curves - center).max(axis=1), level)
        return center - c, center + c
    a = (1 - level) / 2
    return np.quantile(curves, a, axis=0), np.quantile(curves, 1 - a, axis=0)


def weighted_kde(x, grid, w=None, bandwidth=None):
    """Gaussian kernel density with a weighted Silverman bandwidth."""
    x = np.asarray(x, float)
    w = np.ones(len(x)) if w is None else np.asarray(w, float)
    w = w / w.sum()
    if bandwidth is None:
        n_eff = 1.0 / np.sum(w**2)
        bandwidth = 1.06 * np.sqrt(weighted_var(x, w)) * n_eff ** (-0.2)
    u = (np.asarray(grid, float)[:, None] - x[None, :]) / bandwidth
    return (np.exp(-0.5 * u**2) @ w) / (bandwidth * np.sqrt(2 * np.pi))


def histogram_ratio(num, den, grid, w_num=None, w_den=None, n_bins=20):
    """Ratio of weighted bin shares over denominator-quantile bins."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    wn = np.ones(len(num)) if w_num is None else np.asarray(w_num, float)
    wd = np.ones(len(den)) if w_den is None else np.asarray(w_den, float)
    edges = weighted_quantile(den, np.linspace(0, 1, n_bins + 1), wd)
    edges = np.unique(edges)
    inner = edges[1:-1]
    bn = np.searchsorted(inner, num, side="right")
    bd = np.searchsorted(inner, den, side="right")
    k = len(inner) + 1
    sn = np.bincount(bn, weights=wn, minlength=k) / wn.sum()
    sd = np.bincount(bd, weights=wd, minlength=k) / wd.sum()
    ratio = np.divide(sn, sd, out=np.full(k, np.nan), where=sd > 0)
    return ratio[np.searchsorted(inner, np.asarray(grid, float), side="right")]


@dataclass
class SelectionRuleReport:
    table: pd.DataFrame
    models: dict


def worker_labels(panel) -> pd.DataFrame:
    """Per-worker group (last observed) and labour-market entry year."""
    df = panel.frame
    entry = (df["year"] - df["experience"]).groupby(df["worker_id"]).min()
    group = df.groupby("worker_id")["group"].last()
    weight = df.groupby("worker_id")["survey_weight"].mean()
    return pd.DataFrame({"group": group, "entry_year": entry, "weight": weight})


def selection_rule_report(skills: pd.Series, labels: pd.DataFrame, split_year=2000, sigma=DEFAULT_SIGMA,
                          lam=DEFAULT_LAMBDA, grid=None, n_grid=201, n_centers=None, seed=0,
                          reference=("government", "private")) -> SelectionRuleReport:
    """Selection rule of government workers relative to the reference
    population, pooled and split by entry year (``<= split_year`` vs later).
    """
    lab = labels.reindex(skills.index)
    if lab["group"].isna().any():
        raise SkillcastError("labels missing for some workers")
    z = skills.to_numpy(dtype=float)
    gov = (lab["group"] == "government").to_numpy()
    ref = lab["group"].isin(reference).to_numpy()
    wts = lab["weight"].to_numpy(dtype=float) if "weight" in lab else np.ones(len(z))
    pre = (lab["entry_year"] <= split_year).to_numpy()
    cells = {"all": np.ones(len(z), bool), "pre": pre, "post": ~pre}
    for name, m in cells.items():
        if not (gov & m).any():
            raise SkillcastError(f"no government workers in cell {name!r}")
        if not (ref & m).any():
            raise SkillcastError(f"no reference workers in cell {name!r}")
    if grid is None:
        lo, hi = weighted_quantile(z[ref], [0.01, 0.99], wts[ref])
        grid = np.linspace(lo, hi, n_grid)
    out = {"z": grid}
    models = {}
    for name, m in cells.items():
        model = ulsif_fit(z[gov & m], z[ref & m], sigma, lam, n_centers, seed)
        models[name] = model
        col = "rule" if name == "all" else f"rule_{name}"
        out[col] = density_ratio_at(model, grid)
    dg = weighted_kde(z[gov], grid, wts[gov])
    da = weighted_kde(z[ref], grid, wts[ref])
    out["dens_gov"] = dg
    out["dens_all"] = da
    out["rule_kde"] = np.divide(dg, da, out=np.full(len(grid), np.nan), where=da > 0)
    out["rule_hist"] = histogram_ratio(z[gov], z[ref], grid, wts[gov], wts[ref])
    return SelectionRuleReport(pd.DataFrame(out), models)
