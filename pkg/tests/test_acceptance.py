"""Acceptance criteria, each at its pinned tolerance.

Every test prints one ``criterion N <name>: PASS|FAIL (...)`` line and the
lines are repeated in a summary block at the end of the pytest run. Run
alone with ``pytest tests/test_acceptance.py -v`` or ``-m acceptance``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy.stats import spearmanr

from skillcast.analysis import (
    RegressionSpec,
    analysis_frame,
    cohort_filter_variants,
    weighted_ols_fe,
)
from skillcast.cli import main as cli_main
from skillcast.density_ratio import density_ratio_at, ulsif_bootstrap, ulsif_cv
from skillcast.factors import estimate_experience_factors, fit_factor_model
from skillcast.heckman import inverse_mills, rank_agreement, relearn_skills, robinson_corrected_fit
from skillcast.learners import FAMILIES, run_learners
from skillcast.price import flat_spot_price
from skillcast.profile import ProfileFit, SkillSignals, fit_within_quadratic, worker_mean_residual
from skillcast.propensity import att_weights, comparable_sample, propensity_weights
from skillcast.stats import log_points_to_premium, weighted_r2, weighted_var
from skillcast.synth import (
    DgpConfig,
    FactorSpec,
    SelectionSpec,
    generate_cohort_panel,
    generate_panel,
    generate_selected_panel,
    generate_wage_setting_panel,
)

pytestmark = pytest.mark.acceptance

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


@pytest.fixture(scope="module")
def default_panel():
    """Default synthetic design (20,000 workers, 25 years) and its comparable sample."""
    panel, cov, truth = generate_panel(DgpConfig(seed=0))
    weighted = propensity_weights(panel).panel
    return panel, cov, truth, comparable_sample(weighted)


# -- 1 ----------------------------------------------------------------------


def test_criterion_01_price_oracle(report):
    panel, _, truth = generate_panel(DgpConfig(seed=0))
    t = time.perf_counter()
    cs = comparable_sample(propensity_weights(panel).panel)
    price = flat_spot_price(cs, seed=0)
    elapsed = time.perf_counter() - t
    tl = truth.log_price.to_numpy()
    err = np.abs(price.log_price - (tl - tl[0]))[1:]
    z = (err / price.se[1:]).max()
    ok = bool(z < 3 and elapsed < 30)
    assert report(1, "price oracle", ok, f"max |error|/SE = {z:.2f} < 3, runtime {elapsed:.1f} s < 30 s")


# -- 2 ----------------------------------------------------------------------


def test_criterion_02_profile_oracle(report, default_panel):
    _, _, truth, cs = default_panel
    fit = fit_within_quadratic(cs, truth.price_series())
    z0 = abs(fit.delta0 - truth.delta0) / fit.cluster_se[0]
    z1 = abs(fit.delta1 - truth.delta1) / fit.cluster_se[1]
    nf_panel, _, nf_truth = generate_panel(DgpConfig(seed=0, noise_sd=0.0))
    nf = fit_within_quadratic(nf_panel.subset((nf_panel.frame.group == "private").to_numpy()),
                              nf_truth.price_series())
    exact = max(abs(nf.delta0 - nf_truth.delta0), abs(nf.delta1 - nf_truth.delta1))
    ok = bool(z0 < 3 and z1 < 3 and exact < 1e-8)
    assert report(2, "profile oracle", ok, f"|z| = {z0:.2f}, {z1:.2f} < 3; noise-free error {exact:.1e} < 1e-8")


# -- 3 and 4 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def learner_benchmark(default_panel):
    """All five families with the full tuning grids, 10 folds, 2,000 training workers."""
    _, cov, truth, cs = default_panel
    price = truth.price_series()
    sig = worker_mean_residual(cs, price, fit_within_quadratic(cs, price))
    rng = np.random.default_rng(0)
    ids = np.sort(rng.choice(sig.frame.worker_id.to_numpy(), 2000, replace=False))
    z, w = sig.zhat.loc[ids], sig.weights.loc[ids]
    t = time.perf_counter()
    run = run_learners(z, cov, families=FAMILIES, k=10, seed=0, weights=w)
    elapsed = time.perf_counter() - t
    bound = weighted_var(truth.workers.loc[ids, "f0"].to_numpy(), w.to_numpy()) / weighted_var(z.to_numpy(), w.to_numpy())
    return run, elapsed, bound


def test_criterion_03_learner_ordering(report, learner_benchmark):
    run, elapsed, _ = learner_benchmark
    d = {f: m.diagnostics for f, m in run.models.items()}
    oof = {f: v["oof_r2"] for f, v in d.items()}
    gap = d["basis"]["in_sample_r2"] - oof["basis"]
    ok = bool(oof["gbm"] >= oof["lasso"] - 0.02 and oof["random_forest"] > oof["edu_ols"] and gap >= 0.10
              and elapsed < 600)
    detail = (", ".join(f"{f} {v:.3f}" for f, v in oof.items())
              + f"; basis in-sample minus oof {gap:.3f} >= 0.10; grid run {elapsed:.0f} s < 600 s")
    assert report(3, "learner ordering", ok, detail)


def test_criterion_04_information_bound(report, learner_benchmark):
    run, _, bound = learner_benchmark
    worst = max(m.diagnostics["oof_r2"] for m in run.models.values())
    ok = bool(worst <= bound + 0.05)
    assert report(4, "attainable R2 bound", ok, f"max oof R2 {worst:.3f} <= bound {bound:.3f} + 0.05")


# -- 5 ----------------------------------------------------------------------


def test_criterion_05_min_years(report):
    xs, ys = [], []
    for seed in range(6):
        panel, cov, truth = generate_panel(DgpConfig(n_workers=50_000, seed=seed))
        cs = comparable_sample(propensity_weights(panel).panel)
        price = truth.price_series()
        sig = worker_mean_residual(cs, price, fit_within_quadratic(cs, price))
        for m in range(1, 8):
            s = SkillSignals(sig.frame[sig.frame.n_years >= m].reset_index(drop=True))
            r = run_learners(s, cov, families=("edu_ols",), k=10, seed=seed)
            xs.append(m)
            ys.append(r.models["edu_ols"].diagnostics["oof_r2"])
    rho, p = spearmanr(xs, ys)
    ok = bool(rho > 0 and p < 0.05)
    assert report(5, "min-years monotonicity", ok, f"Spearman {rho:.2f}, p = {p:.1e} over 6 seeds x m=1..7")


# -- 6 ----------------------------------------------------------------------


def test_criterion_06_ulsif(report):
    rng = np.random.default_rng(0)
    den = rng.standard_normal(20_000)
    num = rng.standard_normal(20_000) + 0.5
    grid = np.linspace(*np.quantile(den, [0.1, 0.9]), 101)
    m = ulsif_cv(num, den)
    rel = np.abs(density_ratio_at(m, grid) / np.exp(0.5 * grid - 0.125) - 1).max()
    sub = den[rng.choice(20_000, 5000, replace=False)]
    mu = ulsif_cv(sub, den)
    lo, hi = ulsif_bootstrap(sub, den, grid, mu.sigma, mu.lam, n_boot=100, seed=0, simultaneous=True)
    covered = float(np.mean((lo <= 1) & (1 <= hi)))
    ok = bool(rel < 0.15 and covered == 1.0)
    assert report(6, "uLSIF oracle", ok, f"max relative error {rel:.3f} < 0.15; band covers 1 on {covered:.0%} of grid")


# -- 7 ----------------------------------------------------------------------


def _heckman_reps(rho, reps, direct=0.0, seed0=1000):
    g, se, p = [], [], []
    for s in range(reps):
        cfg = DgpConfig(n_workers=10_600, seed=seed0 + s, selection=SelectionSpec(rho=rho, direct_effect=direct))
        panel, cov, truth = generate_selected_panel(cfg)
        o = robinson_corrected_fit(panel, cov, truth.price_series(), learner="basis", seed=s)
        g.append(o.gamma_imr)
        se.append(o.gamma_se)
        p.append(o.exclusion_p)
    return np.array(g), np.array(se), np.array(p)


def test_criterion_07_heckman(report):
    n_reps = 200
    band = 3 * np.sqrt(0.05 * 0.95 / n_reps)
    g0, s0, p0 = _heckman_reps(0.0, n_reps)
    size_g = float(np.mean(np.abs(g0 / s0) > 1.96))
    size_x = float(np.mean(p0 < 0.05))
    g5, s5, _ = _heckman_reps(0.5, 50, seed0=5000)
    power_g = float(np.mean(g5 / s5 > 1.96))
    _, _, pd_ = _heckman_reps(0.5, 25, direct=0.2, seed0=9000)
    power_x = float(np.mean(pd_ < 0.05))

    cfg = DgpConfig(n_workers=10_600, seed=7, selection=SelectionSpec(rho=0.5))
    panel, cov, truth = generate_selected_panel(cfg)
    price = truth.price_series()
    out = robinson_corrected_fit(panel, cov, price, learner="basis")
    private = panel.subset((panel.frame.group == "private").to_numpy())
    base = worker_mean_residual(private, price, fit_within_quadratic(private, price))
    corrected, _ = relearn_skills(out.signals, cov)
    baseline, _ = relearn_skills(base, cov)
    rank = rank_agreement(corrected, baseline)

    ok = bool(abs(g0[0] / s0[0]) < 3 and abs(size_g - 0.05) <= band and abs(size_x - 0.05) <= band
              and power_g > 0.8 and power_x > 0.8 and rank >= 0.97)
    detail = (f"rho=0: first |t| {abs(g0[0] / s0[0]):.2f} < 3, size {size_g:.3f} (gamma) and {size_x:.3f} "
              f"(exclusion) within {band:.3f} of 0.05 over {n_reps} reps; rho=0.5 power {power_g:.2f} > 0.8; "
              f"exclusion power {power_x:.2f} > 0.8; skill Spearman {rank:.3f} >= 0.97")
    assert report(7, "Heckman correction", ok, detail)


# -- 8 ----------------------------------------------------------------------


def test_criterion_08_identities(report):
    checks = {
        "inverse_mills(0)": abs(inverse_mills(0.0) - 0.7978845608) < 1e-9,
        "att_weights(0.8)": att_weights(np.array([0.8]), np.array([False]))[0] == pytest.approx(4.0, abs=1e-12),
        "premium(0.5)": round(log_points_to_premium(0.5), 6) == 0.648721 and f"{log_points_to_premium(0.5):.0%}" == "65%",
        "premium(0.36)": round(log_points_to_premium(0.36), 6) == 0.433329 and f"{log_points_to_premium(0.36):.0%}" == "43%",
        "r2(mean)": weighted_r2(np.arange(5.0), np.full(5, 2.0)) == 0.0,
    }
    ok = all(checks.values())
    assert report(8, "analytic identities", ok, ", ".join(f"{k} {'ok' if v else 'WRONG'}" for k, v in checks.items()))


# -- 9 ----------------------------------------------------------------------


def test_criterion_09_factors(report):
    panel, _, truth = generate_panel(DgpConfig(seed=0, factor=FactorSpec()))
    priv = panel.subset((panel.frame.group == "private").to_numpy())
    price = truth.price_series()
    a = fit_factor_model(priv, price, g_norm=1.0)
    b = fit_factor_model(priv, price, g_norm=3.0)
    inv = float(np.abs(a.workers.log_z.to_numpy() - b.workers.log_z.to_numpy()).max())
    corr = float(np.corrcoef(a.factors.delta, truth.delta_e[a.factors.levels])[0, 1])

    p1, _, t1 = generate_panel(DgpConfig(seed=0, noise_sd=0.0, factor=FactorSpec(g_dist="ones")))
    fac = estimate_experience_factors(p1.subset((p1.frame.group == "private").to_numpy()), t1.price_series())
    exact = float(np.abs(fac.delta - (t1.delta_e[fac.levels] - t1.delta_e[fac.levels[0]])).max())
    ok = bool(inv < 1e-9 and exact < 1e-8 and corr > 0.95)
    assert report(9, "factor extension", ok,
                  f"normalisation change in log z {inv:.1e} < 1e-9; g=1 error {exact:.1e}; delta corr {corr:.3f} > 0.95")


# -- 10 ---------------------------------------------------------------------


def test_criterion_10_regressions(report):
    true_prof = ProfileFit(0.03, -0.0005, (0.0, 0.0), 0, 0, 0.0, None, "true")
    cl = dict(weight="weight", se="cluster", cluster="worker_id")
    panel, sk = generate_wage_setting_panel(n_workers=6000, premium=0.36, skill_gap=0.14, seed=0)
    f = analysis_frame(panel, sk, true_prof)
    bu, su = weighted_ols_fe(RegressionSpec("log_wage", ["gov"], ["year"], **cl), f)["gov"]
    bc, sc = weighted_ols_fe(RegressionSpec("log_wage", ["gov", "lc_skill"], ["year"], **cl), f)["gov"]

    panel, sk = generate_wage_setting_panel(n_workers=6000, private_gender_gap=-0.39, seed=0)
    f = analysis_frame(panel, sk, true_prof)
    spec = RegressionSpec("log_wage", ["gov", "male", "gov:male", "lc_skill"], ["year"], **cl)
    bg, sg = weighted_ols_fe(spec, f)["gov:male"]

    panel, sk, _ = generate_cohort_panel(mechanism="linear", ges_effect=-1.0, seed=0)
    variants = cohort_filter_variants(analysis_frame(panel, sk))
    bh, sh = variants[25]["level"]["ges"]
    ran = sorted(variants) == [0, 10, 25, 50] and all(len(v) == 6 for v in variants.values())

    zs = {"premium 0.50": (bu - 0.50) / su, "premium 0.36": (bc - 0.36) / sc,
          "gender -0.39": (bg + 0.39) / sg, "cohort -1.0": (bh + 1.0) / sh}
    ok = bool(all(abs(z) < 3 for z in zs.values()) and ran)
    detail = ", ".join(f"{k} z={v:+.2f}" for k, v in zs.items()) + f"; filters 0/10/25/50 {'ran' if ran else 'FAILED'}"
    assert report(10, "regression suite", ok, detail)


# -- 11 ---------------------------------------------------------------------


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timings.json"}


def test_criterion_11_determinism(report, tmp_path):
    codes = [cli_main(["pipeline", "--config", str(SMOKE), "--out-dir", str(tmp_path / d), "--threads", t])
             for d, t in (("a", "1"), ("b", "1"), ("c", "4"))]
    a, b, c = (_tree(tmp_path / d) for d in "abc")
    same_run = a == b
    same_threads = a == c
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    ok = bool(codes == [0, 0, 0] and same_run and same_threads)
    assert report(11, "determinism", ok,
                  f"{len(a)} files; rerun identical {same_run}; threads 1 vs 4 identical {same_threads}; "
                  f"config hash {manifest['config_sha256'][:12]}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
