import numpy as np
import pandas as pd
import pytest

from skillcast.errors import IdentificationError
from skillcast.factors import estimate_experience_factors, estimate_worker_loadings, fit_factor_model
from skillcast.panel import Panel
from skillcast.price import SkillPriceSeries
from skillcast.profile import fit_within_quadratic, worker_mean_residual
from skillcast.synth import DgpConfig, FactorSpec, generate_panel


def _private(panel):
    return panel.subset((panel.frame.group == "private").to_numpy())


@pytest.fixture(scope="module")
def noise_free_ones():
    panel, _, truth = generate_panel(DgpConfig(n_workers=3000, seed=2, noise_sd=0.0, factor=FactorSpec(g_dist="ones")))
    return _private(panel), truth


@pytest.fixture(scope="module")
def lognormal():
    panel, _, truth = generate_panel(DgpConfig(n_workers=20000, seed=1, noise_sd=0.0, factor=FactorSpec()))
    return _private(panel), truth


def test_unit_loadings_recover_quadratic_exactly(noise_free_ones):
    panel, truth = noise_free_ones
    fac = estimate_experience_factors(panel, truth.price_series())
    assert fac.delta[0] == 0.0
    ref = truth.delta_e[fac.levels] - truth.delta_e[fac.levels[0]]
    np.testing.assert_allclose(fac.delta, ref, atol=1e-8)


def test_noise_free_loadings_exact(noise_free_ones):
    panel, truth = noise_free_ones
    fit = fit_factor_model(panel, truth.price_series())
    W = truth.workers.loc[fit.workers.worker_id]
    shift = truth.delta_e[fit.factors.levels[0]]
    np.testing.assert_allclose(fit.workers.g, 1.0, atol=1e-8)
    np.testing.assert_allclose(fit.workers.log_z, W.z + W.province_effect + shift, atol=1e-8)


def test_heterogeneous_loadings_track_truth(lognormal):
    panel, truth = lognormal
    fit = fit_factor_model(panel, truth.price_series())
    assert np.corrcoef(fit.factors.delta, truth.delta_e[fit.factors.levels])[0, 1] > 0.95
    W = truth.workers.loc[fit.workers.worker_id]
    assert np.corrcoef(fit.workers.g, W.g)[0, 1] > 0.9


def test_normalisation_rescales_only_loadings(lognormal):
    panel, truth = lognormal
    a = fit_factor_model(panel, truth.price_series(), g_norm=1.0)
    b = fit_factor_model(panel, truth.price_series(), g_norm=2.5)
    np.testing.assert_allclose(b.factors.delta, a.factors.delta / 2.5, atol=1e-12)
    np.testing.assert_allclose(b.workers.g, a.workers.g * 2.5, rtol=1e-9)
    np.testing.assert_allclose(b.workers.log_z, a.workers.log_z, atol=1e-9)


def test_unit_loadings_agree_with_quadratic_signal(noise_free_ones):
    panel, truth = noise_free_ones
    price = truth.price_series()
    fit = fit_factor_model(panel, price)
    sig = worker_mean_residual(panel, price, fit_within_quadratic(panel, price)).frame.set_index("worker_id")
    zhat = sig.zbar.loc[fit.workers.worker_id]
    assert np.corrcoef(zhat, fit.workers.log_z)[0, 1] > 0.999


def _frame(rows):
    df = pd.DataFrame(rows, columns=["worker_id", "year", "experience", "log_wage"])
    return df.assign(group="private", occupation="o", sector="s", province="p", birth_year=1970, male=True,
                     survey_weight=1.0, analysis_weight=1.0)


def test_single_level_is_unidentified():
    rows = [(f"w{i}", 2000 + t, 5.0, 0.1 * i) for i in range(40) for t in range(2)]
    price = SkillPriceSeries.from_log_price(np.array([2000, 2001]), np.zeros(2))
    with pytest.raises(IdentificationError):
        estimate_experience_factors(Panel(_frame(rows)), price, min_cell=5)


def test_thin_levels_dropped_and_constant_experience_skipped():
    rows = []
    for i in range(40):
        for t, e in enumerate((1, 2, 3)):
            rows.append((f"w{i}", 2000 + t, float(e), 0.1 * i + 0.05 * e))
    rows += [("stuck", 2000, 2.0, 0.3), ("stuck", 2001, 2.0, 0.3)]
    rows += [("late", 2000, 9.0, 0.3), ("late", 2001, 10.0, 0.35)]
    price = SkillPriceSeries.from_log_price(np.array([2000, 2001, 2002]), np.zeros(3))
    fit = fit_factor_model(Panel(_frame(rows)), price, min_cell=5)
    assert set(fit.factors.dropped) == {9, 10}
    np.testing.assert_allclose(fit.factors.delta, [0.0, 0.05, 0.10], atol=1e-12)
    assert "stuck" not in set(fit.workers.worker_id)
    assert "late" not in set(fit.workers.worker_id)
    assert fit.n_skipped == 2
    assert fit.workers.small_t.all()


def test_zero_normalisation_rejected(noise_free_ones):
    panel, truth = noise_free_ones
    with pytest.raises(IdentificationError):
        estimate_experience_factors(panel, truth.price_series(), g_norm=0)


def test_loading_precision_improves_with_length():
    panel, _, truth = generate_panel(DgpConfig(n_workers=20000, seed=1, mean_spell=8, factor=FactorSpec()))
    panel = _private(panel)
    fit = fit_factor_model(panel, truth.price_series())
    W = truth.workers.loc[fit.workers.worker_id]
    tz = (W.z + W.province_effect).to_numpy()
    bins = pd.cut(fit.workers.n_levels, [1, 4, 8, 50])
    df = pd.DataFrame({"a": fit.workers.log_z.to_numpy(), "b": tz})
    corr = df.groupby(bins.to_numpy(), observed=True)[["a", "b"]].apply(lambda d: np.corrcoef(d.a, d.b)[0, 1])
    assert corr.is_monotonic_increasing
