import mpmath
import numpy as np
import pytest
import statsmodels.api as sm

from skillcast.errors import IdentificationError, RankDeficiencyError, SeparationError
from skillcast.heckman import (
    fit_probit,
    inverse_mills,
    rank_agreement,
    robinson_corrected_fit,
    selection_design,
)
from skillcast.synth import DgpConfig, SelectionSpec, generate_selected_panel


def _imr_ref(x):
    x = mpmath.mpf(x)
    return float(mpmath.npdf(x) / mpmath.ncdf(x))


def test_inverse_mills_known_values():
    assert inverse_mills(0.0) == pytest.approx(0.7978845608, abs=1e-10)
    assert inverse_mills(-5.0) == pytest.approx(5.18650396712585, rel=1e-13)
    assert inverse_mills(40.0) == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("x", [-38.0, -12.5, -8.0001, -7.9999, -3.0, 0.5, 6.0])
def test_inverse_mills_matches_high_precision(x):
    assert inverse_mills(x) == pytest.approx(_imr_ref(x), rel=1e-12)


def test_inverse_mills_monotone_positive():
    g = np.linspace(-40, 40, 1_000_001)
    v = inverse_mills(g)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) <= 0)
    assert np.all(v[g < 30] > 0)


def test_probit_matches_statsmodels(rng):
    n = 3000
    X = sm.add_constant(rng.normal(size=(n, 3)))
    s = (X @ [0.2, 0.5, -0.7, 0.3] + rng.normal(size=n) > 0).astype(float)
    fit = fit_probit(X, s, names=["c", "a", "b", "r"], instrument="r")
    ref = sm.Probit(s, X).fit(disp=0, cov_type="HC1")
    np.testing.assert_allclose(fit.coef, ref.params, atol=1e-8)
    # statsmodels HC1 for MLE uses no small-sample factor
    n, k = X.shape
    np.testing.assert_allclose(fit.cov * (n - k) / n, ref.cov_params(), rtol=1e-6)
    assert fit.wald_instrument == pytest.approx((fit.coef[3] / fit.se[3]) ** 2)


def test_probit_weighted_equals_replication(rng):
    n = 400
    X = sm.add_constant(rng.normal(size=(n, 2)))
    s = (X @ [0.1, 0.8, -0.4] + rng.normal(size=n) > 0).astype(float)
    w = rng.integers(1, 4, n).astype(float)
    rep = np.repeat(np.arange(n), w.astype(int))
    a = fit_probit(X, s, w)
    b = fit_probit(X[rep], s[rep])
    np.testing.assert_allclose(a.coef, b.coef, atol=1e-9)


def test_probit_errors(rng):
    X = sm.add_constant(rng.normal(size=(200, 2)))
    with pytest.raises(IdentificationError):
        fit_probit(X, np.ones(200))
    Xc = np.column_stack([X, 2 * X[:, 1]])
    with pytest.raises(RankDeficiencyError):
        fit_probit(Xc, (X[:, 1] > 0.3).astype(float))
    s = (X[:, 1] > 0).astype(float)
    with pytest.raises(SeparationError):
        fit_probit(X, s)
    r = np.zeros((200, 1))
    Xr = np.column_stack([X, r])
    s2 = (X[:, 1] + rng.normal(size=200) > 0).astype(float)
    with pytest.raises((RankDeficiencyError, IdentificationError)):
        fit_probit(Xr, s2, names=["c", "a", "b", "r"], instrument="r")


def test_probit_instrument_coefficient_recovered():
    cfg = DgpConfig(n_workers=6000, seed=21, selection=SelectionSpec(rho=0.5))
    panel, cov, truth = generate_selected_panel(cfg)
    base = panel.subset(panel.frame.group.isin(["government", "private"]).to_numpy())
    Z, names = selection_design(base, cov)
    s = (base.frame.group == "private").to_numpy(float)
    fit = fit_probit(Z, s, names=names, instrument="parent_private")
    b, se = fit.coefficients["parent_private"], fit.se[names.index("parent_private")]
    assert abs(b - 0.3) < 3 * se


@pytest.fixture(scope="module")
def corrected():
    out = {}
    for rho in (0.0, 0.5):
        cfg = DgpConfig(n_workers=6000, seed=31, selection=SelectionSpec(rho=rho))
        panel, cov, truth = generate_selected_panel(cfg)
        out[rho] = robinson_corrected_fit(panel, cov, truth.price_series(), learner="basis", seed=1), truth
    return out


def test_no_selection_gamma_is_null(corrected):
    o, _ = corrected[0.0]
    assert abs(o.gamma_imr) < 3 * o.gamma_se


def test_selection_gamma_is_positive(corrected):
    o, _ = corrected[0.5]
    assert o.gamma_imr > 2 * o.gamma_se
    assert np.isfinite(o.exclusion_wald) and 0 <= o.exclusion_p <= 1


def test_corrected_profile_is_finite_and_summarised(corrected):
    o, truth = corrected[0.5]
    s = o.summary()
    assert set(s) >= {"gamma_imr", "delta0", "delta1", "exclusion_p"}
    assert o.profile.method == "heckman"
    assert abs(o.delta0 - truth.delta0) < 0.02


def test_rank_agreement_identity(rng):
    import pandas as pd

    a = pd.Series(rng.normal(size=50), index=[f"w{i}" for i in range(50)])
    assert rank_agreement(a, 2 * a + 1) == pytest.approx(1.0)
