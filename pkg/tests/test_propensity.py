import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given
from hypothesis import strategies as st

from skillcast.errors import SeparationError
from skillcast.propensity import att_weights, comparable_sample, fit_logit, propensity_weights


def test_att_weight_identity():
    assert att_weights(0.8, False) == pytest.approx(4.0, abs=1e-12)
    assert att_weights(0.8, True) == 1.0


@given(st.floats(1e-4, 1 - 1e-4))
def test_att_weight_is_odds(p):
    assert att_weights(p, False) == pytest.approx(p / (1 - p), rel=1e-12)


def test_att_weight_clipping():
    w, n = att_weights(np.array([1.0, 0.5]), np.array([False, False]), clip=1e-6, return_clipped=True)
    assert n == 1
    assert w[0] == pytest.approx((1 - 1e-6) / 1e-6)


def test_logit_matches_statsmodels(rng):
    n = 2000
    X = rng.normal(size=(n, 3))
    y = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + X @ [1.0, -0.5, 0.2])))).astype(float)
    w = rng.integers(1, 4, n).astype(float)
    fit = fit_logit(X, y, w)
    ref = sm.GLM(y, sm.add_constant(X), family=sm.families.Binomial(), freq_weights=w).fit(tol=1e-12)
    np.testing.assert_allclose(fit.coef, ref.params, rtol=1e-7)
    np.testing.assert_allclose(np.sqrt(np.diag(fit.cov)), ref.bse, rtol=1e-6)
    assert fit.log_likelihood == pytest.approx(ref.llf, rel=1e-9)


def test_logit_separation_names_feature(rng):
    n = 200
    d = (rng.random(n) < 0.5).astype(float)
    y = np.where(d == 1, 1.0, (rng.random(n) < 0.5).astype(float))
    with pytest.raises(SeparationError) as exc:
        fit_logit(np.column_stack([rng.normal(size=n), d]), y, names=["x", "d"])
    assert exc.value.feature == "d"


def test_propensity_weights_zero_for_other_group(small_synth):
    panel, _, _ = small_synth
    res = propensity_weights(panel)
    df = res.panel.frame
    assert (df.loc[df.group == "other", "analysis_weight"] == 0).all()
    gov = df.group == "government"
    np.testing.assert_allclose(df.loc[gov, "analysis_weight"], df.loc[gov, "survey_weight"])
    cs = comparable_sample(res.panel).frame
    assert set(cs.group) == {"private"} and (cs.analysis_weight > 0).all()


def test_null_model_closed_form(rng):
    n = 3000
    X = rng.normal(size=(n, 2))
    y = (rng.random(n) < 0.3).astype(float)
    X[:, 0] = 0.0 + X[:, 0]
    fit = fit_logit(np.ones((n, 0)), y)
    assert fit.coef[0] == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-10)


def test_one_dimensional_recovery(rng):
    n = 50_000
    x = rng.normal(size=n)
    y = (rng.random(n) < 1 / (1 + np.exp(-(-0.5 + 0.8 * x)))).astype(float)
    fit = fit_logit(x[:, None], y)
    se = np.sqrt(np.diag(fit.cov))
    assert abs(fit.coef[1] - 0.8) < 3 * se[1]
    assert abs(fit.coef[0] + 0.5) < 3 * se[0]
