import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm

from skillcast.errors import ConfigError, SchemaError
from skillcast.learners import (
    PAPER_GRIDS,
    LearnerModel,
    TrainingData,
    grid_search_cv,
    make_folds,
    run_learners,
    train_family,
)
from skillcast.learners.cv import expand_grid, training_data
from skillcast.learners.ensembles import GradientBoosting, RandomForest
from skillcast.learners.lasso import kkt_violation, lambda_max, lambda_path, lasso_path
from skillcast.learners.linear import basis_expand
from skillcast.stats import weighted_r2


def _data(rng, n=600, p=4, f=None, noise=0.3, weights=False):
    X = rng.normal(size=(n, p))
    X[:, -1] = rng.random(n) < 0.4
    sig = f(X) if f is not None else X[:, 0] + X[:, 1] * X[:, 2]
    y = sig + noise * rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, n) if weights else np.ones(n)
    names = [f"x{j}" for j in range(p - 1)] + ["edu_high"]
    kinds = {n_: "continuous" for n_ in names[:-1]} | {"edu_high": "dummy"}
    ids = np.array([f"w{i:05d}" for i in range(n)])
    return TrainingData(ids, X, y, w, names, kinds)


# -- folds ------------------------------------------------------------------


def test_folds_singletons_and_sizes():
    f = make_folds([f"w{i}" for i in range(10)], k=10, seed=3)
    assert sorted(f.fold.tolist()) == list(range(10))
    big = make_folds(np.arange(13311).astype(str), k=10, seed=1)
    assert set(big.sizes().tolist()) == {1331, 1332}


def test_folds_deterministic_and_seeded():
    ids = np.arange(500).astype(str)
    a, b, c = make_folds(ids, 10, 4), make_folds(ids, 10, 4), make_folds(ids, 10, 5)
    np.testing.assert_array_equal(a.fold, b.fold)
    assert not np.array_equal(a.fold, c.fold)


@pytest.mark.parametrize("k", [1, 11])
def test_folds_reject_bad_k(k):
    with pytest.raises(ConfigError):
        make_folds(np.arange(10).astype(str), k=k)


# -- linear families --------------------------------------------------------


def test_constant_signal_gives_intercept_only(rng):
    d = _data(rng)
    d.y[:] = 1.7
    folds = make_folds(d.worker_ids, 5, 0)
    for fam in ("edu_ols", "basis"):
        m = train_family(fam, d, folds)
        np.testing.assert_allclose(m.predictor.coef, 0.0, atol=1e-10)
        assert m.predictor.intercept == pytest.approx(1.7)


def test_edu_ols_matches_wls(rng):
    d = _data(rng, weights=True)
    m = train_family("edu_ols", d, make_folds(d.worker_ids, 5, 0))
    ref = sm.WLS(d.y, sm.add_constant(d.X[:, -1]), weights=d.w).fit()
    assert m.predictor.intercept == pytest.approx(ref.params[0], abs=1e-10)
    np.testing.assert_allclose(m.predictor.coef, ref.params[1:], atol=1e-10)


def test_basis_single_dummy_equals_ols(rng):
    x = (rng.random(300) < 0.5).astype(float)[:, None]
    M, names = basis_expand(x, ["d"], {"d": "dummy"})
    assert names == ["d"]
    np.testing.assert_array_equal(M, x)


def test_basis_expansion_order():
    X = np.array([[1.0, 2.0, 0.0], [3.0, 5.0, 1.0], [2.0, 1.0, 1.0]])
    _, names = basis_expand(X, ["a", "b", "c"], {"a": "continuous", "b": "continuous", "c": "dummy"})
    assert names == ["a", "b", "c", "a^2", "b^2", "a*b", "a*c", "b*c"]


def test_basis_overfits_small_sample(rng):
    d = _data(rng, n=500, p=12)
    folds = make_folds(d.worker_ids, 10, 0)
    basis = train_family("basis", d, folds)
    lasso = train_family("lasso", d, folds)
    assert basis.diagnostics["oof_r2"] < lasso.diagnostics["oof_r2"]
    assert basis.diagnostics["in_sample_r2"] > basis.diagnostics["oof_r2"]


# -- lasso ------------------------------------------------------------------


def test_lasso_at_lambda_max_is_mean(rng):
    d = _data(rng, weights=True)
    lmax = lambda_max(d.X, d.y, d.w)
    b0, B, _ = lasso_path(d.X, d.y, d.w, [lmax, 2 * lmax])
    np.testing.assert_array_equal(B, 0.0)
    np.testing.assert_allclose(b0, np.average(d.y, weights=d.w))


def test_lasso_zero_penalty_is_ols(rng):
    d = _data(rng, weights=True)
    b0, B, _ = lasso_path(d.X, d.y, d.w, [0.0], tol=1e-12)
    ref = sm.WLS(d.y, sm.add_constant(d.X), weights=d.w).fit().params
    assert b0[0] == pytest.approx(ref[0], abs=1e-6)
    np.testing.assert_allclose(B[0], ref[1:], atol=1e-6)


def test_lasso_kkt_along_path(rng):
    d = _data(rng, p=8, weights=True)
    M, _ = basis_expand(d.X, d.names, d.kinds)
    lams = lambda_path(lambda_max(M, d.y, d.w), 30, 1e-3)
    b0, B, _ = lasso_path(M, d.y, d.w, lams)
    for lam, a, b in zip(lams, b0, B):
        assert kkt_violation(M, d.y, d.w, lam, a, b) < 1e-6


def test_lasso_recovers_sparse_support(rng):
    n, p = 2000, 25
    X = rng.normal(size=(n, p))
    y = 1.0 * X[:, 2] - 0.8 * X[:, 7] + 0.6 * X[:, 19] + 0.5 * rng.normal(size=n)
    names = [f"v{j:02d}" for j in range(p)]
    d = TrainingData(np.arange(n).astype(str), X, y, np.ones(n), names, {})
    folds = make_folds(d.worker_ids, 10, 0)
    gr = grid_search_cv("lasso", {"n_lambda": [60], "ratio": [1e-3]}, folds, d)
    lam = gr.extra["lambdas"][: gr.best["lambda_index"] + 1]
    _, B, _ = lasso_path(X, y, np.ones(n), lam)
    big = set(np.flatnonzero(np.abs(B[-1]) > 0.1))
    assert big == {2, 7, 19}


# -- trees ------------------------------------------------------------------


def test_random_forest_single_leaf_is_weighted_mean(rng):
    d = _data(rng, n=200, weights=True)
    rf = RandomForest.fit(d.X, d.y, d.w, n_trees=20, mtry=2, min_node=10_000, seed=1)
    pred = rf.predict(d.X)
    assert np.ptp(pred) < 1e-12
    # bootstrap means scatter around the weighted mean
    assert pred[0] == pytest.approx(np.average(d.y, weights=d.w), abs=0.2)
    assert all(t.n_leaves == 1 for t in rf.trees)


@pytest.mark.parametrize("kw", [{"n_trees": 0}, {"n_trees": 30, "shrinkage": 0.0}])
def test_gbm_degenerate_is_weighted_mean(rng, kw):
    d = _data(rng, n=200, weights=True)
    gb = GradientBoosting.fit(d.X, d.y, d.w, **kw)
    np.testing.assert_allclose(gb.predict(d.X), np.average(d.y, weights=d.w), rtol=0, atol=1e-12)


def test_gbm_importance_single_feature(rng):
    n = 1000
    X = rng.normal(size=(n, 5))
    y = np.sin(2 * X[:, 3])
    gb = GradientBoosting.fit(X, y, np.ones(n), n_trees=50, depth=4, shrinkage=0.1, bag=0.8, seed=2)
    model = LearnerModel("gbm", {}, list("abcde"), gb)
    imp = model.variable_importance()
    assert imp["d"] == 100.0
    assert imp.drop("d").max() < 0.5


def test_gbm_importance_symmetric_features(rng):
    n = 4000
    X = rng.normal(size=(n, 3))
    y = X[:, 0] + X[:, 1] + 0.3 * rng.normal(size=n)
    gb = GradientBoosting.fit(X, y, np.ones(n), n_trees=100, depth=4, shrinkage=0.1, seed=3)
    imp = LearnerModel("gbm", {}, ["a", "b", "c"], gb).variable_importance()
    assert min(imp["a"], imp["b"]) / max(imp["a"], imp["b"]) > 0.8
    assert imp["c"] < 10


def test_zero_tree_importance_is_zero(rng):
    d = _data(rng, n=100)
    gb = GradientBoosting.fit(d.X, d.y, d.w, n_trees=0)
    imp = LearnerModel("gbm", {}, d.names, gb).variable_importance()
    np.testing.assert_array_equal(imp.to_numpy(), 0.0)


def test_forest_beats_edu_ols_on_interactions(rng):
    d = _data(rng, n=1500, f=lambda X: 0.3 * X[:, 3] + np.where(X[:, 0] > 0, X[:, 1], -X[:, 1]))
    folds = make_folds(d.worker_ids, 5, 0)
    rf = train_family("random_forest", d, folds, grid={"min_node": [5], "mtry": ["half"], "n_trees": [150]})
    ols = train_family("edu_ols", d, folds)
    assert rf.diagnostics["oof_r2"] > ols.diagnostics["oof_r2"] + 0.03


# -- harness ----------------------------------------------------------------


def test_paper_gbm_grid_has_sixteen_configs():
    assert len(expand_grid("gbm", PAPER_GRIDS["gbm"], 20)) == 16
    assert len(expand_grid("random_forest", PAPER_GRIDS["random_forest"], 20)) == 18


def test_grid_search_single_config_and_empty_grid(rng):
    d = _data(rng, n=300)
    folds = make_folds(d.worker_ids, 5, 0)
    cfg = {"bag": [0.8], "depth": [2], "n_trees": [20], "shrinkage": [0.1]}
    gr = grid_search_cv("gbm", cfg, folds, d)
    assert gr.best == {"bag": 0.8, "depth": 2, "n_trees": 20, "shrinkage": 0.1}
    with pytest.raises(ConfigError):
        grid_search_cv("gbm", {"n_trees": []}, folds, d)
    with pytest.raises(ConfigError):
        grid_search_cv("gbm", {}, folds, d)


def test_grid_search_reports_mean_of_fold_r2(rng):
    d = _data(rng, n=400, weights=True)
    folds = make_folds(d.worker_ids, 5, 0)
    gr = grid_search_cv("gbm", {"bag": [0.8], "depth": [2, 3], "n_trees": [10, 30], "shrinkage": [0.1]}, folds, d)
    fold = folds.fold_of(d.worker_ids)
    r2 = [weighted_r2(d.y[fold == f], gr.oof[fold == f], d.w[fold == f]) for f in range(5)]
    assert gr.oof_r2 == pytest.approx(np.mean(r2), abs=1e-12)
    assert gr.oof_r2 == pytest.approx(gr.table.mean_oof_r2.max(), abs=1e-12)


def test_grid_search_near_oracle(rng):
    d = _data(rng, n=800)
    folds = make_folds(d.worker_ids, 5, 0)
    grid = {"bag": [0.8], "depth": [1, 4], "n_trees": [5, 100], "shrinkage": [0.1]}
    gr = grid_search_cv("gbm", grid, folds, d)
    oracle = gr.table.query("depth == 4 and n_trees == 100").mean_oof_r2.iloc[0]
    assert gr.oof_r2 >= oracle - 0.01


def test_run_learners_shares_folds_and_is_thread_invariant(small_comparable):
    from skillcast.profile import worker_mean_residual

    cs, cov, truth = small_comparable
    sig = worker_mean_residual(cs, truth.price_series(), truth)
    grids = {"gbm": {"bag": [0.8], "depth": [3], "n_trees": [30, 60], "shrinkage": [0.1]},
             "random_forest": {"min_node": [10], "mtry": ["third"], "n_trees": [40]}}
    fams = ("edu_ols", "random_forest", "gbm")
    a = run_learners(sig, cov, families=fams, k=5, seed=1, grids=grids, threads=1)
    b = run_learners(sig, cov, families=fams, k=5, seed=1, grids=grids, threads=3)
    assert all(m.grid.folds is a.folds for m in a.models.values())
    for fam in fams:
        np.testing.assert_array_equal(a.models[fam].grid.oof, b.models[fam].grid.oof)
        np.testing.assert_array_equal(a.models[fam].predict(cov), b.models[fam].predict(cov))


def test_model_json_roundtrip_and_prediction(tmp_path, small_synth):
    panel, cov, truth = small_synth
    y = truth.workers.loc[cov.worker_ids, "z"]
    d = training_data(y, cov)
    folds = make_folds(d.worker_ids, 4, 0)
    for fam, grid in (("lasso", {"n_lambda": [20], "ratio": [1e-2]}), ("basis", None),
                      ("gbm", {"bag": [0.8], "depth": [3], "n_trees": [25], "shrinkage": [0.1]}),
                      ("random_forest", {"min_node": [5], "mtry": ["sqrt"], "n_trees": [15]})):
        m = train_family(fam, d, folds, grid=grid)
        m.save(tmp_path / f"{fam}.json")
        back = LearnerModel.load(tmp_path / f"{fam}.json")
        pred = m.predict(cov)
        np.testing.assert_array_equal(back.predict(cov).to_numpy(), pred.to_numpy())
        # training workers get their in-sample fits
        assert weighted_r2(d.y, pred.loc[d.worker_ids].to_numpy(), d.w) == pytest.approx(
            m.diagnostics["in_sample_r2"], abs=1e-12)


def test_predict_rejects_schema_mismatch(rng):
    d = _data(rng, n=100)
    m = train_family("edu_ols", d, make_folds(d.worker_ids, 5, 0))
    with pytest.raises(SchemaError):
        m.predict_matrix(np.zeros((3, 2)))
    dup = np.vstack([d.X[:1], d.X[:1]])
    p = m.predict_matrix(dup)
    assert p[0] == p[1]


def test_instrument_never_enters_training(small_synth):
    _, cov, truth = small_synth
    y = truth.workers.loc[cov.worker_ids, "z"]
    assert "parent_private" in cov.names
    assert "parent_private" not in training_data(y, cov).names


def test_edu_ols_near_attainable_share(rng):
    n = 4000
    edu = rng.integers(0, 4, n)
    X = np.eye(4)[edu][:, 1:]
    f0 = np.array([0.0, 0.3, 0.6, 1.2])[edu]
    y = f0 + rng.normal(size=n)
    d = TrainingData(np.arange(n).astype(str), X, y, np.ones(n), ["edu_1", "edu_2", "edu_3"], {})
    m = train_family("edu_ols", d, make_folds(d.worker_ids, 10, 0))
    assert m.diagnostics["oof_r2"] == pytest.approx(np.var(f0) / np.var(y), abs=0.05)
