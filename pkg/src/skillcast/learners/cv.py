"""Shared k-fold harness: grid search, refits and out-of-fold diagnostics."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ConfigError, SchemaError
from ..fe import independent_columns
from ..panel import CovariateMatrix
from ..stats import weighted_r2
from .ensembles import GradientBoosting, RandomForest, stream_seed
from .folds import FoldAssignment, make_folds
from .lasso import lambda_max, lambda_path, lasso_path
from .linear import EDU_PREFIX, basis_expand, wls_fit
from .model import FAMILIES, LearnerModel, LinearPredictor
from .trees import presort

log = logging.getLogger(__name__)

INSTRUMENT_COLUMNS = ("parent_private",)

PAPER_GRIDS = {
    "edu_ols": {},
    "basis": {},
    "lasso": {"n_lambda": [100], "ratio": [1e-3]},
    "random_forest": {"min_node": [5, 10], "mtry": ["sqrt", "third", "half"], "n_trees": [300, 500, 800]},
    "gbm": {"bag": [0.6, 0.8], "depth": [4, 6], "n_trees": [200, 400], "shrinkage": [0.05, 0.1]},
}
_FAMILY_CODE = {f: i for i, f in enumerate(FAMILIES)}


@dataclass
class TrainingData:
    worker_ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    names: list
    kinds: dict

    def take(self, rows):
        return TrainingData(self.worker_ids[rows], self.X[rows], self.y[rows], self.w[rows], self.names, self.kinds)


def training_data(signals, covariates: CovariateMatrix, weights=None, exclude=INSTRUMENT_COLUMNS) -> TrainingData:
    """Align worker-level signals, weights and covariates.

    ``signals`` is a Series of ``zhat`` indexed by worker id, or anything with
    ``zhat`` / ``weights`` Series attributes. Columns named in ``exclude``
    (the selection instrument) never enter a learner.
    """
    if hasattr(signals, "zhat"):
        if weights is None:
            weights = signals.weights
        signals = signals.zhat
    y = pd.Series(signals).astype(float)
    w = pd.Series(1.0, index=y.index) if weights is None else pd.Series(weights).reindex(y.index)
    if w.isna().any():
        raise SchemaError("weights missing for some workers")
    cov = covariates.drop([c for c in exclude if c in covariates.names])
    ids = y.index.to_numpy().astype(str)
    rows = cov.rows(ids)
    return TrainingData(ids, cov.X[rows], y.to_numpy(), w.to_numpy(dtype=float), list(cov.names), cov.kinds)


def resolve_mtry(v, p) -> int:
    if isinstance(v, str):
        m = {"sqrt": np.sqrt(p), "third": p / 3, "half": p / 2}[v]
    else:
        m = v
    return int(min(max(1, int(np.floor(m))), p))


def expand_grid(family, grid, p):
    """Config dicts in sorted-key order with ``mtry`` resolved to an integer."""
    keys = sorted(grid)
    out = []
    for vals in itertools.product(*(grid[k] for k in keys)):
        cfg = dict(zip(keys, vals))
        if "mtry" in cfg:
            cfg["mtry"] = resolve_mtry(cfg["mtry"], p)
        if cfg not in out:
            out.append(cfg)
    return out


def _key(cfg):
    return tuple(cfg[k] for k in sorted(cfg))


# -- per-family fitting -----------------------------------------------------


def _edu_columns(names):
    cols = [j for j, n in enumerate(names) if n.startswith(EDU_PREFIX)]
    if not cols:
        raise SchemaError(f"no education dummies (columns starting with {EDU_PREFIX!r})")
    return cols


def fit_edu_ols(d: TrainingData):
    cols = _edu_columns(d.names)
    Z = np.column_stack([np.ones(len(d.y)), d.X[:, cols]])
    keep = [j - 1 for j in independent_columns(Z, d.w) if j > 0]
    dropped = [d.names[cols[j]] for j in range(len(cols)) if j not in keep]
    use = [cols[j] for j in keep]
    b0, b, _ = wls_fit(d.y, d.X[:, use], d.w)
    return LinearPredictor(use, b0, b), {"dropped": dropped}


def fit_basis(d: TrainingData):
    M, terms, spec = basis_expand(d.X, d.names, d.kinds, return_spec=True)
    b0, b, rank = wls_fit(d.y, M, d.w)
    return LinearPredictor(range(d.X.shape[1]), b0, b, spec), {"rank": rank, "n_terms": len(terms), "terms": terms}


def _lasso_fit(d: TrainingData, lambdas):
    M, terms, spec = basis_expand(d.X, d.names, d.kinds, return_spec=True)
    b0, B, _ = lasso_path(M, d.y, d.w, lambdas)
    return [LinearPredictor(range(d.X.shape[1]), b0[i], B[i], spec) for i in range(len(lambdas))], terms


def _evaluate_fold(family, configs, train: TrainingData, test: TrainingData, fold_id, seed, extra):
    """Predictions on ``test`` for every config, keyed by config tuple."""
    out = {}
    if family == "edu_ols":
        out[()] = fit_edu_ols(train)[0].predict(test.X)
    elif family == "basis":
        out[()] = fit_basis(train)[0].predict(test.X)
    elif family == "lasso":
        preds, _ = _lasso_fit(train, extra["lambdas"])
        for i, pr in enumerate(preds):
            out[(i,)] = pr.predict(test.X)
    elif family == "random_forest":
        order = presort(train.X)
        for (mn, mt), cfgs in itertools.groupby(configs, key=lambda c: (c["min_node"], c["mtry"])):
            cfgs = list(cfgs)
            top = max(c["n_trees"] for c in cfgs)
            rf = RandomForest.fit(train.X, train.y, train.w, top, mt, mn,
                                  seed=stream_seed(seed, fold_id, _FAMILY_CODE[family], mn, mt), order=order)
            staged = rf.staged_predict(test.X, [c["n_trees"] for c in cfgs])
            for c in cfgs:
                out[_key(c)] = staged[c["n_trees"]]
    elif family == "gbm":
        order = presort(train.X)
        group = lambda c: (c["bag"], c["depth"], c["shrinkage"])  # noqa: E731
        for (bag, depth, lr), cfgs in itertools.groupby(sorted(configs, key=group), key=group):
            cfgs = list(cfgs)
            top = max(c["n_trees"] for c in cfgs)
            gb = GradientBoosting.fit(train.X, train.y, train.w, top, depth, lr, bag,
                                      min_node=extra.get("min_node", 10),
                                      seed=stream_seed(seed, fold_id, _FAMILY_CODE[family], depth,
                                                       round(lr * 1e6), round(bag * 1e6)), order=order)
            staged = gb.staged_predict(test.X, [c["n_trees"] for c in cfgs])
            for c in cfgs:
                out[_key(c)] = staged[c["n_trees"]]
    else:
        raise ConfigError(f"unknown learner family {family!r}")
    return out


@dataclass
class GridResult:
    family: str
    folds: FoldAssignment
    best: dict
    table: pd.DataFrame
    oof: np.ndarray
    fold_r2: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def oof_r2(self) -> float:
        return float(self.fold_r2.mean())


def grid_search_cv(family, grid, folds: FoldAssignment, data: TrainingData, seed=0, threads=1, min_node_gbm=10):
    """Exhaustive search by mean per-fold weighted out-of-fold R^2.

    Ties go to the lexicographically smallest hyperparameter tuple (keys in
    sorted order). Every config is evaluated on the same ``folds``.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown learner family {family!r}")
    if family in ("random_forest", "gbm") and not grid:
        raise ConfigError("empty hyperparameter grid")
    if any(len(v) == 0 for v in grid.values()):
        raise ConfigError("empty hyperparameter grid")
    fold = folds.fold_of(data.worker_ids)
    extra = {"min_node": min_node_gbm}
    if family == "lasso":
        n_lambda = int(grid.get("n_lambda", [100])[0])
        ratio = float(grid.get("ratio", [1e-3])[0])
        M, _ = basis_expand(data.X, data.names, data.kinds)
        lambdas = lambda_path(lambda_max(M, data.y, data.w), n_lambda, ratio)
        extra["lambdas"] = lambdas
        configs = [{"lambda_index": i} for i in range(len(lambdas))]
        keys = [(i,) for i in range(len(lambdas))]
    elif family in ("edu_ols", "basis"):
        configs, keys = [{}], [()]
    else:
        configs = expand_grid(family, grid, data.X.shape[1])
        keys = [_key(c) for c in configs]

    def run(f):
        tr = np.flatnonzero(fold != f)
        te = np.flatnonzero(fold == f)
        return _evaluate_fold(family, configs, data.take(tr), data.take(te), f, seed, extra)

    fold_ids = list(range(folds.k))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, fold_ids))
    else:
        results = [run(f) for f in fold_ids]

    rows = []
    oof_all = {}
    for cfg, key in zip(configs, keys):
        oof = np.empty(len(data.y))
        r2s = np.empty(folds.k)
        for f, res in zip(fold_ids, results):
            te = fold == f
            oof[te] = res[key]
            r2s[f] = weighted_r2(data.y[te], res[key], data.w[te])
        oof_all[key] = (oof, r2s)
        row = dict(cfg)
        if family == "lasso":
            row["lambda"] = float(extra["lambdas"][cfg["lambda_index"]])
        row.update(mean_oof_r2=r2s.mean(), pooled_oof_r2=weighted_r2(data.y, oof, data.w),
                   fold_r2=r2s.tolist())
        rows.append(row)
    table = pd.DataFrame(rows)
    scores = table["mean_oof_r2"].to_numpy()
    best_score = scores.max()
    tied = [k for k, s in zip(keys, scores) if s == best_score]
    best_key = min(tied)
    best = configs[keys.index(best_key)]
    oof, r2s = oof_all[best_key]
    log.info("%s: best %s mean oof R2 %.4f", family, best, best_score)
    return GridResult(family, folds, dict(best), table, oof, r2s, extra)


def refit(family, best, data: TrainingData, seed=0, extra=None, k=10):
    """Fit the chosen configuration on the full training sample."""
    extra = extra or {}
    info = {}
    full_id = k  # fold label reserved for the full-sample stream
    if family == "edu_ols":
        pred, info = fit_edu_ols(data)
    elif family == "basis":
        pred, info = fit_basis(data)
    elif family == "lasso":
        lambdas = extra["lambdas"][: best["lambda_index"] + 1]
        preds, terms = _lasso_fit(data, lambdas)
        pred = preds[-1]
        info = {"lambda": float(lambdas[-1]), "terms": terms,
                "active": [t for t, b in zip(terms, pred.coef) if b != 0]}
    elif family == "random_forest":
        pred = RandomForest.fit(data.X, data.y, data.w, best["n_trees"], best["mtry"], best["min_node"],
                                seed=stream_seed(seed, full_id, _FAMILY_CODE[family], best["min_node"], best["mtry"]))
    elif family == "gbm":
        pred = GradientBoosting.fit(
            data.X, data.y, data.w, best["n_trees"], best["depth"], best["shrinkage"], best["bag"],
            min_node=extra.get("min_node", 10),
            seed=stream_seed(seed, full_id, _FAMILY_CODE[family], best["depth"],
                             round(best["shrinkage"] * 1e6), round(best["bag"] * 1e6)))
    else:
        raise ConfigError(f"unknown learner family {family!r}")
    return pred, info


def train_family(family, data: TrainingData, folds: FoldAssignment, grid=None, seed=0, threads=1) -> LearnerModel:
    grid = PAPER_GRIDS[family] if grid is None else grid
    gr = grid_search_cv(family, grid, folds, data, seed=seed, threads=threads)
    pred, info = refit(family, gr.best, data, seed=seed, extra=gr.extra, k=folds.k)
    fitted = pred.predict(data.X)
    diag = {
        "in_sample_r2": weighted_r2(data.y, fitted, data.w),
        "oof_r2": gr.oof_r2,
        "oof_r2_pooled": weighted_r2(data.y, gr.oof, data.w),
        "fold_r2": gr.fold_r2.tolist(),
        "n_train": int(len(data.y)),
        "n_configs": int(len(gr.table)),
    }
    terms = info.pop("terms", None)
    diag.update({k: v for k, v in info.items()})
    hyper = dict(gr.best)
    if family == "lasso":
        hyper["lambda"] = info["lambda"]
    model = LearnerModel(family, hyper, list(data.names), pred, diag, terms)
    model.grid = gr
    return model


def train_edu_ols(data, folds, **kw):
    return train_family("edu_ols", data, folds, **kw)


def train_basis(data, folds, **kw):
    return train_family("basis", data, folds, **kw)


def train_lasso(data, folds, **kw):
    return train_family("lasso", data, folds, **kw)


def train_random_forest(data, folds, **kw):
    return train_family("random_forest", data, folds, **kw)


def train_gbm(data, folds, **kw):
    return train_family("gbm", data, folds, **kw)


def predict_skills(model: LearnerModel, covariates: CovariateMatrix) -> pd.Series:
    return model.predict(covariates)


def variable_importance(model: LearnerModel) -> pd.Series:
    return model.variable_importance()


@dataclass
class LearnerRun:
    folds: FoldAssignment
    models: dict
    data: TrainingData

    def metrics(self) -> pd.DataFrame:
        rows = []
        for fam, m in self.models.items():
            rows.append({"family": fam, "in_sample_r2": m.diagnostics["in_sample_r2"],
                         "oof_r2": m.diagnostics["oof_r2"], "oof_r2_pooled": m.diagnostics["oof_r2_pooled"],
                         "hyperparams": m.hyperparams})
        return pd.DataFrame(rows)

    def oof(self) -> pd.DataFrame:
        df = pd.DataFrame({"worker_id": self.data.worker_ids, "zhat": self.data.y, "weight": self.data.w,
                           "fold": self.folds.fold_of(self.data.worker_ids)})
        for fam, m in self.models.items():
            df[fam] = m.grid.oof
        return df


def run_learners(signals, covariates, families=FAMILIES, k=10, seed=0, grids=None, threads=1, folds=None,
                 weights=None) -> LearnerRun:
    """Train every requested family on one shared fold assignment."""
    data = training_data(signals, covariates, weights)
    if folds is None:
        folds = make_folds(data.worker_ids, k, seed)
    grids = grids or {}
    models = {}
    for fam in families:
        models[fam] = train_family(fam, data, folds, grid=grids.get(fam), seed=seed, threads=threads)
    return LearnerRun(folds, models, data)
