"""Fitted skill predictors and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..errors import SchemaError
from ..panel import CovariateMatrix
from .ensembles import GradientBoosting, RandomForest, normalize_importance
from .linear import expand_like
from .trees import Tree

FAMILIES = ("edu_ols", "basis", "lasso", "random_forest", "gbm")


class LinearPredictor:
    """``intercept + coef . z`` where ``z`` are selected (and optionally
    expanded) input columns."""

    def __init__(self, columns, intercept, coef, spec=None):
        self.columns = [int(c) for c in columns]
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.spec = None if spec is None else [tuple(int(a) for a in s) for s in spec]

    def design(self, X):
        Z = np.asarray(X, dtype=float)[:, self.columns]
        return Z if self.spec is None else expand_like(Z, self.spec)

    def predict(self, X):
        return self.intercept + self.design(X) @ self.coef

    def to_dict(self):
        return {"columns": self.columns, "intercept": self.intercept, "coef": self.coef.tolist(),
                "spec": None if self.spec is None else [list(s) for s in self.spec]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["columns"], d["intercept"], d["coef"], d.get("spec"))


@dataclass
class LearnerModel:
    family: str
    hyperparams: dict
    feature_names: list
    predictor: object
    diagnostics: dict = field(default_factory=dict)
    term_names: list | None = None

    def _matrix(self, covariates) -> np.ndarray:
        if isinstance(covariates, CovariateMatrix):
            missing = [c for c in self.feature_names if c not in covariates.names]
            if missing:
                raise SchemaError(f"covariates lack training columns: {missing}")
            pos = [covariates.names.index(c) for c in self.feature_names]
            return covariates.X[:, pos]
        X = np.asarray(covariates, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected {len(self.feature_names)} columns {self.feature_names}")
        return X

    def predict_matrix(self, X) -> np.ndarray:
        return self.predictor.predict(self._matrix(X))

    def predict(self, covariates: CovariateMatrix) -> pd.Series:
        """Predicted skill ``f(x)`` for every worker in ``covariates``."""
        return pd.Series(self.predict_matrix(covariates), index=pd.Index(covariates.worker_ids, name="worker_id"),
                         name="fhat")

    def raw_importance(self) -> np.ndarray | None:
        if hasattr(self.predictor, "importance"):
            return self.predictor.importance()
        return None

    def variable_importance(self) -> pd.Series:
        """Accumulated split improvements per feature, scaled so the top one is 100."""
        imp = self.raw_importance()
        if imp is None:
            raise TypeError(f"{self.family} models have no split importances")
        return pd.Series(normalize_importance(imp), index=self.feature_names, name="importance")

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        p = self.predictor
        if isinstance(p, LinearPredictor):
            state = {"kind": "linear", **p.to_dict()}
        elif isinstance(p, GradientBoosting):
            state = {"kind": "gbm", "base_score": p.base_score, "shrinkage": p.shrinkage,
                     "params": p.params, "trees": [t.to_dict() for t in p.trees]}
        elif isinstance(p, RandomForest):
            state = {"kind": "random_forest", "params": p.params, "trees": [t.to_dict() for t in p.trees]}
        else:
            raise TypeError(f"cannot serialise predictor {type(p).__name__}")
        return {
            "family": self.family,
            "hyperparams": self.hyperparams,
            "feature_names": list(self.feature_names),
            "term_names": self.term_names,
            "diagnostics": self.diagnostics,
            "state": state,
        }

    @classmethod
    def from_dict(cls, d) -> "LearnerModel":
        st = d["state"]
        p = len(d["feature_names"])
        if st["kind"] == "linear":
            pred = LinearPredictor.from_dict(st)
        elif st["kind"] == "gbm":
            pred = GradientBoosting([Tree.from_dict(t) for t in st["trees"]], st["base_score"], st["shrinkage"],
                                    p, st["params"])
        elif st["kind"] == "random_forest":
            pred = RandomForest([Tree.from_dict(t) for t in st["trees"]], p, st["params"])
        else:
            raise SchemaError(f"unknown model kind {st['kind']!r}")
        return cls(d["family"], d["hyperparams"], d["feature_names"], pred, d.get("diagnostics", {}),
                   d.get("term_names"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "LearnerModel":
        return cls.from_dict(json.loads(Path(path).read_text()))
