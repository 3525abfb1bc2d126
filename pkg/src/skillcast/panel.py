"""Worker-year panels and worker-level covariate matrices."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import SchemaError

PANEL_COLUMNS = (
    "worker_id",
    "year",
    "log_wage",
    "experience",
    "group",
    "occupation",
    "sector",
    "province",
    "birth_year",
    "male",
    "survey_weight",
)
GROUPS = ("government", "private", "other")

_DTYPES = {
    "worker_id": str,
    "occupation": str,
    "sector": str,
    "province": str,
    "group": str,
}


class Panel:
    """Long worker-year table, sorted by (worker_id, year).

    ``analysis_weight`` defaults to ``survey_weight`` until the propensity stage
    overwrites it. The underlying frame is shared; treat it as read-only and use
    :meth:`with_columns` / :meth:`subset` to derive new panels.
    """

    def __init__(self, frame: pd.DataFrame, validate: bool = True):
        missing = [c for c in PANEL_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"panel is missing columns: {missing}")
        df = frame.copy()
        df["worker_id"] = df["worker_id"].astype(str)
        df["year"] = df["year"].astype(np.int64)
        df["birth_year"] = df["birth_year"].astype(np.int64)
        df["male"] = df["male"].astype(bool)
        for col in ("log_wage", "experience", "survey_weight"):
            df[col] = df[col].astype(float)
        for col in ("occupation", "sector", "province", "group"):
            df[col] = df[col].astype(str)
        if "analysis_weight" not in df.columns:
            df["analysis_weight"] = df["survey_weight"]
        df["analysis_weight"] = df["analysis_weight"].astype(float)
        df = df.sort_values(["worker_id", "year"], kind="mergesort").reset_index(drop=True)
        self._df = df
        self._index = None
        self._codes = None
        if validate:
            self._validate()

    def _validate(self):
        df = self._df
        if (df["experience"] < 0).any():
            raise SchemaError("experience must be nonnegative")
        if not (df["survey_weight"] > 0).all():
            raise SchemaError("survey_weight must be strictly positive")
        if (df["analysis_weight"] < 0).any():
            raise SchemaError("analysis_weight must be nonnegative")
        bad = ~df["group"].isin(GROUPS)
        if bad.any():
            raise SchemaError(f"unknown group labels: {sorted(df.loc[bad, 'group'].unique())}")
        same = df["worker_id"].to_numpy()[1:] == df["worker_id"].to_numpy()[:-1]
        if np.any(same & (np.diff(df["year"].to_numpy()) <= 0)):
            raise SchemaError("(worker_id, year) must be unique")

    @property
    def frame(self) -> pd.DataFrame:
        return self._df

    def __len__(self):
        return len(self._df)

    def __repr__(self):
        return f"Panel({len(self)} obs, {self.n_workers} workers)"

    @property
    def worker_codes(self) -> np.ndarray:
        """Dense integer worker codes in sorted worker order."""
        if self._codes is None:
            ids = self._df["worker_id"].to_numpy()
            change = np.r_[True, ids[1:] != ids[:-1]]
            self._codes = np.cumsum(change) - 1
        return self._codes

    @property
    def n_workers(self) -> int:
        return int(self.worker_codes[-1] + 1) if len(self) else 0

    @property
    def worker_ids(self) -> np.ndarray:
        ids = self._df["worker_id"].to_numpy()
        return ids[np.r_[True, ids[1:] != ids[:-1]]] if len(ids) else ids

    @property
    def worker_index(self) -> dict:
        """worker_id -> array of row positions."""
        if self._index is None:
            codes = self.worker_codes
            starts = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1]])
            ends = np.r_[starts[1:], len(codes)]
            self._index = {
                wid: np.arange(s, e) for wid, s, e in zip(self.worker_ids, starts, ends)
            }
        return self._index

    def column(self, name) -> np.ndarray:
        return self._df[name].to_numpy()

    def with_columns(self, **columns) -> "Panel":
        df = self._df.copy()
        for k, v in columns.items():
            df[k] = v
        return Panel(df, validate=False)

    def subset(self, mask) -> "Panel":
        return Panel(self._df.loc[np.asarray(mask, dtype=bool)], validate=False)

    @classmethod
    def read_csv(cls, path) -> "Panel":
        df = pd.read_csv(path, dtype=_DTYPES, keep_default_na=False, na_values=[""], float_precision="round_trip")
        return cls(df)

    def to_csv(self, path, include_analysis_weight: bool = False):
        cols = list(PANEL_COLUMNS)
        if include_analysis_weight:
            cols.append("analysis_weight")
        out = self._df[cols].copy()
        out["male"] = out["male"].astype(int)
        out.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


@dataclass(frozen=True, eq=False)
class CovariateMatrix:
    """Worker-level skill covariates after standardisation and imputation.

    Continuous columns are z-scored over their observed cells and then have
    missing cells set to zero; the boolean masks record which cells were
    imputed so the transformation can be re-applied.
    """

    worker_ids: np.ndarray
    continuous: np.ndarray
    dummies: np.ndarray
    missing_indicators: np.ndarray
    continuous_names: tuple
    dummy_names: tuple
    indicator_names: tuple
    continuous_missing: np.ndarray
    dummy_missing: np.ndarray
    degenerate: tuple = ()
    warnings: tuple = ()
    _row: dict = field(default=None, repr=False)

    @property
    def names(self) -> tuple:
        return self.continuous_names + self.dummy_names + self.indicator_names

    @property
    def X(self) -> np.ndarray:
        return np.hstack([self.continuous, self.dummies, self.missing_indicators])

    @property
    def kinds(self) -> dict:
        kinds = {n: "continuous" for n in self.continuous_names}
        kinds.update({n: "dummy" for n in self.dummy_names + self.indicator_names})
        return kinds

    def __len__(self):
        return len(self.worker_ids)

    def rows(self, worker_ids) -> np.ndarray:
        """Row positions for the given ids; raises KeyError on unknown ids."""
        row = self._row
        if row is None:
            row = {w: i for i, w in enumerate(self.worker_ids)}
            object.__setattr__(self, "_row", row)
        try:
            return np.fromiter((row[w] for w in worker_ids), dtype=np.int64, count=len(worker_ids))
        except KeyError as exc:
            raise KeyError(f"worker {exc.args[0]!r} has no covariates") from None

    def take(self, rows) -> "CovariateMatrix":
        rows = np.asarray(rows)
        return CovariateMatrix(
            self.worker_ids[rows],
            self.continuous[rows],
            self.dummies[rows],
            self.missing_indicators[rows],
            self.continuous_names,
            self.dummy_names,
            self.indicator_names,
            self.continuous_missing[rows],
            self.dummy_missing[rows],
            self.degenerate,
            self.warnings,
        )

    def drop(self, names) -> "CovariateMatrix":
        names = set(names)
        kc = [i for i, n in enumerate(self.continuous_names) if n not in names]
        kd = [i for i, n in enumerate(self.dummy_names) if n not in names]
        ki = [i for i, n in enumerate(self.indicator_names) if n not in names]
        return CovariateMatrix(
            self.worker_ids,
            self.continuous[:, kc],
            self.dummies[:, kd],
            self.missing_indicators[:, ki],
            tuple(self.continuous_names[i] for i in kc),
            tuple(self.dummy_names[i] for i in kd),
            tuple(self.indicator_names[i] for i in ki),
            self.continuous_missing[:, kc],
            self.dummy_missing[:, kd],
            self.degenerate,
            self.warnings,
        )

    def column(self, name) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def to_frame(self, restore_missing: bool = False) -> pd.DataFrame:
        """Worker-by-variable frame. With ``restore_missing`` imputed cells
        become NaN again and indicator columns are omitted, giving an input
        that :func:`preprocess_covariates` maps back to this matrix."""
        cont = self.continuous.copy()
        dum = self.dummies.astype(float).copy()
        if restore_missing:
            cont[self.continuous_missing] = np.nan
            dum[self.dummy_missing] = np.nan
        data = {"worker_id": self.worker_ids}
        data.update({n: cont[:, j] for j, n in enumerate(self.continuous_names)})
        data.update({n: dum[:, j] for j, n in enumerate(self.dummy_names)})
        if not restore_missing:
            data.update({n: self.missing_indicators[:, j] for j, n in enumerate(self.indicator_names)})
        return pd.DataFrame(data)

    def schema(self) -> dict:
        return {n: ("continuous" if k == "continuous" else "dummy") for n, k in self.kinds.items()}


def preprocess_covariates(
    raw: pd.DataFrame,
    schema: dict,
    missing_indicator_threshold: int = 1000,
    weights=None,
    weighted: bool = True,
) -> CovariateMatrix:
    """Standardise continuous skill variables and impute missing cells.

    Parameters
    ----------
    raw : DataFrame
        One row per worker, a ``worker_id`` column plus one column per
        variable; missing cells are NaN.
    schema : dict
        Variable name -> ``"continuous"`` or ``"dummy"``. Column order follows
        the schema's order within each kind.
    missing_indicator_threshold : int
        Dummies with at least this many missing cells get a companion
        ``<name>_missing`` indicator column.
    weights : array, optional
        Per-row standardisation weights (survey weights). Ignored when
        ``weighted`` is False.
    """
    if len(raw) < 1 or not schema:
        raise SchemaError("need at least one worker and one variable")
    unknown = [k for k, v in schema.items() if v not in ("continuous", "dummy")]
    if unknown:
        raise SchemaError(f"schema kinds must be continuous or dummy: {unknown}")
    absent = [k for k in schema if k not in raw.columns]
    if absent:
        raise SchemaError(f"covariate table lacks declared columns: {absent}")
    ids = raw["worker_id"].astype(str).to_numpy()
    if len(np.unique(ids)) != len(ids):
        raise SchemaError("covariate table has duplicate worker ids")
    n = len(raw)
    w = np.ones(n) if (weights is None or not weighted) else np.asarray(weights, dtype=float)

    cont_names = tuple(k for k, v in schema.items() if v == "continuous")
    dum_names = tuple(k for k, v in schema.items() if v == "dummy")
    degenerate, notes = [], []

    cont = np.zeros((n, len(cont_names)))
    cont_miss = np.zeros((n, len(cont_names)), dtype=bool)
    for j, name in enumerate(cont_names):
        x = pd.to_numeric(raw[name], errors="coerce").to_numpy(dtype=float)
        miss = np.isnan(x)
        cont_miss[:, j] = miss
        obs = ~miss
        if obs.sum() == 0:
            degenerate.append(name)
            notes.append(f"{name}: all cells missing; emitted as zeros")
            continue
        ww = w[obs]
        mu = np.dot(ww, x[obs]) / ww.sum()
        sd = np.sqrt(np.dot(ww, (x[obs] - mu) ** 2) / ww.sum())
        if not sd > 1e-12 * max(1.0, abs(mu)):
            degenerate.append(name)
            notes.append(f"{name}: zero variance; emitted as zeros")
            continue
        z = (x - mu) / sd
        z[miss] = 0.0
        cont[:, j] = z

    dum = np.zeros((n, len(dum_names)))
    dum_miss = np.zeros((n, len(dum_names)), dtype=bool)
    ind_cols, ind_names = [], []
    for j, name in enumerate(dum_names):
        x = pd.to_numeric(raw[name], errors="coerce").to_numpy(dtype=float)
        miss = np.isnan(x)
        vals = set(np.unique(x[~miss]).tolist())
        if not vals <= {0.0, 1.0}:
            raise SchemaError(f"dummy {name} has values outside {{0, 1}}: {sorted(vals)[:5]}")
        dum_miss[:, j] = miss
        dum[:, j] = np.where(miss, 0.0, x)
        if miss.sum() >= missing_indicator_threshold:
            ind_cols.append(miss.astype(float))
            ind_names.append(f"{name}_missing")

    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    ind = np.column_stack(ind_cols) if ind_cols else np.zeros((n, 0))
    return CovariateMatrix(
        worker_ids=ids,
        continuous=cont,
        dummies=dum,
        missing_indicators=ind,
        continuous_names=cont_names,
        dummy_names=dum_names,
        indicator_names=tuple(ind_names),
        continuous_missing=cont_miss,
        dummy_missing=dum_miss,
        degenerate=tuple(degenerate),
        warnings=tuple(notes),
    )


def read_covariates(csv_path, schema_path=None, weights=None, **kwargs) -> CovariateMatrix:
    """Load a covariate CSV plus its JSON sidecar schema and preprocess it.

    The sidecar defaults to ``<csv stem>.schema.json`` and has the form
    ``{"columns": {"raven": "continuous", "edu_higher": "dummy", ...}}``.
    Columns declared ``"instrument"`` are kept as dummies. Optional keys
    ``weight_column`` (a CSV column of standardisation weights) and
    ``missing_indicator_threshold`` are used unless overridden by arguments.
    """
    csv_path = Path(csv_path)
    if schema_path is None:
        schema_path = csv_path.with_suffix(".schema.json")
    spec = json.loads(Path(schema_path).read_text())
    schema = {k: ("dummy" if v == "instrument" else v) for k, v in spec["columns"].items()}
    raw = pd.read_csv(csv_path, dtype={"worker_id": str}, float_precision="round_trip")
    wcol = spec.get("weight_column")
    if weights is None and wcol is not None:
        if wcol not in raw.columns:
            raise SchemaError(f"weight column {wcol!r} declared in the schema is absent")
        weights = raw[wcol].to_numpy(dtype=float)
    if "missing_indicator_threshold" in spec:
        kwargs.setdefault("missing_indicator_threshold", int(spec["missing_indicator_threshold"]))
    return preprocess_covariates(raw, schema, weights=weights, **kwargs)


def write_covariates(raw: pd.DataFrame, schema: dict, csv_path, schema_path=None, weight_column=None,
                     missing_indicator_threshold=None):
    csv_path = Path(csv_path)
    if schema_path is None:
        schema_path = csv_path.with_suffix(".schema.json")
    raw.to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
    spec = {"columns": schema}
    if weight_column is not None:
        spec["weight_column"] = weight_column
    if missing_indicator_threshold is not None:
        spec["missing_indicator_threshold"] = int(missing_indicator_threshold)
    Path(schema_path).write_text(json.dumps(spec, indent=2, sort_keys=False) + "\n")


def worker_weights(panel: Panel, column: str = "analysis_weight") -> pd.Series:
    """Mean weight across each worker's rows, indexed by worker id."""
    codes = panel.worker_codes
    w = panel.column(column)
    sums = np.bincount(codes, weights=w)
    counts = np.bincount(codes)
    return pd.Series(sums / counts, index=panel.worker_ids, name=column)
