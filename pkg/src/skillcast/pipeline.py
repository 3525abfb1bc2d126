"""Config-driven execution of every stage with a hashed run manifest."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd

from . import __version__
from .errors import ConfigError, SkillcastError

log = logging.getLogger(__name__)

STAGES = ("propensity", "price", "profile", "learn", "predict", "selection", "heckman", "factors", "analyze")
STAGE_VERSION = {s: "1" for s in STAGES}

# artefacts each stage needs and produces
REQUIRES = {
    "propensity": ("panel",),
    "price": ("panel",),
    "profile": ("panel", "price"),
    "learn": ("signals", "covariates"),
    "predict": ("model", "covariates"),
    "selection": ("skills", "panel"),
    "heckman": ("panel", "covariates", "price"),
    "factors": ("panel", "price"),
    "analyze": ("panel", "skills", "profile"),
}
PRODUCES = {
    "propensity": ("panel",),
    "price": ("price",),
    "profile": ("profile", "signals"),
    "learn": ("model",),
    "predict": ("skills",),
}
ANALYZE_TABLES = ("informativeness", "premium", "gender", "relative", "cohort")
INPUT_KINDS = ("panel", "covariates", "price", "profile", "signals", "model", "skills")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out_dir": "skillcast_out",
    "synth": None,
    "inputs": {},
    "stages": {s: True for s in STAGES},
    "propensity": {"weighted": True},
    "price": {"window": [22, 34], "statistic": "median", "n_boot": 200, "province": True},
    "profile": {},
    "learn": {"families": ["edu_ols", "basis", "lasso", "random_forest", "gbm"], "k": 10, "grids": {}},
    "predict": {"family": "gbm"},
    "selection": {"sigma": 0.1, "lambda": 0.2, "split_year": 2000},
    "heckman": {"instrument": "parent_private", "learner": "gbm", "k": 5, "relearn": True},
    "factors": {"min_cell": 30, "g_norm": 1.0},
    "analyze": {"cohort_min_obs": [0, 10, 25, 50], "cohort_bins": 15, "tables": list(ANALYZE_TABLES)},
}

_obj = {"type": "object"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "synth": {"type": ["object", "null"]},
        "inputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "string"} for k in INPUT_KINDS + ("covariates_schema",)},
        },
        "stages": {
            "type": "object",
            "additionalProperties": False,
            "properties": {s: {"type": "boolean"} for s in STAGES},
        },
        "propensity": {"type": "object", "properties": {"weighted": {"type": "boolean"}}},
        "price": {
            "type": "object",
            "properties": {
                "window": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "statistic": {"enum": ["median", "mean"]},
                "n_boot": {"type": "integer", "minimum": 0},
                "province": {"type": "boolean"},
            },
        },
        "profile": _obj,
        "learn": {
            "type": "object",
            "properties": {
                "families": {"type": "array", "items": {"enum": ["edu_ols", "basis", "lasso", "random_forest", "gbm"]}},
                "k": {"type": "integer", "minimum": 2},
                "grids": _obj,
            },
        },
        "predict": {"type": "object", "properties": {"family": {"type": "string"}}},
        "selection": {
            "type": "object",
            "properties": {"sigma": {"type": "number", "exclusiveMinimum": 0},
                           "lambda": {"type": "number", "minimum": 0}, "split_year": {"type": "integer"}},
        },
        "heckman": {
            "type": "object",
            "properties": {"instrument": {"type": "string"}, "learner": {"enum": ["ols", "basis", "gbm"]},
                           "k": {"type": "integer", "minimum": 2}, "relearn": {"type": "boolean"}},
        },
        "factors": {"type": "object", "properties": {"min_cell": {"type": "integer", "minimum": 1},
                                                     "g_norm": {"type": "number"}}},
        "analyze": {"type": "object", "properties": {"cohort_min_obs": {"type": "array", "items": {"type": "integer"}},
                                                     "cohort_bins": {"type": "integer", "minimum": 2},
                                                     "tables": {"type": "array",
                                                                "items": {"enum": list(ANALYZE_TABLES)}}}},
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source, overrides=None) -> dict:
    """Validate a config (path or dict) against the schema, fill defaults and
    check that every enabled stage has its inputs."""
    raw = json.loads(Path(source).read_text()) if isinstance(source, (str, Path)) else copy.deepcopy(source)
    raw = _merge(raw, overrides)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config at {'/'.join(map(str, exc.absolute_path)) or '<root>'}: {exc.message}")
    cfg = _merge(DEFAULTS, raw)
    if "stages" in raw:  # explicit stage maps replace, unspecified stages are off
        cfg["stages"] = {s: bool(raw["stages"].get(s, False)) for s in STAGES}
    check_dependencies(cfg)
    return cfg


def check_dependencies(cfg):
    have = set(k for k in cfg["inputs"] if k in INPUT_KINDS)
    if cfg.get("synth") is not None:
        have |= {"panel", "covariates"}
    for s in STAGES:
        if not cfg["stages"][s]:
            continue
        missing = [a for a in REQUIRES[s] if a not in have]
        if missing:
            raise ConfigError(f"stage {s!r} needs {missing}: enable the stage that produces them or supply them "
                              f"under 'inputs'")
        have |= set(PRODUCES.get(s, ()))


# ---------------------------------------------------------------------------
# output helpers


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n")


def write_csv(path, df: pd.DataFrame):
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


@dataclass
class RunManifest:
    version: str
    config_sha256: str
    seed: int
    inputs: dict
    stages: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v["status"] in ("ok", "disabled") for v in self.stages.values())

    def to_dict(self):
        return {"version": self.version, "config_sha256": self.config_sha256, "seed": self.seed,
                "inputs": self.inputs, "stages": self.stages}


class _Context:
    def __init__(self, cfg, out: Path):
        self.cfg = cfg
        self.out = out
        self.art = {}

    def stage_dir(self, name) -> Path:
        d = self.out / name
        d.mkdir(parents=True, exist_ok=True)
        return d


# ---------------------------------------------------------------------------
# stages


def _load_inputs(ctx: _Context):
    from .panel import Panel, read_covariates
    from .price import SkillPriceSeries
    from .profile import ProfileFit, SkillSignals
    from .learners.model import LearnerModel

    cfg = ctx.cfg
    inp = dict(cfg["inputs"])
    if cfg.get("synth") is not None:
        from .synth import DgpConfig, write_synth

        d = ctx.stage_dir("synth")
        write_synth(d, DgpConfig.from_dict(cfg["synth"]))
        inp.setdefault("panel", str(d / "panel.csv"))
        inp.setdefault("covariates", str(d / "covariates.csv"))
    loaders = {
        "panel": lambda p: Panel.read_csv(p),
        "price": lambda p: SkillPriceSeries.read_csv(p),
        "profile": lambda p: ProfileFit.from_dict(json.loads(Path(p).read_text())),
        "signals": lambda p: SkillSignals.read_csv(p),
        "model": lambda p: LearnerModel.load(p),
        "skills": lambda p: pd.read_csv(p, dtype={"worker_id": str}, float_precision="round_trip").set_index("worker_id")["fhat"],
    }
    hashes = {}
    for kind, path in inp.items():
        if kind == "covariates_schema":
            continue
        hashes[kind] = sha256_file(path)
        if kind == "covariates":
            ctx.art["covariates"] = read_covariates(path, inp.get("covariates_schema"))
        else:
            ctx.art[kind] = loaders[kind](path)
    return hashes


def _stage_propensity(ctx):
    from .propensity import propensity_weights

    res = propensity_weights(ctx.art["panel"], weighted=ctx.cfg["propensity"]["weighted"])
    ctx.art["panel"] = res.panel
    d = ctx.stage_dir("propensity")
    res.panel.to_csv(d / "panel_weighted.csv", include_analysis_weight=True)
    write_csv(d / "scores.csv", res.scores)
    write_json(d / "logit.json", {"coefficients": res.fit.coefficients.to_dict(), "iterations": res.fit.iterations,
                                  "n_clipped": res.n_clipped, "log_likelihood": res.fit.log_likelihood})


def _stage_price(ctx):
    from .price import flat_spot_price
    from .propensity import comparable_sample

    c = ctx.cfg["price"]
    price = flat_spot_price(comparable_sample(ctx.art["panel"]), window=tuple(c["window"]), statistic=c["statistic"],
                            n_boot=c["n_boot"], seed=ctx.cfg["seed"], province=c["province"])
    ctx.art["price"] = price
    price.to_csv(ctx.stage_dir("price") / "price.csv")


def _stage_profile(ctx):
    from .profile import fit_within_quadratic, worker_mean_residual
    from .propensity import comparable_sample

    sample = comparable_sample(ctx.art["panel"])
    prof = fit_within_quadratic(sample, ctx.art["price"])
    sig = worker_mean_residual(sample, ctx.art["price"], prof)
    ctx.art["profile"], ctx.art["signals"] = prof, sig
    d = ctx.stage_dir("profile")
    write_json(d / "profile.json", prof.to_dict())
    sig.to_csv(d / "signals.csv")


def _stage_learn(ctx):
    from .learners.cv import run_learners

    c = ctx.cfg["learn"]
    run = run_learners(ctx.art["signals"], ctx.art["covariates"], families=tuple(c["families"]), k=c["k"],
                       seed=ctx.cfg["seed"], grids=c["grids"] or None, threads=ctx.cfg["threads"])
    fam = ctx.cfg["predict"]["family"]
    if fam in run.models:
        ctx.art["model"] = run.models[fam]
    elif ctx.cfg["stages"]["predict"]:
        raise ConfigError(f"predict family {fam!r} was not trained")
    ctx.art["learn_run"] = run
    d = ctx.stage_dir("learn")
    metrics = run.metrics()
    write_csv(d / "metrics.csv", metrics)
    write_json(d / "metrics.json", metrics.set_index("family").to_dict(orient="index"))
    write_csv(d / "oof.csv", run.oof())
    for name, m in run.models.items():
        m.save(d / f"model_{name}.json")
        if name in ("gbm", "random_forest"):
            write_csv(d / f"importance_{name}.csv", m.variable_importance().rename_axis("feature").reset_index())


def _stage_predict(ctx):
    skills = ctx.art["model"].predict(ctx.art["covariates"])
    ctx.art["skills"] = skills
    write_csv(ctx.stage_dir("predict") / "skills.csv", skills.reset_index())


def _stage_selection(ctx):
    from .density_ratio import selection_rule_report, worker_labels

    c = ctx.cfg["selection"]
    labels = worker_labels(ctx.art["panel"])
    skills = ctx.art["skills"]
    skills = skills[skills.index.isin(labels.index)]
    rep = selection_rule_report(skills, labels, split_year=c["split_year"], sigma=c["sigma"], lam=c["lambda"],
                                seed=ctx.cfg["seed"])
    write_csv(ctx.stage_dir("selection") / "selection_rule.csv", rep.table)


def _stage_heckman(ctx):
    from .heckman import rank_agreement, relearn_skills, robinson_corrected_fit

    c = ctx.cfg["heckman"]
    cov = ctx.art["covariates"]
    if c["instrument"] not in cov.names:
        raise ConfigError(f"instrument {c['instrument']!r} is not a covariate column")
    out = robinson_corrected_fit(ctx.art["panel"], cov, ctx.art["price"], instrument=c["instrument"],
                                 learner=c["learner"], k=c["k"], seed=ctx.cfg["seed"])
    d = ctx.stage_dir("heckman")
    summary = out.summary()
    summary["probit"] = {"coefficients": out.probit.coefficients.to_dict(),
                         "se": dict(zip(out.probit.names, out.probit.se.tolist()))}
    out.signals.to_csv(d / "signals_corrected.csv")
    model = ctx.art.get("model")
    if c["relearn"] and model is not None:
        grid = {k: [v] for k, v in model.hyperparams.items()} if model.family in ("gbm", "random_forest") else None
        corrected, _ = relearn_skills(out.signals, cov, family=model.family, grid=grid, k=ctx.cfg["learn"]["k"],
                                      seed=ctx.cfg["seed"], threads=ctx.cfg["threads"])
        write_csv(d / "skills_corrected.csv", corrected.reset_index())
        if "skills" in ctx.art:
            summary["spearman_vs_baseline"] = rank_agreement(corrected, ctx.art["skills"])
    write_json(d / "heckman.json", summary)


def _stage_factors(ctx):
    from .factors import fit_factor_model
    from .propensity import comparable_sample

    c = ctx.cfg["factors"]
    fit = fit_factor_model(comparable_sample(ctx.art["panel"]), ctx.art["price"], min_cell=c["min_cell"], g_norm=c["g_norm"])
    d = ctx.stage_dir("factors")
    write_csv(d / "delta.csv", fit.factors.to_frame())
    write_csv(d / "loadings.csv", fit.workers)
    write_json(d / "factors.json", {"g_norm": fit.factors.g_norm, "n_skipped": fit.n_skipped,
                                    "dropped_levels": {str(k): v for k, v in fit.factors.dropped.items()}})


def _stage_analyze(ctx):
    from . import analysis as A

    c = ctx.cfg["analyze"]
    tables = set(c["tables"])
    frame = A.analysis_frame(ctx.art["panel"], ctx.art["skills"], ctx.art["profile"])
    d = ctx.stage_dir("analyze")
    if "informativeness" in tables:
        write_csv(d / "informativeness.csv", A.results_table(A.informativeness_tables(frame)))
    if tables & {"premium", "gender"}:
        prem, gender = A.premium_and_gender_tables(frame)
        if "premium" in tables:
            write_csv(d / "premium.csv", A.results_table(prem))
        if "gender" in tables:
            write_csv(d / "gender.csv", A.results_table(gender))
    if "relative" in tables:
        for by in ("year", "cohort_bin"):
            for jf in (False, True):
                s = A.relative_skill_series(frame, by=by, jobfix=jf, n_bins=c["cohort_bins"])
                write_csv(d / f"relative_{by}{'_jobfix' if jf else ''}.csv", s)
    skipped = {}
    if "cohort" in tables:
        rows = []
        for m in c["cohort_min_obs"]:
            tab = A.cohort_table(frame, m)
            write_csv(d / f"cohort_table_min{m}.csv", tab)
            try:
                res = A.cohort_hiring_regression(tab)
            except SkillcastError as exc:
                skipped[str(m)] = str(exc)
                continue
            t = A.results_table(res)
            t.insert(0, "min_gov_obs", m)
            rows.append(t)
        if rows:
            write_csv(d / "cohort_regression.csv", pd.concat(rows, ignore_index=True))
    write_json(d / "analyze.json", {"tables": sorted(tables), "cohort_filters_skipped": skipped})


STAGE_FUNCS = {
    "propensity": _stage_propensity,
    "price": _stage_price,
    "profile": _stage_profile,
    "learn": _stage_learn,
    "predict": _stage_predict,
    "selection": _stage_selection,
    "heckman": _stage_heckman,
    "factors": _stage_factors,
    "analyze": _stage_analyze,
}


def _hash_outputs(d: Path, root: Path) -> dict:
    if not d.is_dir():
        return {}
    return {str(p.relative_to(root)): sha256_file(p) for p in sorted(d.rglob("*")) if p.is_file()}


def run_pipeline(config, overrides=None) -> RunManifest:
    """Run every enabled stage in dependency order.

    Writes ``manifest.json`` (content hashes, versions, seeds, statuses) and a
    separate ``timings.json`` with wall times, so that reruns of the same
    config produce a byte-identical manifest. A failing stage is recorded and
    every later stage that needs its outputs is skipped.
    """
    cfg = load_config(config, overrides)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    canon = json.dumps({k: v for k, v in cfg.items() if k not in ("out_dir", "threads")},
                       sort_keys=True, default=_json_default)
    ctx = _Context(cfg, out)
    timings = {}
    t0 = time.perf_counter()
    input_hashes = _load_inputs(ctx)
    timings["inputs"] = time.perf_counter() - t0
    manifest = RunManifest(__version__, hashlib.sha256(canon.encode()).hexdigest(), cfg["seed"], input_hashes)
    if cfg.get("synth") is not None:
        manifest.stages["synth"] = {"status": "ok", "version": "1", "seed": cfg["synth"].get("seed", 0),
                                    "outputs": _hash_outputs(out / "synth", out)}
    failed = set()
    for s in STAGES:
        if not cfg["stages"][s]:
            manifest.stages[s] = {"status": "disabled"}
            continue
        blocked = [a for a in REQUIRES[s] if a in failed]
        if blocked:
            manifest.stages[s] = {"status": "skipped", "reason": f"missing {blocked}"}
            failed |= set(PRODUCES.get(s, ()))
            continue
        shutil.rmtree(out / s, ignore_errors=True)
        t = time.perf_counter()
        try:
            STAGE_FUNCS[s](ctx)
            status = {"status": "ok"}
        except (SkillcastError, np.linalg.LinAlgError) as exc:
            log.error("stage %s failed: %s", s, exc)
            status = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
            failed |= set(PRODUCES.get(s, ()))
        timings[s] = time.perf_counter() - t
        status.update({"version": STAGE_VERSION[s], "seed": cfg["seed"], "outputs": _hash_outputs(out / s, out)})
        manifest.stages[s] = status
    write_json(out / "manifest.json", manifest.to_dict())
    write_json(out / "timings.json", {k: round(v, 3) for k, v in timings.items()})
    return manifest
