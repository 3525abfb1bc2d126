"""Command-line entry point: ``skillcast <command> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, SchemaError, SkillcastError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# stage -> (input kinds accepted on the command line)
STAGE_INPUTS = {
    "propensity": ("panel",),
    "price": ("panel",),
    "profile": ("panel", "price"),
    "learn": ("signals", "covariates"),
    "predict": ("model", "covariates"),
    "selection": ("skills", "panel"),
    "heckman": ("panel", "covariates", "price", "model", "skills"),
    "factors": ("panel", "price"),
    "analyze": ("panel", "skills", "profile"),
}


def _common(p):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads for the learners")
    p.add_argument("--out-dir", "--out", dest="out_dir", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"skillcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic panel, covariates and ground truth")
    _common(p)
    p.add_argument("--n-workers", type=int)
    p.add_argument("--n-years", type=int)

    for stage, kinds in STAGE_INPUTS.items():
        p = sub.add_parser(stage, help=f"run the {stage} stage on files")
        _common(p)
        for k in kinds:
            p.add_argument(f"--{k}", type=str, help=f"{k} input file")
        if "covariates" in kinds:
            p.add_argument("--covariates-schema", type=str, help="covariate schema JSON")
        if stage == "learn":
            p.add_argument("--families", help="comma-separated learner families or 'all'")
            p.add_argument("--folds", type=int, help="number of cross-validation folds")
        if stage == "analyze":
            p.add_argument("--tables", help="comma-separated table names or 'all'")

    p = sub.add_parser("pipeline", help="run every enabled stage from a config")
    _common(p)
    return parser


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.threads is not None:
        o["threads"] = args.threads
    if args.out_dir is not None:
        o["out_dir"] = str(args.out_dir)
    return o


def _base_config(args) -> dict:
    if args.config is None:
        return {}
    try:
        return json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}")


def _run(args) -> int:
    from .pipeline import run_pipeline

    cfg = _base_config(args)
    if args.command == "synth":
        from .synth import DgpConfig, write_synth

        synth = dict(cfg.get("synth") or {})
        for key in ("n_workers", "n_years"):
            if getattr(args, key) is not None:
                synth[key] = getattr(args, key)
        if args.seed is not None:
            synth["seed"] = args.seed
        out = Path(args.out_dir or cfg.get("out_dir") or "skillcast_synth")
        write_synth(out, DgpConfig.from_dict(synth))
        print(out)
        return EXIT_OK

    if args.command != "pipeline":
        inputs = dict(cfg.get("inputs") or {})
        for k in STAGE_INPUTS[args.command] + ("covariates_schema",):
            v = getattr(args, k, None)
            if v is not None:
                inputs[k] = v
        cfg["inputs"] = inputs
        if getattr(args, "families", None) and args.families != "all":
            cfg.setdefault("learn", {})["families"] = args.families.split(",")
            cfg.setdefault("predict", {}).setdefault("family", cfg["learn"]["families"][-1])
        if getattr(args, "folds", None):
            cfg.setdefault("learn", {})["k"] = args.folds
        if getattr(args, "tables", None) and args.tables != "all":
            cfg.setdefault("analyze", {})["tables"] = args.tables.split(",")
        cfg["stages"] = {args.command: True}
        cfg.pop("synth", None)
    manifest = run_pipeline(cfg, _overrides(args))
    for name, st in manifest.stages.items():
        if st["status"] != "disabled":
            print(f"{name}: {st['status']}" + (f" ({st['error']})" if "error" in st else ""))
    return EXIT_OK if manifest.ok else EXIT_NUMERIC


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SKILLCAST_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SkillcastError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
