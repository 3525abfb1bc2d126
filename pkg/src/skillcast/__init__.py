"""Latent worker-skill estimation from panel wages.

Stages: propensity reweighting, skill prices, experience profiles and skill
signals, cross-validated learners, density-ratio selection rules, selection
correction, factor profiles and the downstream regression suite.
"""

import os as _os

# single-threaded BLAS keeps floating-point reductions in a fixed order
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    ConvergenceError,
    IdentificationError,
    RankDeficiencyError,
    SchemaError,
    SeparationError,
    SeriesGapError,
    SkillcastError,
    UndefinedVarianceError,
)
from .panel import CovariateMatrix, Panel, preprocess_covariates  # noqa: F401
from .stats import log_points_to_premium, weighted_r2, winsorize_logs  # noqa: F401
