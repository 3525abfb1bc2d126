"""Skill learners sharing one worker-level k-fold harness."""

from .cv import (  # noqa: F401
    PAPER_GRIDS,
    LearnerRun,
    TrainingData,
    grid_search_cv,
    predict_skills,
    run_learners,
    train_basis,
    train_edu_ols,
    train_family,
    train_gbm,
    train_lasso,
    train_random_forest,
    training_data,
    variable_importance,
)
from .folds import FoldAssignment, make_folds  # noqa: F401
from .model import FAMILIES, LearnerModel  # noqa: F401
