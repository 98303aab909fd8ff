"""CATE estimators: S/T/X/DR meta-learners and an honest causal forest."""
from .api import (
    CateEstimateMatrix,
    FittedUpliftModel,
    UpliftModelSpec,
    fit,
    load_cate,
    load_model,
    predict,
    save_cate,
    save_model,
)
from .base import BaseLearnerSpec
from .forest import CausalForest
from .meta import DRLearner, SLearner, TLearner, XLearner
from .outcome import estimate_arm_outcomes, fit_arm_outcome_models, predict_arm_outcomes
from .propensity import clip_propensities, estimate_propensities

__all__ = [
    "BaseLearnerSpec",
    "CateEstimateMatrix",
    "CausalForest",
    "DRLearner",
    "FittedUpliftModel",
    "SLearner",
    "TLearner",
    "UpliftModelSpec",
    "XLearner",
    "clip_propensities",
    "estimate_arm_outcomes",
    "estimate_propensities",
    "fit_arm_outcome_models",
    "fit",
    "load_cate",
    "load_model",
    "predict",
    "predict_arm_outcomes",
    "save_cate",
    "save_model",
]
