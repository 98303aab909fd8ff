"""Per-arm outcome regressions, used for sales estimates and baseline scores."""
import numpy as np

from ..exceptions import UnfittableArmError
from .base import BaseLearnerSpec, make_regressor


def estimate_arm_outcomes(data, base="ridge", seed=0, add_arm_cost=None, arms=None):
    """Predict ``E[target | x, T = k]`` for every customer and arm.

    Parameters
    ----------
    data : ExperimentDataset
        Records used for fitting; predictions are for the same customers.  Use
        :func:`fit_arm_outcome_models` and :func:`predict_arm_outcomes` to score
        other customers.
    base : BaseLearnerSpec, str or dict, default="ridge"
    seed : int, default=0
    add_arm_cost : array of shape (K,), optional
        Added to each record's outcome before fitting (``Y + cost[T]``), which
        turns a net-of-cost outcome back into gross sales.
    arms : iterable of int, optional
        Arms to model; defaults to all.

    Returns
    -------
    ndarray of shape (N, K)
        Columns for arms not requested are NaN.
    """
    models = fit_arm_outcome_models(data, base, seed, add_arm_cost, arms)
    return predict_arm_outcomes(models, data.features, data.n_arms)


def fit_arm_outcome_models(data, base="ridge", seed=0, add_arm_cost=None, arms=None):
    base = BaseLearnerSpec.coerce(base)
    target = np.asarray(data.outcome, dtype=float)
    if add_arm_cost is not None:
        target = target + np.asarray(add_arm_cost, dtype=float)[data.treatment]
    models = {}
    for k in range(data.n_arms) if arms is None else arms:
        idx = data.treatment == k
        if not idx.any():
            raise UnfittableArmError(k)
        models[k] = make_regressor(base, seed, 5000 + k).fit(data.features[idx], target[idx])
    return models


def predict_arm_outcomes(models, X, n_arms):
    out = np.full((len(X), n_arms), np.nan)
    for k, m in models.items():
        out[:, k] = m.predict(X)
    return out
