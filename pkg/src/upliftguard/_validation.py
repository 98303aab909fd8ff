"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils import check_array, check_consistent_length

from .exceptions import ConfigurationError, UnfittableArmError


def check_clip(clip):
    lo, hi = (float(c) for c in clip)
    if not 0 < lo <= hi < 1:
        raise ConfigurationError(f"clip must satisfy 0 < lo <= hi < 1, got {clip!r}")
    return lo, hi


def check_uplift_inputs(X, treatment, y, propensities=None, n_arms=None, require_arms=None):
    """Validate ``(X, treatment, y[, propensities])`` and return numpy copies.

    Returns ``X, treatment, y, propensities, n_arms``.
    """
    X = check_array(X, dtype=float, ensure_min_samples=1)
    treatment = np.asarray(treatment)
    if treatment.ndim != 1:
        raise ConfigurationError("treatment must be one-dimensional")
    if not np.all(np.mod(treatment, 1) == 0):
        raise ConfigurationError("treatment must hold integer arm indices")
    treatment = treatment.astype(np.int64)
    y = check_array(np.asarray(y, dtype=float), ensure_2d=False, dtype=float)
    check_consistent_length(X, treatment, y)
    if propensities is not None:
        propensities = check_array(propensities, dtype=float)
        check_consistent_length(X, propensities)
        if n_arms is None:
            n_arms = propensities.shape[1]
    if n_arms is None:
        n_arms = int(treatment.max()) + 1
    if n_arms < 2:
        raise ConfigurationError("need at least two arms (control plus one treatment)")
    if treatment.min() < 0 or treatment.max() >= n_arms:
        raise ConfigurationError("treatment index out of range")
    counts = np.bincount(treatment, minlength=n_arms)
    arms = range(n_arms) if require_arms is None else require_arms
    for arm in arms:
        if counts[arm] == 0:
            raise UnfittableArmError(arm)
    return X, treatment, y, propensities, n_arms


def stratified_folds(treatment, n_folds, rng):
    """Fold id per record; each arm is spread over the folds as evenly as possible."""
    fold = np.empty(len(treatment), dtype=np.int64)
    for arm in np.unique(treatment):
        idx = np.flatnonzero(treatment == arm)
        if len(idx) < n_folds:
            raise ConfigurationError(f"arm {arm} has {len(idx)} records; cross-fitting needs >= {n_folds}")
        fold[rng.permutation(idx)] = np.arange(len(idx)) % n_folds
    return fold
