"""Propensity estimation and clipping."""
import numpy as np

from .._validation import check_clip
from ..exceptions import ConfigurationError
from .base import BaseLearnerSpec, make_classifier


def estimate_propensities(data, base=None, source="estimated", seed=0):
    """Return an ``N x K`` matrix of arm probabilities whose rows sum to 1.

    ``source="logged"`` returns the dataset's logged propensities unchanged;
    ``source="estimated"`` fits a classifier of the arm on the features
    (``ridge`` maps to L2-penalized logistic regression).  Output is not
    clipped; use :func:`clip_propensities` before weighting.
    """
    if source == "logged":
        return np.array(data.propensities, dtype=float)
    if source != "estimated":
        raise ConfigurationError(f"unknown propensity source {source!r}")
    return fit_propensity_matrix(data.features, data.treatment, data.n_arms, base, seed)


def fit_propensity_matrix(X, treatment, n_arms, base=None, seed=0):
    present = np.unique(treatment)
    if len(present) < 2:
        raise ConfigurationError("propensity estimation needs at least two observed arms")
    clf = make_classifier(BaseLearnerSpec.coerce(base or "ridge"), seed=seed).fit(X, treatment)
    raw = clf.predict_proba(X)
    out = np.zeros((len(X), n_arms))
    out[:, clf.classes_.astype(int)] = raw
    return out / out.sum(axis=1, keepdims=True)


def clip_propensities(p, clip=(0.01, 0.99)):
    """Clamp probabilities into ``[lo, hi]`` (rows no longer need to sum to 1)."""
    lo, hi = check_clip(clip)
    return np.clip(np.asarray(p, dtype=float), lo, hi)


def conditional_propensity(p, arm):
    """``P(T = arm | T in {0, arm}, x)`` from an ``N x K`` propensity matrix."""
    p = np.asarray(p, dtype=float)
    return p[:, arm] / (p[:, 0] + p[:, arm])
