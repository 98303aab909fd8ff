"""Base regressors and classifiers used inside the meta-learners."""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.dummy import DummyClassifier
from sklearn.ensemble import GradientBoostingClassifier, GradientBoostingRegressor
from sklearn.linear_model import LogisticRegression
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ConfigurationError

BASE_KINDS = ("mean", "ridge", "regression_tree", "gradient_boosted_trees")

_DEFAULTS = {
    "mean": {},
    "ridge": {"lambda": 1.0},
    "regression_tree": {"max_depth": 6, "min_leaf": 20},
    "gradient_boosted_trees": {"rounds": 100, "learning_rate": 0.1, "max_depth": 3, "min_leaf": 20},
}


@dataclass(frozen=True)
class BaseLearnerSpec:
    kind: str = "regression_tree"
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ConfigurationError(f"unknown base learner {self.kind!r}; expected one of {BASE_KINDS}")
        unknown = set(self.hyperparameters) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ConfigurationError(f"{self.kind}: unknown hyperparameter(s) {sorted(unknown)}")
        hp = self.params
        if "lambda" in hp and not hp["lambda"] >= 0:
            raise ConfigurationError("ridge lambda must be >= 0")
        for key in ("max_depth", "min_leaf", "rounds"):
            if key in hp and (int(hp[key]) != hp[key] or hp[key] < 1):
                raise ConfigurationError(f"{key} must be a positive integer")
        if "learning_rate" in hp and not 0 < hp["learning_rate"] <= 1:
            raise ConfigurationError("learning_rate must lie in (0, 1]")

    @property
    def params(self):
        return {**_DEFAULTS[self.kind], **self.hyperparameters}

    def to_dict(self):
        return {"kind": self.kind, "hyperparameters": dict(self.params)}

    @classmethod
    def coerce(cls, value):
        if isinstance(value, cls):
            return value
        if value is None:
            return cls()
        if isinstance(value, str):
            return cls(value)
        value = dict(value)
        return cls(value.get("kind", "regression_tree"), dict(value.get("hyperparameters") or {}))


class GroupMeanRegressor(RegressorMixin, BaseEstimator):
    """Constant model: the mean of ``y``, taken per cell of the forced columns.

    With no forced columns this is the plain sample mean.  The S-learner passes
    the treatment indicator as a forced column so the constant model still
    distinguishes arms.
    """

    def __init__(self, forced_columns=()):
        self.forced_columns = forced_columns

    def fit(self, X, y):
        y = np.asarray(y, dtype=float)
        self.mean_ = float(np.mean(y)) if len(y) else 0.0
        self.cells_ = {}
        cols = list(self.forced_columns)
        if cols:
            keys = np.asarray(X)[:, cols]
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            sums = np.bincount(inv.ravel(), weights=y)
            counts = np.bincount(inv.ravel())
            self.cells_ = {tuple(u): s / c for u, s, c in zip(uniq, sums, counts)}
        return self

    def predict(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X)
        if not self.cells_:
            return np.full(len(X), self.mean_)
        keys = X[:, list(self.forced_columns)]
        return np.array([self.cells_.get(tuple(k), self.mean_) for k in keys])


class RidgeRegressor(RegressorMixin, BaseEstimator):
    """Closed-form ridge regression with an unpenalized intercept.

    Columns listed in ``forced_columns`` are also left unpenalized.
    ``alpha=0`` gives ordinary least squares (minimum-norm solution).
    """

    def __init__(self, alpha=1.0, forced_columns=()):
        self.alpha = alpha
        self.forced_columns = forced_columns

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        Z = np.column_stack([np.ones(len(X)), X])
        if self.alpha == 0:
            coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
        else:
            penalty = np.full(Z.shape[1], float(self.alpha))
            penalty[0] = 0.0
            for c in self.forced_columns:
                penalty[c + 1] = 0.0
            coef = np.linalg.solve(Z.T @ Z + np.diag(penalty), Z.T @ y)
        self.intercept_ = coef[0]
        self.coef_ = coef[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_


def sklearn_seed(seed, salt=0):
    """Map a 64-bit seed (plus salt) to a 32-bit ``random_state``."""
    return int(np.random.SeedSequence([int(seed), int(salt)]).generate_state(1)[0])


def make_regressor(spec, seed=0, salt=0, forced_columns=()):
    spec = BaseLearnerSpec.coerce(spec)
    hp = spec.params
    if spec.kind == "mean":
        return GroupMeanRegressor(forced_columns=tuple(forced_columns))
    if spec.kind == "ridge":
        return RidgeRegressor(alpha=hp["lambda"], forced_columns=tuple(forced_columns))
    if spec.kind == "regression_tree":
        return DecisionTreeRegressor(
            max_depth=int(hp["max_depth"]), min_samples_leaf=int(hp["min_leaf"]), random_state=sklearn_seed(seed, salt)
        )
    return GradientBoostingRegressor(
        n_estimators=int(hp["rounds"]),
        learning_rate=hp["learning_rate"],
        max_depth=int(hp["max_depth"]),
        min_samples_leaf=int(hp["min_leaf"]),
        random_state=sklearn_seed(seed, salt),
    )


def make_classifier(spec, seed=0, salt=0):
    """Propensity classifier matching a base learner kind (ridge -> logistic)."""
    spec = BaseLearnerSpec.coerce(spec)
    hp = spec.params
    if spec.kind == "mean":
        return DummyClassifier(strategy="prior")
    if spec.kind == "ridge":
        if hp["lambda"] == 0:
            return LogisticRegression(penalty=None, max_iter=1000)
        return LogisticRegression(C=1.0 / hp["lambda"], max_iter=1000)
    if spec.kind == "regression_tree":
        return DecisionTreeClassifier(
            max_depth=int(hp["max_depth"]), min_samples_leaf=int(hp["min_leaf"]), random_state=sklearn_seed(seed, salt)
        )
    return GradientBoostingClassifier(
        n_estimators=int(hp["rounds"]),
        learning_rate=hp["learning_rate"],
        max_depth=int(hp["max_depth"]),
        min_samples_leaf=int(hp["min_leaf"]),
        random_state=sklearn_seed(seed, salt),
    )
