"""S-, T-, X- and doubly-robust meta-learners.

Every learner is fit one-vs-control: for each treated arm ``k`` it sees only
the records with ``T in {0, k}`` and estimates ``tau_k(x) = E[Y(k) - Y(0) | x]``.
``predict`` returns an ``(n_samples, K - 1)`` matrix; the control column is
implicit and zero.
"""
import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .._validation import check_clip, check_uplift_inputs, stratified_folds
from ..exceptions import ConfigurationError, DegenerateFeaturesWarning, ScoringError
from .base import BaseLearnerSpec, make_classifier, make_regressor
from .propensity import conditional_propensity, fit_propensity_matrix

PROPENSITY_SOURCES = ("logged", "estimated")


class BaseUpliftLearner(BaseEstimator):
    """Shared fit/predict plumbing for the one-vs-control learners."""

    _uses_propensity = False

    def __init__(self, base="regression_tree", propensity_source="logged", clip=(0.01, 0.99), folds=2, seed=0):
        self.base = base
        self.propensity_source = propensity_source
        self.clip = clip
        self.folds = folds
        self.seed = seed

    def fit(self, X, treatment, y, propensities=None):
        """Fit on features ``X``, arm indices ``treatment`` and outcomes ``y``.

        ``propensities`` (``N x K`` logged arm probabilities) is required when
        ``propensity_source="logged"`` and the learner weights by propensity.
        """
        X, treatment, y, propensities, n_arms = check_uplift_inputs(X, treatment, y, propensities)
        check_clip(self.clip)
        if self.propensity_source not in PROPENSITY_SOURCES:
            raise ConfigurationError(f"propensity_source must be one of {PROPENSITY_SOURCES}")
        if int(self.folds) < 2:
            raise ConfigurationError("folds must be >= 2")
        base = BaseLearnerSpec.coerce(self.base)
        if len(X) > 1 and np.all(np.ptp(X, axis=0) == 0):
            warnings.warn("all features are constant; falling back to a constant model", DegenerateFeaturesWarning)
            base = BaseLearnerSpec("mean")
        self.base_spec_ = base
        self.n_arms_ = n_arms
        self.n_features_in_ = X.shape[1]

        full_p = None
        if self._uses_propensity:
            if self.propensity_source == "logged":
                if propensities is None:
                    raise ConfigurationError("propensity_source='logged' requires logged propensities")
                full_p = propensities
            elif self._needs_full_propensity_model:
                full_p = fit_propensity_matrix(X, treatment, n_arms, base, seed=self.seed)

        self.arm_models_ = []
        self.arm_index_ = []
        for arm in range(1, n_arms):
            idx = np.flatnonzero((treatment == 0) | (treatment == arm))
            t = (treatment[idx] == arm).astype(np.int64)
            e = None if full_p is None else conditional_propensity(full_p[idx], arm)
            self.arm_index_.append(idx)
            self.arm_models_.append(self._fit_arm(X[idx], t, y[idx], e, base, arm))
        return self

    _needs_full_propensity_model = True

    def predict(self, X):
        """Estimated effects, shape ``(n_samples, K - 1)``."""
        check_is_fitted(self, "arm_models_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ScoringError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if len(X) == 0:
            return np.zeros((0, self.n_arms_ - 1))
        return np.column_stack([self._predict_arm(m, X) for m in self.arm_models_])

    def _salt(self, arm, role):
        return arm * 1000 + role

    def _fit_arm(self, X, t, y, e, base, arm):
        raise NotImplementedError

    def _predict_arm(self, model, X):
        raise NotImplementedError


class SLearner(BaseUpliftLearner):
    """Single model on ``[x, t, t * x]``; effect is ``f(x, 1) - f(x, 0)``.

    The treatment indicator is a forced input: ridge leaves it unpenalized and
    the constant (``mean``) model averages within each arm.
    """

    _needs_full_propensity_model = False

    def _design(self, X, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(X),))
        return np.column_stack([X, t, t[:, None] * X])

    def _fit_arm(self, X, t, y, e, base, arm):
        model = make_regressor(base, self.seed, arm, forced_columns=(X.shape[1],))
        return model.fit(self._design(X, t), y)

    def _predict_arm(self, model, X):
        return model.predict(self._design(X, 1.0)) - model.predict(self._design(X, 0.0))


class TLearner(BaseUpliftLearner):
    """Separate outcome models per arm; effect is ``mu_1(x) - mu_0(x)``."""

    _needs_full_propensity_model = False

    def _fit_arm(self, X, t, y, e, base, arm):
        m0 = make_regressor(base, self.seed, self._salt(arm, 0)).fit(X[t == 0], y[t == 0])
        m1 = make_regressor(base, self.seed, self._salt(arm, 1)).fit(X[t == 1], y[t == 1])
        return m0, m1

    def _predict_arm(self, model, X):
        m0, m1 = model
        return m1.predict(X) - m0.predict(X)


class XLearner(BaseUpliftLearner):
    """Two-stage X-learner with propensity-weighted blending.

    Imputed effects ``y - mu_0(x)`` on treated and ``mu_1(x) - y`` on controls
    are regressed on ``x``; the two effect models are blended with the
    (clipped) propensity ``e(x)`` as ``e * tau_0 + (1 - e) * tau_1``.  The
    propensity function is itself regressed on ``x`` so new data can be scored
    without logged propensities.
    """

    _uses_propensity = True

    def _fit_arm(self, X, t, y, e, base, arm):
        X0, X1, y0, y1 = X[t == 0], X[t == 1], y[t == 0], y[t == 1]
        m0 = make_regressor(base, self.seed, self._salt(arm, 0)).fit(X0, y0)
        m1 = make_regressor(base, self.seed, self._salt(arm, 1)).fit(X1, y1)
        tau1 = make_regressor(base, self.seed, self._salt(arm, 2)).fit(X1, y1 - m0.predict(X1))
        tau0 = make_regressor(base, self.seed, self._salt(arm, 3)).fit(X0, m1.predict(X0) - y0)
        g = make_regressor(base, self.seed, self._salt(arm, 4)).fit(X, e)
        return tau0, tau1, g

    def _predict_arm(self, model, X):
        tau0, tau1, g = model
        e = np.clip(g.predict(X), *check_clip(self.clip))
        return e * tau0.predict(X) + (1 - e) * tau1.predict(X)


class DRLearner(BaseUpliftLearner):
    """Doubly-robust learner with cross-fitted nuisance models.

    Records are split into ``folds`` folds stratified by arm.  For each fold the
    outcome models (and, when estimated, the propensity model) are trained on
    the other folds and used to score the fold.  Pseudo-outcomes

        mu_1 - mu_0 + t * w_1 * (y - mu_1) - (1 - t) * w_0 * (y - mu_0)

    use inverse-propensity weights normalized to mean one within each fold and
    arm.  The final effect model regresses the pseudo-outcomes on ``x``.
    """

    _uses_propensity = True
    _needs_full_propensity_model = False

    def _fit_arm(self, X, t, y, e, base, arm):
        lo, hi = check_clip(self.clip)
        n_folds = int(self.folds)
        rng = np.random.default_rng([int(self.seed), arm])
        fold = stratified_folds(t, n_folds, rng)
        mu0, mu1 = np.empty(len(y)), np.empty(len(y))
        e_hat = np.empty(len(y)) if e is None else np.asarray(e, dtype=float).copy()
        train_sets = []
        for f in range(n_folds):
            test, train = fold == f, fold != f
            c, tr = train & (t == 0), train & (t == 1)
            m0 = make_regressor(base, self.seed, self._salt(arm, 10 + f)).fit(X[c], y[c])
            m1 = make_regressor(base, self.seed, self._salt(arm, 20 + f)).fit(X[tr], y[tr])
            mu0[test], mu1[test] = m0.predict(X[test]), m1.predict(X[test])
            if e is None:
                clf = make_classifier(base, self.seed, self._salt(arm, 30 + f)).fit(X[train], t[train])
                e_hat[test] = clf.predict_proba(X[test])[:, list(clf.classes_).index(1)]
            train_sets.append(np.flatnonzero(train))
        e_hat = np.clip(e_hat, lo, hi)

        psi = mu1 - mu0
        w1, w0 = t / e_hat, (1 - t) / (1 - e_hat)
        for f in range(n_folds):
            test = fold == f
            w1f = w1[test] / w1[test].mean()
            w0f = w0[test] / w0[test].mean()
            psi[test] += w1f * (y[test] - mu1[test]) - w0f * (y[test] - mu0[test])
        final = make_regressor(base, self.seed, self._salt(arm, 40)).fit(X, psi)
        return {
            "final": final,
            "fold": fold,
            "train_sets": train_sets,
            "mu0": mu0,
            "mu1": mu1,
            "pseudo_outcome": psi,
            "propensity": e_hat,
        }

    def _predict_arm(self, model, X):
        return model["final"].predict(X)
