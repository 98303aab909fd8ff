"""Spec-driven entry points: ``fit(spec, data)`` and ``predict(model, data)``."""
import csv
import hashlib
import io
import json
import pickle
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from .._validation import check_clip
from ..exceptions import ConfigurationError, IngestionError, ScoringError
from ..schemas import validate
from .base import BaseLearnerSpec
from .forest import CausalForest
from .meta import DRLearner, SLearner, TLearner, XLearner

META_KINDS = ("s_learner", "t_learner", "x_learner", "dr_learner", "causal_forest")
_LEARNERS = {"s_learner": SLearner, "t_learner": TLearner, "x_learner": XLearner, "dr_learner": DRLearner}
_FOREST_DEFAULTS = {"n_trees": 200, "max_depth": 8, "min_leaf": 5, "subsample": 0.5}

MODEL_FORMAT = "upliftguard.fitted_model"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class UpliftModelSpec:
    meta: str = "t_learner"
    base: BaseLearnerSpec = field(default_factory=BaseLearnerSpec)
    propensity_source: str = "logged"
    clip: tuple = (0.01, 0.99)
    folds: int = 2
    honesty_fraction: float = 0.5
    seed: int = 0
    forest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.meta not in META_KINDS:
            raise ConfigurationError(f"unknown meta-learner {self.meta!r}; expected one of {META_KINDS}")
        object.__setattr__(self, "base", BaseLearnerSpec.coerce(self.base))
        object.__setattr__(self, "clip", check_clip(self.clip))
        if self.propensity_source not in ("logged", "estimated"):
            raise ConfigurationError("propensity_source must be 'logged' or 'estimated'")
        if int(self.folds) != self.folds or self.folds < 2:
            raise ConfigurationError("folds must be an integer >= 2")
        if not 0 < self.honesty_fraction < 1:
            raise ConfigurationError("honesty_fraction must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        unknown = set(self.forest) - set(_FOREST_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"forest: unknown option(s) {sorted(unknown)}")

    def to_dict(self):
        return {
            "meta": self.meta,
            "base": self.base.to_dict(),
            "propensity_source": self.propensity_source,
            "clip": list(self.clip),
            "folds": int(self.folds),
            "honesty_fraction": float(self.honesty_fraction),
            "seed": int(self.seed),
            "forest": {**_FOREST_DEFAULTS, **self.forest},
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        validate(d, "uplift_model_spec")
        if "clip" in d:
            d["clip"] = tuple(d["clip"])
        d["forest"] = dict(d.get("forest") or {})
        return cls(**d)

    def build(self):
        """Instantiate the (unfitted) estimator."""
        common = dict(
            base=self.base, propensity_source=self.propensity_source, clip=self.clip, folds=self.folds, seed=self.seed
        )
        if self.meta == "causal_forest":
            opts = {**_FOREST_DEFAULTS, **self.forest}
            return CausalForest(honesty_fraction=self.honesty_fraction, **opts, **common)
        return _LEARNERS[self.meta](**common)


@dataclass(frozen=True, eq=False)
class FittedUpliftModel:
    spec: UpliftModelSpec
    estimator: object
    fitted_on: str
    n_features: int
    n_arms: int


@dataclass(frozen=True, eq=False)
class CateEstimateMatrix:
    """``tau_hat[i, k-1]`` is the estimated effect of arm ``k`` vs control."""

    customer_id: np.ndarray
    tau_hat: np.ndarray
    model_provenance: dict
    fitted_on: str
    scored_on: str

    def __post_init__(self):
        tau = np.asarray(self.tau_hat, dtype=float)
        if tau.ndim != 2 or tau.shape[0] != len(self.customer_id):
            raise ConfigurationError("tau_hat must be N x (K-1) with one row per customer")
        if not np.all(np.isfinite(tau)):
            raise ScoringError("non-finite CATE estimate")
        object.__setattr__(self, "tau_hat", tau)
        object.__setattr__(self, "customer_id", np.asarray(self.customer_id, dtype=np.int64))

    @property
    def n_arms(self):
        return self.tau_hat.shape[1] + 1

    def with_control(self):
        """``N x K`` matrix with the implicit zero control column prepended."""
        return np.column_stack([np.zeros(len(self.tau_hat)), self.tau_hat])


def fit(spec: UpliftModelSpec, data) -> FittedUpliftModel:
    """Fit the learner described by ``spec`` on an :class:`ExperimentDataset`."""
    est = spec.build()
    est.fit(data.features, data.treatment, data.outcome, data.propensities)
    return FittedUpliftModel(spec, est, data.fingerprint(), data.n_features, data.n_arms)


def predict(model: FittedUpliftModel, data) -> CateEstimateMatrix:
    if data.n_features != model.n_features:
        raise ScoringError(f"model expects {model.n_features} features, dataset has {data.n_features}")
    tau = model.estimator.predict(data.features)
    return CateEstimateMatrix(data.customer_id, tau, model.spec.to_dict(), model.fitted_on, data.fingerprint())


# ---------------------------------------------------------------------------
# persistence


def save_model(model, path):
    """Pickle the model behind a versioned, self-describing header."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "spec": model.spec.to_dict(),
        "fitted_on": model.fitted_on,
        "n_features": model.n_features,
        "n_arms": model.n_arms,
        "estimator": model.estimator,
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=4)


def load_model(path) -> FittedUpliftModel:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise IngestionError(f"{path} is not a fitted uplift model file")
    if payload["version"] != MODEL_FORMAT_VERSION:
        raise IngestionError(f"unsupported model file version {payload['version']}")
    return FittedUpliftModel(
        UpliftModelSpec.from_dict(payload["spec"]),
        payload["estimator"],
        payload["fitted_on"],
        payload["n_features"],
        payload["n_arms"],
    )


def save_cate(cate, path):
    k = cate.n_arms
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["customer_id", *(f"tau{j}" for j in range(1, k))]) + "\n")
        for c, row in zip(cate.customer_id, cate.tau_hat):
            fh.write(",".join([str(int(c)), *(format(float(v), ".17g") for v in row)]) + "\n")
    meta = {"model_provenance": cate.model_provenance, "fitted_on": cate.fitted_on, "scored_on": cate.scored_on}
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cate(path) -> CateEstimateMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("CATE file is empty", row=1) from None
        k = len(header)
        if header != ["customer_id", *(f"tau{j}" for j in range(1, k))] or k < 2:
            raise IngestionError("CATE header must be customer_id,tau1..tau{k-1}", row=1)
        ids, rows = [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != k:
                raise IngestionError(f"expected {k} fields, found {len(row)}", row=line)
            try:
                ids.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise IngestionError(str(exc), row=line) from None
    try:
        with open(str(path) + ".meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {"model_provenance": {}, "fitted_on": "", "scored_on": ""}
    return CateEstimateMatrix(
        np.asarray(ids, dtype=np.int64),
        np.asarray(rows, dtype=float).reshape(len(ids), k - 1),
        meta["model_provenance"],
        meta["fitted_on"],
        meta["scored_on"],
    )


def cate_fingerprint(cate):
    buf = io.StringIO()
    for c, row in zip(cate.customer_id, cate.tau_hat):
        buf.write(",".join([str(int(c)), *(format(float(v), ".17g") for v in row)]) + "\n")
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()
