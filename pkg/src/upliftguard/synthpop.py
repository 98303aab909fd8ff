"""Synthetic customer populations with known potential outcomes.

A :class:`DgpSpec` fully determines a dataset: features, logging propensities,
logged treatment, observed outcome, and the hidden ground truth.  Every random
draw comes from a counter-based stream keyed by ``(seed, purpose, customer_id)``
so the value generated for a customer never depends on generation order.

Ground truth is kept on a separate :class:`GroundTruth` object and written to a
separate sidecar file, so estimators never see it by accident.
"""
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
from scipy.special import expit, ndtr

from . import _random
from .exceptions import ConfigurationError, IngestionError
from .schemas import validate

DGP_NAMES = ("linear", "segments", "retention_scenario", "reward_scenario", "threshold_scenario")
PRESETS = {"retention": "retention_scenario", "reward": "reward_scenario", "threshold": "threshold_scenario"}
_U64 = 2**64

_PROPENSITY_TOL = 1e-9


@dataclass(frozen=True)
class LoggingSpec:
    """How the historical (logging) policy assigned treatments.

    ``mode="rct"`` uses the fixed arm probabilities ``probabilities`` (uniform
    when omitted).  ``mode="observational"`` gives each customer a total
    treatment probability ``sigmoid(intercept + slope * x[feature])`` clipped
    to ``bounds`` and split evenly across the non-control arms.
    """

    mode: str = "rct"
    probabilities: Optional[tuple] = None
    feature: int = 0
    slope: float = 1.5
    intercept: float = 0.0
    bounds: tuple = (0.05, 0.95)

    def to_dict(self):
        return {
            "mode": self.mode,
            "probabilities": None if self.probabilities is None else list(self.probabilities),
            "feature": self.feature,
            "slope": self.slope,
            "intercept": self.intercept,
            "bounds": list(self.bounds),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        _reject_unknown(cls, d, "logging")
        if d.get("probabilities") is not None:
            d["probabilities"] = tuple(float(p) for p in d["probabilities"])
        if "bounds" in d:
            d["bounds"] = tuple(float(b) for b in d["bounds"])
        return cls(**d)


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process specification.

    ``params`` holds the process-specific tables (see ``README.md`` for the
    keys each process understands); missing keys fall back to defaults.
    """

    name: str
    n_customers: int
    n_features: int = 5
    n_treatments: int = 2
    noise_sd: float = 1.0
    seed: int = 0
    logging: LoggingSpec = field(default_factory=LoggingSpec)
    cost_per_treatment: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    @property
    def costs(self):
        if self.cost_per_treatment is None:
            return np.zeros(self.n_treatments)
        return np.asarray(self.cost_per_treatment, dtype=float)

    def with_(self, **changes):
        """Copy with some fields replaced (``logging`` may be given as a dict)."""
        if isinstance(changes.get("logging"), dict):
            changes["logging"] = LoggingSpec.from_dict(changes["logging"])
        return replace(self, **changes)

    def validate(self):
        if self.name not in DGP_NAMES:
            raise ConfigurationError(f"unknown DGP name {self.name!r}; expected one of {DGP_NAMES}")
        for attr, minimum in (("n_customers", 1), ("n_features", 1), ("n_treatments", 2)):
            value = getattr(self, attr)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < minimum:
                raise ConfigurationError(f"{attr} must be an integer >= {minimum}, got {value!r}")
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise ConfigurationError(f"noise_sd must be a non-negative real, got {self.noise_sd!r}")
        if not (0 <= int(self.seed) < _U64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        costs = self.costs
        if costs.shape != (self.n_treatments,):
            raise ConfigurationError("cost_per_treatment must have one entry per treatment")
        if np.any(costs < 0) or not np.all(np.isfinite(costs)):
            raise ConfigurationError("cost_per_treatment entries must be non-negative")
        if costs[0] != 0:
            raise ConfigurationError("cost_per_treatment[0] must be 0 (control is free)")
        log = self.logging
        if log.mode == "rct":
            if log.probabilities is not None:
                p = np.asarray(log.probabilities, dtype=float)
                if p.shape != (self.n_treatments,):
                    raise ConfigurationError("logging.probabilities must have one entry per treatment")
                if np.any(p <= 0) or abs(p.sum() - 1.0) > _PROPENSITY_TOL:
                    raise ConfigurationError(
                        "logging.probabilities must be strictly positive and sum to 1 (full support)"
                    )
        elif log.mode == "observational":
            lo, hi = log.bounds
            if not (0 < lo <= hi < 1):
                raise ConfigurationError("logging.bounds must satisfy 0 < lo <= hi < 1 (full support)")
            if not (0 <= log.feature < self.n_features):
                raise ConfigurationError("logging.feature out of range")
        else:
            raise ConfigurationError(f"unknown logging mode {log.mode!r}")
        if self.name != "linear":
            table = _segment_table(self)
            if not (0 <= table["segment_feature"] < self.n_features):
                raise ConfigurationError("segment_feature out of range")
        return self

    def to_dict(self):
        return {
            "name": self.name,
            "n_customers": int(self.n_customers),
            "n_features": int(self.n_features),
            "n_treatments": int(self.n_treatments),
            "noise_sd": float(self.noise_sd),
            "seed": int(self.seed),
            "logging": self.logging.to_dict(),
            "cost_per_treatment": [float(c) for c in self.costs],
            "params": _jsonable(self.params),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        validate(d, "dgp_spec")
        d["logging"] = LoggingSpec.from_dict(d.get("logging"))
        if d.get("cost_per_treatment") is not None:
            d["cost_per_treatment"] = tuple(float(c) for c in d["cost_per_treatment"])
        d["params"] = dict(d.get("params") or {})
        return cls(**d).validate()


def _reject_unknown(cls, d, where):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"{where}: unknown field(s) {sorted(unknown)}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True)
class CustomerRecord:
    customer_id: int
    features: np.ndarray
    treatment: int
    outcome: float
    logging_propensities: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    """Expected potential outcomes ``E[Y(t_k) | x]`` and the implied CATE."""

    customer_id: np.ndarray
    potential_outcomes: np.ndarray
    true_cate: np.ndarray
    segment_label: np.ndarray

    def __post_init__(self):
        for name in ("customer_id", "potential_outcomes", "true_cate", "segment_label"):
            _freeze(getattr(self, name))

    def __len__(self):
        return len(self.customer_id)

    def subset(self, idx):
        return GroundTruth(
            self.customer_id[idx], self.potential_outcomes[idx], self.true_cate[idx], self.segment_label[idx]
        )


def _freeze(arr):
    arr.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ExperimentDataset:
    """Logged tuples ``(x_i, T_i, Y_i, rho_i)``; immutable after construction.

    Stored column-wise; :attr:`records` gives the row view.
    """

    customer_id: np.ndarray
    features: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    propensities: np.ndarray
    truth: Optional[GroundTruth] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cid = np.asarray(self.customer_id, dtype=np.int64)
        X = np.asarray(self.features, dtype=float)
        t = np.asarray(self.treatment, dtype=np.int64)
        y = np.asarray(self.outcome, dtype=float)
        p = np.asarray(self.propensities, dtype=float)
        n = len(cid)
        if X.ndim != 2 or X.shape[0] != n or t.shape != (n,) or y.shape != (n,) or p.ndim != 2 or p.shape[0] != n:
            raise ConfigurationError("dataset columns have inconsistent lengths or shapes")
        if p.shape[1] < 2:
            raise ConfigurationError("dataset needs at least two arms")
        if len(np.unique(cid)) != n:
            raise ConfigurationError("customer_id values must be unique")
        if n and (t.min() < 0 or t.max() >= p.shape[1]):
            raise ConfigurationError("treatment index out of range")
        if n and (np.any(p <= 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > _PROPENSITY_TOL)):
            raise ConfigurationError("logging propensities must be positive and sum to 1")
        for name, arr in (("customer_id", cid), ("features", X), ("treatment", t), ("outcome", y), ("propensities", p)):
            _freeze(arr)
            object.__setattr__(self, name, arr)
        if self.truth is not None and not np.array_equal(self.truth.customer_id, cid):
            raise ConfigurationError("ground truth customer ids do not match the dataset")

    def __len__(self):
        return len(self.customer_id)

    @property
    def n_arms(self):
        return self.propensities.shape[1]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def logged_propensity(self):
        """Propensity of the logged action, ``rho_{i, T_i}``."""
        return self.propensities[np.arange(len(self)), self.treatment]

    @property
    def records(self):
        return [
            CustomerRecord(int(c), x, int(t), float(y), p)
            for c, x, t, y, p in zip(self.customer_id, self.features, self.treatment, self.outcome, self.propensities)
        ]

    def subset(self, idx):
        idx = np.asarray(idx)
        return ExperimentDataset(
            self.customer_id[idx],
            self.features[idx],
            self.treatment[idx],
            self.outcome[idx],
            self.propensities[idx],
            None if self.truth is None else self.truth.subset(idx),
            dict(self.metadata),
        )

    def without_truth(self):
        return replace(self, truth=None)

    def with_outcome(self, outcome):
        return replace(self, outcome=np.asarray(outcome, dtype=float))

    def to_csv_bytes(self):
        buf = io.StringIO()
        _write_dataset(self, buf)
        return buf.getvalue().encode("utf-8")

    def fingerprint(self):
        """SHA-256 of the canonical CSV serialization (truth excluded)."""
        return hashlib.sha256(self.to_csv_bytes()).hexdigest()

    def equals(self, other):
        return (
            np.array_equal(self.customer_id, other.customer_id)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
            and np.array_equal(self.propensities, other.propensities)
        )


# ---------------------------------------------------------------------------
# generation


def _default_effects(base, n_treatments):
    base = np.asarray(base, dtype=float)
    if base.ndim == 2:
        return base
    # arm k scales the base effect by 1 + 0.5 (k - 1)
    scale = 1.0 + 0.5 * np.arange(n_treatments - 1)
    return base[:, None] * scale[None, :]


def _segment_table(spec):
    """Resolve the per-segment tables for the segment-type processes."""
    p = dict(spec.params)
    defaults = _SEGMENT_DEFAULTS[spec.name]
    baseline = np.asarray(p.get("baseline", defaults["baseline"]), dtype=float)
    effects = _default_effects(p.get("effects", defaults["effects"]), spec.n_treatments)
    if effects.shape != (len(baseline), spec.n_treatments - 1):
        raise ConfigurationError(
            f"effects must have shape (n_segments, n_treatments - 1) = ({len(baseline)}, {spec.n_treatments - 1})"
        )
    return {
        "baseline": baseline,
        "effects": effects,
        "segment_feature": int(p.get("segment_feature", defaults.get("segment_feature", 0))),
        "baseline_slope": float(p.get("baseline_slope", defaults["baseline_slope"])),
        "outcome": p.get("outcome", defaults["outcome"]),
        "net_of_cost": bool(p.get("net_of_cost", defaults["net_of_cost"])),
    }


_SEGMENT_DEFAULTS = {
    "segments": {
        "baseline": [1.0, 0.5, 0.0, -0.5],
        "effects": [2.0, 1.0, 0.0, -1.0],
        "baseline_slope": 0.5,
        "outcome": "gaussian",
        "net_of_cost": False,
    },
    # retention probability per segment; the lowest-retention segment reacts negatively
    "retention_scenario": {
        "baseline": [0.55, 0.70, 0.80, 0.87, 0.93],
        "effects": [-0.08, 0.07, 0.02, -0.02, -0.01],
        "baseline_slope": 0.03,
        "outcome": "bernoulli",
        "net_of_cost": False,
    },
    # gross sales under the small reward, and sales lift of the large reward
    "reward_scenario": {
        "baseline": [120.0, 110.0, 100.0, 90.0, 80.0],
        "effects": [30.0, 15.0, 8.0, 3.0, 1.0],
        "baseline_slope": 15.0,
        "outcome": "gaussian",
        "net_of_cost": True,
    },
    # gross sales under the high threshold, and the lift of the low threshold;
    # net effect averages -0.6 on a mean net revenue of 200 (-0.3 % relative)
    "threshold_scenario": {
        "baseline": [230.0, 215.0, 200.0, 185.0, 170.0],
        "effects": [6.0, 3.5, 1.0, -1.0, -2.5],
        "baseline_slope": 20.0,
        "outcome": "gaussian",
        "net_of_cost": True,
    },
}


def _linear_expected(spec, X):
    d, k = spec.n_features, spec.n_treatments
    p = spec.params
    b0 = float(p.get("baseline_intercept", 1.0))
    bcoef = np.zeros(d)
    bcoef[: min(d, 2)] = [1.0, 0.5][: min(d, 2)]
    bcoef = np.asarray(p.get("baseline_coef", bcoef), dtype=float)
    eint = np.asarray(p.get("effect_intercept", 0.5 * np.arange(1, k)), dtype=float)
    ecoef = np.zeros((k - 1, d))
    ecoef[:, 0] = 1.0
    ecoef = np.asarray(p.get("effect_coef", ecoef), dtype=float).reshape(k - 1, d)
    if bcoef.shape != (d,) or eint.shape != (k - 1,):
        raise ConfigurationError("linear params have wrong shapes")
    mu0 = b0 + X @ bcoef
    tau = eint[None, :] + X @ ecoef.T
    po = np.column_stack([mu0, mu0[:, None] + tau])
    return po, tau, np.full(len(X), -1, dtype=np.int64), "gaussian", False


def _segments_expected(spec, X):
    table = _segment_table(spec)
    n_seg = len(table["baseline"])
    z = X[:, table["segment_feature"]]
    seg = np.minimum((ndtr(z) * n_seg).astype(np.int64), n_seg - 1)
    x_side = X[:, 1] if X.shape[1] > 1 and table["segment_feature"] != 1 else np.zeros(len(X))
    if table["outcome"] == "bernoulli":
        base = np.clip(table["baseline"][seg] + table["baseline_slope"] * np.tanh(x_side), 0.01, 0.99)
        po = np.column_stack([base, np.clip(base[:, None] + table["effects"][seg], 0.0, 1.0)])
        tau = po[:, 1:] - po[:, [0]]
    else:
        base = table["baseline"][seg] + table["baseline_slope"] * x_side
        tau = table["effects"][seg]
        po = np.column_stack([base, base[:, None] + tau])
    return po, tau, seg, table["outcome"], table["net_of_cost"]


def logging_propensities(spec, X):
    n, k = len(X), spec.n_treatments
    log = spec.logging
    if log.mode == "rct":
        probs = np.full(k, 1.0 / k) if log.probabilities is None else np.asarray(log.probabilities, dtype=float)
        return np.tile(probs, (n, 1))
    lo, hi = log.bounds
    treated = np.clip(expit(log.intercept + log.slope * X[:, log.feature]), lo, hi)
    out = np.empty((n, k))
    out[:, 0] = 1.0 - treated
    out[:, 1:] = (treated / (k - 1))[:, None]
    return out


def generate(spec: DgpSpec) -> ExperimentDataset:
    """Generate a dataset (with ground truth) from ``spec``."""
    spec.validate()
    n, d = spec.n_customers, spec.n_features
    ids = np.arange(n, dtype=np.int64)
    X = _random.normals(spec.seed, "features", ids, d)
    if spec.name == "linear":
        po, tau, seg, outcome_kind, net = _linear_expected(spec, X)
    else:
        po, tau, seg, outcome_kind, net = _segments_expected(spec, X)
    if net:
        po = po - spec.costs[None, :]
        tau = tau - spec.costs[None, 1:]
    props = logging_propensities(spec, X)

    u = _random.uniforms(spec.seed, "treatment", ids)[:, 0]
    cum = np.cumsum(props, axis=1)
    T = (u[:, None] >= cum[:, :-1]).sum(axis=1).astype(np.int64)

    selected = po[ids, T]
    if outcome_kind == "bernoulli":
        y = (_random.uniforms(spec.seed, "outcome", ids)[:, 0] < selected).astype(float)
    elif spec.noise_sd > 0:
        y = selected + spec.noise_sd * _random.normals(spec.seed, "noise", ids)[:, 0]
    else:
        y = selected.copy()

    # tau comes straight from the effect tables; po[:, k] - po[:, 0] matches it to rounding
    truth = GroundTruth(ids.copy(), po, np.array(tau, dtype=float), seg)
    meta = {"source": "dgp", "dgp": spec.to_dict(), "outcome_model": outcome_kind, "net_of_cost": net}
    return ExperimentDataset(ids, X, T, y, props, truth, meta)


def scenario_preset(name, n_customers=20_000, seed=0) -> DgpSpec:
    """Scenario presets mirroring the retention, reward, and threshold campaigns.

    Effect magnitudes are illustrative, except the threshold preset whose
    average net-revenue gap of the lower threshold is -0.3 % relative.
    """
    key = PRESETS.get(name, name)
    if key not in PRESETS.values():
        raise ConfigurationError(f"unknown scenario preset {name!r}; expected one of {sorted(PRESETS)}")
    if key == "retention_scenario":
        spec = DgpSpec(
            name=key, n_customers=n_customers, noise_sd=0.0, seed=seed, cost_per_treatment=(0.0, 1.0),
            params={"magnitudes": "illustrative", "outcome_label": "retained"},
        )
    elif key == "reward_scenario":
        spec = DgpSpec(
            name=key, n_customers=n_customers, noise_sd=20.0, seed=seed, cost_per_treatment=(0.0, 10.0),
            params={"magnitudes": "illustrative", "outcome_label": "net_revenue", "arms": ["P1", "P2"]},
        )
    else:
        spec = DgpSpec(
            name=key, n_customers=n_customers, noise_sd=20.0, seed=seed, cost_per_treatment=(0.0, 2.0),
            params={
                "magnitudes": "illustrative except the -0.3% relative gap of the lower threshold",
                "outcome_label": "net_revenue",
                "arms": ["S2", "S1"],
            },
        )
    return spec.validate()


def expected_segment_effects(spec):
    """Per-segment expected effects (net of cost where applicable), shape (S, K-1)."""
    table = _segment_table(spec)
    effects = table["effects"]
    if table["net_of_cost"]:
        effects = effects - spec.costs[None, 1:]
    return effects


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(x):
    return format(float(x), ".17g")


def _write_dataset(ds, fh):
    d, k = ds.n_features, ds.n_arms
    header = ["customer_id", *(f"f{j}" for j in range(d)), "treatment", "outcome", *(f"p{j}" for j in range(k))]
    fh.write(",".join(header) + "\n")
    for c, x, t, y, p in zip(ds.customer_id, ds.features, ds.treatment, ds.outcome, ds.propensities):
        fh.write(",".join([str(int(c)), *map(_fmt, x), str(int(t)), _fmt(y), *map(_fmt, p)]) + "\n")


def save_csv(dataset, path):
    """Write the dataset CSV (truth is written separately by :func:`save_truth`)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_dataset(dataset, fh)


def _indexed_columns(header, prefix):
    cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
    expected = [f"{prefix}{j}" for j in range(len(cols))]
    if cols != expected:
        raise IngestionError(f"columns {prefix}0..{prefix}{len(cols) - 1} must be contiguous and ordered", row=1)
    return cols


def _parse_float(value, line, column):
    try:
        return float(value)
    except ValueError:
        raise IngestionError(f"column {column!r}: cannot parse {value!r} as a number", row=line) from None


def load_csv(path) -> ExperimentDataset:
    """Read a dataset CSV; errors carry the offending line number (header is line 1)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("file is empty; header row required", row=1) from None
        for required in ("customer_id", "treatment", "outcome"):
            if required not in header:
                raise IngestionError(f"missing column {required!r}", row=1)
        fcols = _indexed_columns(header, "f")
        pcols = _indexed_columns(header, "p")
        expected = ["customer_id", *fcols, "treatment", "outcome", *pcols]
        if header != expected:
            raise IngestionError(f"header must be {','.join(expected)}", row=1)
        d, k = len(fcols), len(pcols)
        if k < 2:
            raise IngestionError("at least two propensity columns (p0, p1) required", row=1)
        ids, X, T, Y, P = [], [], [], [], []
        seen = set()
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestionError(f"expected {len(header)} fields, found {len(row)} (inconsistent K or d)", row=line)
            try:
                cid = int(row[0])
            except ValueError:
                raise IngestionError(f"customer_id {row[0]!r} is not an integer", row=line) from None
            if cid in seen:
                raise IngestionError(f"duplicate customer_id {cid}", row=line)
            seen.add(cid)
            x = [_parse_float(v, line, f"f{j}") for j, v in enumerate(row[1 : 1 + d])]
            try:
                t = int(row[1 + d])
            except ValueError:
                raise IngestionError(f"treatment {row[1 + d]!r} is not an integer", row=line) from None
            if not 0 <= t < k:
                raise IngestionError(f"treatment {t} outside [0, {k})", row=line)
            y = _parse_float(row[2 + d], line, "outcome")
            p = [_parse_float(v, line, f"p{j}") for j, v in enumerate(row[3 + d :])]
            if any(not (0 < v <= 1) for v in p):
                raise IngestionError("propensities must lie in (0, 1]", row=line)
            if abs(math.fsum(p) - 1.0) > _PROPENSITY_TOL:
                raise IngestionError("propensities must sum to 1", row=line)
            ids.append(cid)
            X.append(x)
            T.append(t)
            Y.append(y)
            P.append(p)
    n = len(ids)
    return ExperimentDataset(
        np.asarray(ids, dtype=np.int64),
        np.asarray(X, dtype=float).reshape(n, d),
        np.asarray(T, dtype=np.int64),
        np.asarray(Y, dtype=float),
        np.asarray(P, dtype=float).reshape(n, k),
        None,
        {"source": "csv", "path": str(path)},
    )


def save_truth(truth, path):
    k = truth.potential_outcomes.shape[1]
    header = ["customer_id", *(f"y{j}" for j in range(k)), *(f"tau{j}" for j in range(1, k)), "segment"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for c, po, tau, s in zip(truth.customer_id, truth.potential_outcomes, truth.true_cate, truth.segment_label):
            fh.write(",".join([str(int(c)), *map(_fmt, po), *map(_fmt, tau), str(int(s))]) + "\n")


def load_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("truth file is empty", row=1) from None
        ycols = _indexed_columns(header, "y")
        k = len(ycols)
        expected = ["customer_id", *ycols, *(f"tau{j}" for j in range(1, k)), "segment"]
        if header != expected:
            raise IngestionError(f"truth header must be {','.join(expected)}", row=1)
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestionError(f"expected {len(header)} fields, found {len(row)}", row=line)
            rows.append(row)
    n = len(rows)
    ids = np.asarray([int(r[0]) for r in rows], dtype=np.int64)
    po = np.asarray([[float(v) for v in r[1 : 1 + k]] for r in rows], dtype=float).reshape(n, k)
    tau = np.asarray([[float(v) for v in r[1 + k : 2 * k]] for r in rows], dtype=float).reshape(n, k - 1)
    seg = np.asarray([int(r[-1]) for r in rows], dtype=np.int64)
    return GroundTruth(ids, po, tau, seg)


def attach_truth(dataset, truth):
    return replace(dataset, truth=truth)
