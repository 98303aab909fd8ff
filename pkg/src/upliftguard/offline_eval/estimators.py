"""Uplift curves, importance-weighted policy values and ground-truth scoring."""
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import EvaluationError, NoOverlapWarning, UndefinedEstimateError


@dataclass(frozen=True, eq=False)
class UpliftCurve:
    """Cumulative uplift at every prefix ``r = 1 .. N`` of a ranking.

    ``auc`` integrates ``values`` over the normalized rank ``r / N`` with the
    trapezoid rule, starting from the origin ``(0, 0)``.
    """

    ranks: np.ndarray
    values: np.ndarray
    auc: float
    arm: int

    @property
    def points(self):
        return list(zip(self.ranks.tolist(), self.values.tolist()))

    @property
    def normalized_ranks(self):
        return self.ranks / max(1, len(self.ranks))


def _scores_for_arm(scores, arm):
    if hasattr(scores, "tau_hat"):
        return scores.tau_hat[:, arm - 1]
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        return s[:, arm - 1]
    return s


def uplift_curve(scores, data, arm=1):
    """Cumulative uplift curve of ``arm`` against control.

    Parameters
    ----------
    scores : array of shape (N,) or (N, K-1), or CateEstimateMatrix
        Ranking keys aligned with ``data``; higher means target first.  For a
        matrix the column of ``arm`` is used.
    data : ExperimentDataset
    arm : int, default=1

    Only records logged under control or ``arm`` take part; ``N`` is their
    count.  Customers are ranked by descending score, ties by ascending
    customer id.  At prefix ``r`` the value is ``(mean_treated - mean_control)
    * r / N`` over the prefix, or 0 while the prefix lacks either arm.
    """
    s = _scores_for_arm(scores, arm)
    if s.shape != (len(data),):
        raise EvaluationError(f"scores must have one entry per customer ({len(data)}), got shape {s.shape}")
    if not 1 <= arm < data.n_arms or not np.any(data.treatment == arm) or not np.any(data.treatment == 0):
        raise EvaluationError(f"arm {arm} and control must both be present in the data")
    keep = (data.treatment == 0) | (data.treatment == arm)
    s, cid = s[keep], data.customer_id[keep]
    t = data.treatment[keep] == arm
    y = data.outcome[keep]
    order = np.lexsort((cid, -s))
    t, y = t[order], y[order]
    # differences of means are shift invariant; centring keeps constant outcomes exactly zero
    y = y - y[0]
    n = len(y)
    n1 = np.cumsum(t)
    n0 = np.arange(1, n + 1) - n1
    y1 = np.cumsum(np.where(t, y, 0.0))
    y0 = np.cumsum(np.where(t, 0.0, y))
    both = (n1 > 0) & (n0 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.where(both, y1 / n1 - y0 / n0, 0.0)
    ranks = np.arange(1, n + 1)
    values = diff * ranks / n
    x = np.concatenate([[0.0], ranks / n])
    v = np.concatenate([[0.0], values])
    auc = float(np.sum((x[1:] - x[:-1]) * (v[1:] + v[:-1]) / 2.0))
    return UpliftCurve(ranks, values, auc, arm)


@dataclass(frozen=True)
class PolicyValueEstimate:
    ips: float
    snips: Optional[float]
    match_count: int
    effective_sample_size: float
    n: int


def _policy_arms(policy, data):
    """Policy actions aligned to ``data``'s customer order."""
    arms = np.asarray(getattr(policy, "assignment", policy), dtype=np.int64)
    ids = getattr(policy, "customer_id", None)
    if arms.shape != (len(data),):
        raise EvaluationError(f"policy covers {len(arms)} customers, data has {len(data)}")
    if ids is not None and not np.array_equal(ids, data.customer_id):
        pos = {int(c): i for i, c in enumerate(ids)}
        try:
            arms = arms[[pos[int(c)] for c in data.customer_id]]
        except KeyError as exc:
            raise EvaluationError(f"policy has no action for customer {exc.args[0]}") from None
    if np.any(arms < 0) or np.any(arms >= data.n_arms):
        raise EvaluationError("policy uses an arm index outside the data's arms")
    return arms


def _matched_weights(policy, data):
    arms = _policy_arms(policy, data)
    matched = arms == data.treatment
    rho = data.logged_propensity
    if np.any(rho[matched] <= 0):
        bad = int(data.customer_id[matched & (rho <= 0)][0])
        raise EvaluationError(f"zero logged propensity on matched record (customer {bad})")
    w = np.zeros(len(data))
    w[matched] = 1.0 / rho[matched]
    return w, matched


def ips(policy, data) -> PolicyValueEstimate:
    """Inverse-propensity and self-normalized estimates of the policy's mean outcome.

    Weights are ``1 / rho_{i, T_i}`` on records whose logged arm equals the
    policy's arm and zero elsewhere.  With no matched record the IPS value is
    0 (with a :class:`NoOverlapWarning`) and ``snips`` is ``None``.
    """
    w, matched = _matched_weights(policy, data)
    m = int(matched.sum())
    if m == 0:
        warnings.warn("policy matches no logged action; IPS is 0 and SNIPS undefined", NoOverlapWarning)
        return PolicyValueEstimate(0.0, None, 0, 0.0, len(data))
    num = float(w @ data.outcome)
    total = float(w.sum())
    ess = total**2 / float(w @ w)
    return PolicyValueEstimate(num / len(data), num / total, m, ess, len(data))


def snips(policy, data):
    """Self-normalized IPS value; raises :class:`UndefinedEstimateError` without matches."""
    w, matched = _matched_weights(policy, data)
    if not matched.any():
        raise UndefinedEstimateError("SNIPS is 0/0: the policy matches no logged action")
    return float(w @ data.outcome) / float(w.sum())


@dataclass(frozen=True)
class TruthReport:
    true_value: float
    regret_vs_oracle: float
    oracle_value: float
    baseline_values: dict = field(default_factory=dict)


def true_value(policy, truth) -> TruthReport:
    """Score a policy against known expected potential outcomes.

    ``true_value`` is the mean over customers of ``potential_outcomes[i, pi(i)]``;
    the oracle takes each customer's best arm with no constraints.
    """
    if truth is None:
        raise EvaluationError("no ground truth available for this dataset")
    po = truth.potential_outcomes
    arms = np.asarray(getattr(policy, "assignment", policy), dtype=np.int64)
    ids = getattr(policy, "customer_id", None)
    if ids is not None and not np.array_equal(ids, truth.customer_id):
        pos = {int(c): i for i, c in enumerate(truth.customer_id)}
        missing = [int(c) for c in ids if int(c) not in pos]
        if missing or len(ids) != len(truth.customer_id):
            raise EvaluationError("ground truth does not cover every customer in the policy")
        order = np.asarray([pos[int(c)] for c in ids])
        po = po[order]
    if arms.shape != (po.shape[0],):
        raise EvaluationError("ground truth does not cover every customer in the policy")
    rows = np.arange(len(arms))
    value = float(po[rows, arms].mean()) if len(arms) else 0.0
    oracle = float(po.max(axis=1).mean()) if len(arms) else 0.0
    baselines = {"treat_no_one": float(po[:, 0].mean()) if len(arms) else 0.0}
    for k in range(1, po.shape[1]):
        baselines[f"treat_everyone_arm_{k}"] = float(po[:, k].mean()) if len(arms) else 0.0
    return TruthReport(value, max(0.0, oracle - value), oracle, baselines)
