import types
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_dataset
from upliftguard.allocator import AllocationProblem, solve
from upliftguard.exceptions import (
    ConsistencyError,
    EvaluationError,
    NoOverlapWarning,
    UndefinedEstimateError,
)
from upliftguard.learners import UpliftModelSpec, fit, predict
from upliftguard.offline_eval import (
    build_report,
    dumps,
    ips,
    plot_sweep,
    plot_uplift_curves,
    snips,
    true_value,
    uplift_curve,
)
from upliftguard.schemas import validate
from upliftguard.synthpop import DgpSpec, LoggingSpec, generate


def _hand():
    # customers already in score order
    return make_dataset(np.zeros(4), [1, 0, 1, 0], [1, 0, 0, 1])


def _random_rct(seed, n, outcome=None):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, n)
    t[:2] = [0, 1]
    y = rng.normal(size=n) if outcome is None else outcome(rng, n)
    return make_dataset(rng.normal(size=n), t, y), rng.normal(size=n)


# ---------------------------------------------------------------------------
# uplift curve


def test_hand_uplift_curve():
    curve = uplift_curve(np.array([4.0, 3.0, 2.0, 1.0]), _hand())
    assert curve.points == pytest.approx([(1, 0.0), (2, 0.5), (3, 0.375), (4, 0.0)])
    # trapezoid from the origin over r / N
    expected = 0.25 * (0 + 0) / 2 + 0.25 * (0 + 0.5) / 2 + 0.25 * (0.5 + 0.375) / 2 + 0.25 * (0.375 + 0) / 2
    assert curve.auc == pytest.approx(expected, abs=1e-15)


def test_ties_are_broken_by_customer_id():
    assert uplift_curve(np.zeros(4), _hand()).points == uplift_curve(-np.arange(4.0), _hand()).points


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 300), c=st.floats(-1e3, 1e3))
def test_constant_outcomes_give_zero_curve(seed, n, c):
    data, scores = _random_rct(seed, n, outcome=lambda rng, n: np.full(n, c))
    curve = uplift_curve(scores, data)
    assert np.all(curve.values == 0) and curve.auc == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 300))
def test_endpoint_is_difference_in_means(seed, n):
    data, scores = _random_rct(seed, n)
    y, t = data.outcome, data.treatment
    assert abs(uplift_curve(scores, data).values[-1] - (y[t == 1].mean() - y[t == 0].mean())) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 200), c=st.floats(-100, 100))
def test_shift_covariance(seed, n, c):
    data, scores = _random_rct(seed, n)
    shifted = data.with_outcome(data.outcome + c)
    assert np.allclose(uplift_curve(scores, shifted).values, uplift_curve(scores, data).values, rtol=0, atol=1e-9)
    policy = np.random.default_rng(seed).integers(0, 2, n)
    if np.any(policy == data.treatment):
        assert snips(policy, shifted) == pytest.approx(snips(policy, data) + c, abs=1e-9)


def test_curve_uses_only_control_and_the_arm():
    rng = np.random.default_rng(0)
    t = np.tile([0, 1, 2], 20)
    data = make_dataset(rng.normal(size=60), t, rng.normal(size=60), n_arms=3)
    curve = uplift_curve(rng.normal(size=(60, 2)), data, arm=2)
    assert curve.ranks.tolist() == list(range(1, 41))
    assert curve.normalized_ranks[-1] == 1.0


def test_curve_errors():
    data = make_dataset(np.zeros(4), [0, 0, 0, 0], [1, 0, 1, 0])
    with pytest.raises(EvaluationError):
        uplift_curve(np.zeros(4), data)
    with pytest.raises(EvaluationError):
        uplift_curve(np.zeros(3), _hand())
    with pytest.raises(EvaluationError):
        uplift_curve(np.zeros(4), _hand(), arm=2)


def test_oracle_ranking_dominates_on_average():
    spec = DgpSpec("segments", 20_000, seed=2)
    train, test = generate(spec), generate(spec.with_(seed=3))
    oracle = uplift_curve(test.truth.true_cate, test).auc
    model = fit(UpliftModelSpec("t_learner", base="regression_tree"), train.without_truth())
    fitted = uplift_curve(predict(model, test), test).auc
    assert oracle >= 0.99 * fitted


# ---------------------------------------------------------------------------
# IPS / SNIPS


def test_hand_ips_and_snips():
    data = make_dataset(np.zeros(4), [1, 0, 0, 1], [1, 0, 0, 1])
    est = ips(data.treatment, data)
    assert est.ips == pytest.approx(1.0) and est.snips == pytest.approx(0.5)
    assert est.match_count == 4 and est.effective_sample_size == pytest.approx(4.0)


def test_no_overlap():
    data = make_dataset(np.zeros(4), [1, 0, 0, 1], [1, 0, 0, 1])
    with pytest.warns(NoOverlapWarning):
        est = ips(1 - data.treatment, data)
    assert est.ips == 0 and est.snips is None and est.match_count == 0
    with pytest.raises(UndefinedEstimateError):
        snips(1 - data.treatment, data)


class _Records:
    # datasets refuse zero propensities, so use a bare record container
    customer_id = np.arange(2)
    treatment = np.array([0, 1])
    outcome = np.array([1.0, 2.0])
    logged_propensity = np.array([0.5, 0.0])
    n_arms = 2

    def __len__(self):
        return 2


def test_zero_propensity_on_matched_record():
    with pytest.raises(EvaluationError, match="zero logged propensity"):
        ips(np.array([0, 1]), _Records())
    # the zero sits on an unmatched record here, which is fine
    assert ips(np.array([0, 0]), _Records()).ips == pytest.approx(1.0)


def test_policy_must_cover_the_data():
    data = _hand()
    with pytest.raises(EvaluationError):
        ips(np.zeros(3, dtype=int), data)
    with pytest.raises(EvaluationError):
        ips(np.full(4, 5), data)


def test_policy_is_aligned_by_customer_id():
    data = make_dataset(np.zeros(4), [1, 0, 0, 1], [1, 0, 0, 1])
    policy = types.SimpleNamespace(assignment=np.array([1, 0, 0, 1])[::-1], customer_id=np.arange(4)[::-1])
    assert ips(policy, data).match_count == 4


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 300), k=st.integers(2, 4))
def test_snips_is_a_convex_combination(seed, n, k):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k), n) + 1e-3
    p /= p.sum(axis=1, keepdims=True)
    t = np.array([rng.choice(k, p=row) for row in p])
    y = rng.uniform(0, 1, n)
    data = make_dataset(np.zeros(n), t, y, p)
    policy = rng.integers(0, k, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoOverlapWarning)
        est = ips(policy, data)
    assert est.match_count <= n
    if est.match_count:
        matched = policy == t
        assert y[matched].min() - 1e-12 <= est.snips <= y[matched].max() + 1e-12
        w = 1 / p[np.arange(n), t][matched]
        assert est.effective_sample_size == pytest.approx(w.sum() ** 2 / (w @ w))


def test_snips_self_evaluation():
    # a fresh draw from the logging policy, scored against the logged data
    data = generate(DgpSpec("segments", 10_000, logging=LoggingSpec("observational"), seed=6))
    rng = np.random.default_rng(1)
    u = rng.uniform(size=len(data))
    policy = (u[:, None] >= np.cumsum(data.propensities, axis=1)[:, :-1]).sum(axis=1)
    est = ips(policy, data)
    matched = policy == data.treatment
    w = 1 / data.logged_propensity[matched]
    y = data.outcome[matched]
    se_snips = np.sqrt(np.sum(w**2 * (y - est.snips) ** 2)) / w.sum()
    se_mean = data.outcome.std(ddof=1) / np.sqrt(len(data))
    assert abs(est.snips - data.outcome.mean()) <= 3 * np.hypot(se_snips, se_mean)


def test_snips_bounded_on_retention():
    data = generate(DgpSpec("retention_scenario", 3000, noise_sd=0.0, seed=2, cost_per_treatment=(0.0, 1.0)))
    for seed in range(10):
        policy = np.random.default_rng(seed).integers(0, 2, len(data))
        assert 0 <= snips(policy, data) <= 1


def test_estimates_ignore_truth():
    data = generate(DgpSpec("segments", 500, seed=1))
    policy = np.random.default_rng(0).integers(0, 2, 500)
    assert ips(policy, data) == ips(policy, data.without_truth())
    scores = np.arange(500.0)
    assert uplift_curve(scores, data).auc == uplift_curve(scores, data.without_truth()).auc


# ---------------------------------------------------------------------------
# ground truth


def test_true_value_baselines():
    data = generate(DgpSpec("segments", 1000, n_treatments=3, seed=4))
    po = data.truth.potential_outcomes
    rep = true_value(np.zeros(1000, dtype=int), data.truth)
    assert rep.true_value == pytest.approx(po[:, 0].mean())
    assert rep.baseline_values["treat_no_one"] == pytest.approx(po[:, 0].mean())
    assert rep.baseline_values["treat_everyone_arm_2"] == pytest.approx(po[:, 2].mean())
    oracle = true_value(po.argmax(axis=1), data.truth)
    assert oracle.regret_vs_oracle == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 200))
def test_regret_is_non_negative(seed, n):
    data = generate(DgpSpec("segments", n, n_treatments=3, seed=seed))
    policy = np.random.default_rng(seed).integers(0, 3, n)
    assert true_value(policy, data.truth).regret_vs_oracle >= 0


def test_missing_truth():
    with pytest.raises(EvaluationError):
        true_value(np.zeros(3, dtype=int), None)
    data = generate(DgpSpec("segments", 10))
    with pytest.raises(EvaluationError):
        true_value(np.zeros(4, dtype=int), data.truth)


def test_optimized_policy_beats_static_baselines():
    spec = DgpSpec("segments", 20_000, seed=12)
    train, test = generate(spec), generate(spec.with_(seed=13))
    model = fit(UpliftModelSpec("t_learner", base="regression_tree"), train.without_truth())
    policy = solve(AllocationProblem(predict(model, test)), "greedy_lagrangian")
    rep = true_value(policy, test.truth)
    assert rep.true_value >= max(rep.baseline_values.values())


# ---------------------------------------------------------------------------
# report


def _report_parts():
    data = generate(DgpSpec("segments", 800, seed=5))
    visible = data.without_truth()
    cate = predict(fit(UpliftModelSpec("t_learner", base="ridge"), visible), visible)
    policy = solve(AllocationProblem(cate))
    return data, visible, cate, policy


def test_report_validates_and_is_deterministic():
    data, visible, cate, policy = _report_parts()
    doc = build_report(visible, policy, cate, data.truth, policy.audit.to_dict(), seeds={"model": 0})
    validate(doc, "evaluation_report")
    assert doc["truth"]["abs_ips_error"] == pytest.approx(abs(doc["policy_value"]["ips"] - doc["truth"]["true_value"]))
    again = build_report(visible, policy, cate, data.truth, policy.audit.to_dict(), seeds={"model": 0})
    assert dumps(doc) == dumps(again)


def test_report_without_truth():
    _, visible, cate, policy = _report_parts()
    doc = build_report(visible, policy, cate)
    assert doc["truth"] is None and doc["policy_value"]["match_count"] > 0


def test_report_fingerprint_mismatch():
    data, visible, cate, policy = _report_parts()
    other = generate(DgpSpec("segments", 800, seed=6))
    with pytest.raises(ConsistencyError, match="fingerprint mismatch"):
        build_report(other, policy, cate)


def test_plots_are_reproducible(tmp_path):
    from upliftguard.allocator import Budget, ConstraintSet, sensitivity_sweep

    _, visible, cate, _ = _report_parts()
    curve = uplift_curve(cate, visible)
    plot_uplift_curves([curve], tmp_path / "a.svg")
    plot_uplift_curves([curve], tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert (tmp_path / "a.svg").read_text().lstrip().startswith("<?xml")
    problem = AllocationProblem(cate, constraints=ConstraintSet((Budget(1, 100),)))
    points = sensitivity_sweep(problem, "budget_arm1", [0, 100, 400])
    plot_sweep(points, "budget_arm1", tmp_path / "s.svg")
    assert (tmp_path / "s.svg").stat().st_size > 0
