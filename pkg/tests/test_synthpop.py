import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upliftguard.exceptions import ConfigurationError, IngestionError
from upliftguard.synthpop import (
    DgpSpec,
    LoggingSpec,
    expected_segment_effects,
    generate,
    load_csv,
    load_truth,
    save_csv,
    save_truth,
    scenario_preset,
)


def test_same_spec_gives_byte_identical_dataset():
    spec = DgpSpec("segments", 500, n_treatments=3, seed=11)
    a, b = generate(spec), generate(spec)
    assert a.to_csv_bytes() == b.to_csv_bytes()
    assert np.array_equal(a.truth.potential_outcomes, b.truth.potential_outcomes)


def test_different_seed_changes_data():
    a = generate(DgpSpec("segments", 200, seed=1))
    b = generate(DgpSpec("segments", 200, seed=2))
    assert a.fingerprint() != b.fingerprint()


@settings(max_examples=20, deadline=None)
@given(n_small=st.integers(1, 60), extra=st.integers(1, 60), seed=st.integers(0, 2**64 - 1))
def test_records_do_not_depend_on_population_size(n_small, extra, seed):
    # counter-based draws: customer i's record is the same whatever N is
    small = generate(DgpSpec("segments", n_small, seed=seed, n_treatments=3))
    large = generate(DgpSpec("segments", n_small + extra, seed=seed, n_treatments=3))
    part = large.subset(np.arange(n_small))
    assert small.equals(part)
    assert np.array_equal(small.truth.potential_outcomes, part.truth.potential_outcomes)


def test_zero_effect_linear_process():
    spec = DgpSpec(
        "linear", 1000, n_features=3, n_treatments=3, noise_sd=0.0,
        params={"effect_intercept": [0.0, 0.0], "effect_coef": np.zeros((2, 3)).tolist(), "baseline_coef": [0, 0, 0]},
    )
    data = generate(spec)
    assert np.all(data.truth.true_cate == 0)
    y = data.outcome
    for arm in (1, 2):
        assert y[data.treatment == arm].mean() - y[data.treatment == 0].mean() == 0.0


def test_segment_table_is_read_back_exactly():
    table = [2.0, 1.0, 0.0, -1.0]
    spec = DgpSpec("segments", 2000, noise_sd=0.0, params={"effects": table, "baseline": [0.0, 0.0, 0.0, 0.0]})
    data = generate(spec)
    seg = data.truth.segment_label
    assert set(np.unique(seg)) == {0, 1, 2, 3}
    assert np.array_equal(data.truth.true_cate[:, 0], np.asarray(table)[seg])
    assert np.array_equal(expected_segment_effects(spec)[:, 0], table)


@pytest.mark.parametrize("name", ["linear", "segments", "retention_scenario", "reward_scenario"])
def test_true_cate_matches_potential_outcomes(name):
    data = generate(DgpSpec(name, 300, n_treatments=3, noise_sd=0.0, cost_per_treatment=(0.0, 1.0, 3.0)))
    po = data.truth.potential_outcomes
    np.testing.assert_allclose(data.truth.true_cate, po[:, 1:] - po[:, [0]], rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", ["linear", "segments", "reward_scenario", "threshold_scenario"])
def test_noiseless_outcome_is_selected_potential_outcome(name):
    data = generate(DgpSpec(name, 500, noise_sd=0.0, cost_per_treatment=(0.0, 1.0)))
    po = data.truth.potential_outcomes
    assert np.array_equal(data.outcome, po[np.arange(len(data)), data.treatment])


def test_rct_arm_shares_converge():
    data = generate(DgpSpec("segments", 100_000, seed=5))
    share = np.bincount(data.treatment, minlength=2) / len(data)
    assert np.all((share >= 0.49) & (share <= 0.51))


def test_segment_difference_in_means_converges():
    data = generate(DgpSpec("segments", 50_000, seed=9))
    seg, t, y = data.truth.segment_label, data.treatment, data.outcome
    effects = expected_segment_effects(DgpSpec("segments", 1))[:, 0]
    assert np.any(effects < 0)
    for s, tau in enumerate(effects):
        y1, y0 = y[(seg == s) & (t == 1)], y[(seg == s) & (t == 0)]
        se = np.sqrt(y1.var(ddof=1) / len(y1) + y0.var(ddof=1) / len(y0))
        assert abs(y1.mean() - y0.mean() - tau) <= 3 * se


def test_observational_logging_keeps_full_support():
    spec = DgpSpec("segments", 5000, logging=LoggingSpec("observational", slope=4.0))
    data = generate(spec)
    p1 = data.propensities[:, 1]
    assert p1.min() >= 0.05 and p1.max() <= 0.95
    assert np.corrcoef(p1, data.features[:, 0])[0, 1] > 0.5
    assert np.allclose(data.propensities.sum(axis=1), 1.0, atol=1e-12)


def test_retention_preset():
    spec = scenario_preset("retention")
    assert spec.n_treatments == 2
    assert np.any(expected_segment_effects(spec) < 0)
    data = generate(spec.with_(n_customers=3000))
    assert set(np.unique(data.outcome)) <= {0.0, 1.0}


def test_reward_preset_costs():
    costs = scenario_preset("reward").costs
    assert costs[0] == 0 and costs[1] > costs[0]


def test_reward_outcome_is_net_of_cost():
    spec = scenario_preset("reward", 2000)
    data = generate(spec.with_(noise_sd=0.0))
    gross = generate(spec.with_(noise_sd=0.0, cost_per_treatment=(0.0, 0.0)))
    diff = gross.truth.potential_outcomes - data.truth.potential_outcomes
    assert np.allclose(diff, spec.costs[None, :])


def test_threshold_preset_gap():
    spec = scenario_preset("threshold")
    # segments are equally likely, so the expected gap follows from the table
    gap = expected_segment_effects(spec).mean()
    baseline = np.mean(spec.params.get("baseline", [230.0, 215.0, 200.0, 185.0, 170.0]))
    assert gap / baseline == pytest.approx(-0.003, abs=1e-12)
    po = generate(spec.with_(n_customers=200_000)).truth.potential_outcomes
    assert (po[:, 1] - po[:, 0]).mean() / po[:, 0].mean() == pytest.approx(-0.003, abs=3e-4)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        scenario_preset("holiday")


@pytest.mark.parametrize(
    "changes",
    [
        {"n_customers": 0},
        {"n_treatments": 1},
        {"noise_sd": -1.0},
        {"cost_per_treatment": (1.0, 0.0)},
        {"cost_per_treatment": (0.0, -1.0)},
        {"logging": {"mode": "rct", "probabilities": [1.0, 0.0]}},
        {"logging": {"mode": "rct", "probabilities": [0.5, 0.6]}},
        {"logging": {"mode": "observational", "bounds": [0.0, 0.9]}},
        {"name": "spiral"},
    ],
)
def test_invalid_spec(changes):
    with pytest.raises(ConfigurationError):
        generate(DgpSpec("segments", 10).with_(**changes))


def test_spec_json_round_trip():
    spec = DgpSpec("linear", 50, n_treatments=3, logging=LoggingSpec("observational"), cost_per_treatment=(0, 1, 2))
    back = DgpSpec.from_dict(json.loads(spec.to_json()))
    assert back == spec
    assert generate(back).to_csv_bytes() == generate(spec).to_csv_bytes()


def test_spec_json_rejects_unknown_fields():
    with pytest.raises(ConfigurationError):
        DgpSpec.from_dict({"name": "segments", "n_customers": 5, "colour": "red"})
    with pytest.raises(ConfigurationError):
        DgpSpec.from_dict({"name": "segments"})


def test_csv_round_trip(tmp_path):
    data = generate(DgpSpec("segments", 300, n_treatments=3, logging=LoggingSpec("observational"), seed=4))
    save_csv(data, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert back.equals(data)
    assert back.truth is None
    assert back.fingerprint() == data.fingerprint()
    save_truth(data.truth, tmp_path / "t.csv")
    truth = load_truth(tmp_path / "t.csv")
    for name in ("customer_id", "potential_outcomes", "true_cate", "segment_label"):
        assert np.array_equal(getattr(truth, name), getattr(data.truth, name))


def test_csv_header(tmp_path):
    data = generate(DgpSpec("segments", 3, n_features=2, n_treatments=3))
    save_csv(data, tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "customer_id,f0,f1,treatment,outcome,p0,p1,p2"
    save_truth(data.truth, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "customer_id,y0,y1,y2,tau1,tau2,segment"


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_header_only_file_is_empty_dataset(tmp_path):
    data = load_csv(_write(tmp_path / "d.csv", ["customer_id,f0,treatment,outcome,p0,p1"]))
    assert len(data) == 0
    assert data.n_arms == 2 and data.n_features == 1


def test_propensities_not_summing_to_one(tmp_path):
    path = _write(tmp_path / "d.csv", ["customer_id,f0,treatment,outcome,p0,p1", "0,1.0,0,1.0,0.5,0.5", "1,0.0,1,0.0,0.6,0.6"])
    with pytest.raises(IngestionError, match="propensities must sum to 1") as err:
        load_csv(path)
    assert err.value.row == 3


@pytest.mark.parametrize(
    "lines, row",
    [
        (["customer_id,f0,outcome,p0,p1", "0,1,1,0.5,0.5"], 1),
        (["customer_id,f0,treatment,outcome,p0,p1", "0,1,0,1,0.5,0.5,0.0"], 2),
        (["customer_id,f0,treatment,outcome,p0,p1", "0,1,2,1,0.5,0.5"], 2),
        (["customer_id,f0,treatment,outcome,p0,p1", "0,1,0,1,0.5,0.5", "0,1,0,1,0.5,0.5"], 3),
        (["customer_id,f0,treatment,outcome,p0,p1", "0,x,0,1,0.5,0.5"], 2),
        (["customer_id,f0,treatment,outcome,p0,p1", "0,1,0,1,0.0,1.0"], 2),
        (["customer_id,f0,treatment,outcome,p0"], 1),
    ],
)
def test_ingestion_errors_name_the_row(tmp_path, lines, row):
    with pytest.raises(IngestionError) as err:
        load_csv(_write(tmp_path / "d.csv", lines))
    assert err.value.row == row


def test_dataset_is_immutable(segments_small):
    with pytest.raises(ValueError):
        segments_small.outcome[0] = 1.0


def test_records_view(segments_small):
    rec = segments_small.records[7]
    assert rec.customer_id == 7
    assert rec.treatment == segments_small.treatment[7]
    assert rec.logging_propensities.sum() == pytest.approx(1.0)
