"""Acceptance criteria 1-9, each reported as one PASS/FAIL line in the terminal summary."""
import filecmp
import json
import os
import time

import numpy as np

from helpers import objective_ratio_ok, random_instance
from upliftguard import pipeline
from upliftguard.allocator import (
    AllocationProblem,
    Bucketing,
    Budget,
    ConstraintSet,
    RevenueFloor,
    solve,
    solve_bucketed,
    solve_exact,
)
from upliftguard.learners import UpliftModelSpec, fit, predict
from upliftguard.offline_eval import ips, snips, true_value, uplift_curve
from upliftguard.synthpop import DgpSpec, LoggingSpec, generate, scenario_preset


def test_c1_bucketed_matches_exact(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    bad, feasible = 0, 0
    for _ in range(200):
        problem = random_instance(rng)
        exact = solve_exact(problem)
        heuristic = solve_bucketed(problem, Bucketing.identity(problem.n))
        if exact.feasible:
            feasible += 1
            if not (heuristic.feasible and objective_ratio_ok(heuristic.objective_value, exact.objective_value)):
                bad += 1
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 60
    criterion(1, ok, f"{bad} misses over {feasible} feasible instances, {elapsed:.1f}s")
    assert ok


def _large_instance(rng, n=100_000):
    base = rng.uniform(50, 150, n)
    sales = np.column_stack([base, base * (1 + rng.uniform(-0.02, 0.02, n)), base * (1 + rng.uniform(0, 0.05, n))])
    tau = np.column_stack([rng.normal(0.2, 1, n), rng.normal(0.1, 1, n)])
    b1, b2 = int(rng.uniform(0.1, 0.5) * n), int(rng.uniform(0.6, 0.9) * n)
    cs = ConstraintSet((Budget(1, b1), Budget(2, b2)), RevenueFloor(2, 0.01))
    return AllocationProblem(tau, sales_estimates=sales, constraints=cs), (b1, b2)


def test_c2_guardrails_hold_at_scale(criterion):
    rng = np.random.default_rng(7)
    failures, slowest = 0, 0.0
    for _ in range(50):
        problem, (b1, b2) = _large_instance(rng)
        start = time.perf_counter()
        policy = solve(problem, "greedy_lagrangian", n_buckets=100)
        slowest = max(slowest, time.perf_counter() - start)
        # audit recomputed from the raw assignment, not taken from the solver
        a = policy.assignment
        sales = problem.sales_estimates
        det = 1 - sales[np.arange(len(a)), a].sum() / sales[:, 2].sum()
        counts_ok = np.sum(a == 1) <= b1 and np.sum(a == 2) <= b2
        if not (counts_ok and det <= 0.01 + 1e-9 and not policy.audit.hard_violations):
            failures += 1
    ok = failures == 0 and slowest < 5
    criterion(2, ok, f"{failures} audit failures in 50 solves, slowest {slowest:.2f}s")
    assert ok


def test_c3_ips_unbiased_and_snips_bounded(criterion):
    spec = DgpSpec("segments", 2000)
    diffs = []
    for rep in range(500):
        data = generate(spec.with_(seed=rep))
        policy = (data.features[:, 0] > 0).astype(int)
        diffs.append(ips(policy, data).ips - true_value(policy, data.truth).true_value)
    diffs = np.asarray(diffs)
    se = diffs.std(ddof=1) / np.sqrt(len(diffs))
    unbiased = abs(diffs.mean()) <= 2 * se

    retention = scenario_preset("retention", 2000)
    inside = 0
    for rep in range(500):
        data = generate(retention.with_(seed=rep))
        policy = (data.features[:, 0] > 0).astype(int)
        inside += 0 <= snips(policy, data) <= 1
    ok = unbiased and inside == 500
    criterion(3, ok, f"mean IPS - true = {diffs.mean():+.4f} (2SE {2 * se:.4f}); SNIPS in [0,1] {inside}/500")
    assert ok


def test_c4_uplift_curve_identities(criterion):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 2000))
        data = generate(DgpSpec("segments", n, seed=seed))
        if len(np.unique(data.treatment)) < 2:
            continue
        curve = uplift_curve(rng.normal(size=n), data)
        y, t = data.outcome, data.treatment
        worst = max(worst, abs(curve.values[-1] - (y[t == 1].mean() - y[t == 0].mean())))
    const = generate(DgpSpec("segments", 1000)).with_outcome(np.full(1000, 3.7))
    auc = uplift_curve(np.arange(1000.0), const).auc
    ok = worst <= 1e-12 and auc == 0
    criterion(4, ok, f"max endpoint error {worst:.2e}, constant-outcome AUC {auc}")
    assert ok


def _rmse(meta, spec):
    data = generate(spec)
    model = fit(UpliftModelSpec(meta, seed=spec.seed), data.without_truth())
    return float(np.sqrt(np.mean((predict(model, data).tau_hat - data.truth.true_cate) ** 2)))


def test_c5_cate_consistency(criterion):
    seeds = range(10)
    parts, ok = [], True
    for meta in ("t_learner", "causal_forest"):
        large = np.mean([_rmse(meta, DgpSpec("segments", 10_000, seed=s)) for s in seeds])
        small = np.mean([_rmse(meta, DgpSpec("segments", 1_000, seed=s)) for s in seeds])
        ok &= large < small
        parts.append(f"{meta} {large:.3f} < {small:.3f}")
    obs = np.mean([_rmse("dr_learner", DgpSpec("segments", 20_000, seed=s, logging=LoggingSpec("observational")))
                   for s in seeds])
    rct = np.mean([_rmse("dr_learner", DgpSpec("segments", 20_000, seed=s)) for s in seeds])
    ok &= obs <= 1.5 * rct
    parts.append(f"dr obs/rct {obs / rct:.3f}")
    criterion(5, ok, "; ".join(parts))
    assert ok


def test_c6_meta_learner_collapse(criterion):
    worst = {}
    for k in (2, 3):
        data = generate(DgpSpec("segments", 5000, n_treatments=k, seed=8)).without_truth()
        y, t = data.outcome, data.treatment
        dim = np.array([y[t == a].mean() - y[t == 0].mean() for a in range(1, k)])
        for meta in ("s_learner", "t_learner", "x_learner", "dr_learner"):
            tau = predict(fit(UpliftModelSpec(meta, base="mean"), data), data).tau_hat
            worst[meta] = max(worst.get(meta, 0.0), float(np.abs(tau - dim).max()))
    ok = max(worst.values()) <= 1e-9
    criterion(6, ok, "max deviation from difference in means: " + ", ".join(f"{m} {v:.1e}" for m, v in worst.items()))
    assert ok


def test_c7_retention_replay(criterion, tmp_path):
    cfg = pipeline.load_config({"seed": 0}, output_dir=str(tmp_path))
    start = time.perf_counter()
    replay = pipeline.cmd_replay(cfg, "retention")
    elapsed = time.perf_counter() - start
    rows = {r["policy"]: r for r in replay["rows"]}
    best = rows.pop("optimized")
    beaten = all(best["true_value"] > r["true_value"] for r in rows.values())
    ok = beaten and best["targeting_share"] < 1 and replay["n_customers"] == 20_000 and elapsed < 120
    others = ", ".join(f"{k} {r['true_value']:.4f}" for k, r in rows.items())
    criterion(7, ok, f"optimized {best['true_value']:.4f} vs {others}; "
                     f"targets {100 * best['targeting_share']:.1f}%, {elapsed:.0f}s")
    assert ok


def test_c8_oracle_ranking_dominates(criterion):
    train = generate(DgpSpec("segments", 20_000, seed=21)).without_truth()
    test = generate(DgpSpec("segments", 50_000, seed=22))
    oracle = uplift_curve(test.truth.true_cate, test).auc
    worst = np.inf
    for meta in ("s_learner", "t_learner", "x_learner", "dr_learner", "causal_forest"):
        auc = uplift_curve(predict(fit(UpliftModelSpec(meta), train), test), test).auc
        worst = min(worst, oracle - 0.99 * auc)
    ok = worst >= 0
    criterion(8, ok, f"oracle AUC {oracle:.4f}, smallest margin over 0.99 x model AUC {worst:.4f}")
    assert ok


_CONFIG = {
    "seed": 5,
    "dgp": {"name": "segments", "n_customers": 2000, "n_treatments": 3},
    "model": {"meta": "dr_learner"},
    "problem": {"constraints": {"budgets": [{"arm": 1, "max_count": 500}, {"arm": 2, "max_count": 300}]}},
    "sweep": {"constraint_id": "budget_arm2", "grid": [0, 150, 300, 600]},
}
_REPLAY_CONFIG = {"seed": 5, "model": {"meta": "causal_forest", "forest": {"n_trees": 50}}, "replay": {"n_customers": 3000}}


def _run_all(out):
    for command in ("generate", "fit", "optimize", "evaluate", "sweep"):
        cfg = pipeline.load_config(_CONFIG, output_dir=str(out))
        getattr(pipeline, f"cmd_{command}")(cfg)
    pipeline.cmd_replay(pipeline.load_config(_REPLAY_CONFIG, output_dir=str(out / "replay")), "reward")


def _manifest(path):
    doc = json.loads(path.read_text())
    doc.pop("created_at")
    return doc


def test_c9_determinism(criterion, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_all(a)
    _run_all(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    differ = []
    for rel in files:
        if rel.name.startswith("manifest."):
            same = _manifest(a / rel) == _manifest(b / rel)
        else:
            same = filecmp.cmp(a / rel, b / rel, shallow=False)
        if not same:
            differ.append(str(rel))
    same_set = files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    ok = not differ and same_set and len(files) > 0
    criterion(9, ok, f"{len(files)} artifacts compared, differing: {differ or 'none'}")
    assert ok
    assert os.path.exists(a / "replay" / "replay.json")
