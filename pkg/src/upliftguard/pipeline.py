"""File-staged pipeline behind the command-line interface.

Each command reads its inputs from the output directory (or the paths named
in the config), writes its artifacts there and records a manifest with the
effective config, its hash, the seed and SHA-256 digests of every input and
output file.
"""
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__, _random
from .allocator import (
    AllocationProblem,
    ConstraintSet,
    PolicyAssignment,
    audit_document,
    load_policy,
    save_policy,
    sensitivity_sweep,
    solve,
)
from .exceptions import ConfigurationError, ConsistencyError, UpliftGuardError
from .learners import (
    UpliftModelSpec,
    fit,
    fit_arm_outcome_models,
    load_cate,
    load_model,
    predict,
    predict_arm_outcomes,
    save_cate,
    save_model,
)
from .learners.api import cate_fingerprint
from .offline_eval import build_report, ips, plot_sweep, plot_uplift_curves, true_value, uplift_curve, write_report
from .offline_eval.report import dumps
from .schemas import validate
from .synthpop import PRESETS, DgpSpec, generate, load_csv, load_truth, save_csv, save_truth, scenario_preset

FILES = {
    "dataset": "dataset.csv",
    "truth": "truth.csv",
    "dgp": "dgp.json",
    "model": "model.pkl",
    "cate": "cate.csv",
    "policy": "policy.csv",
    "audit": "audit.json",
    "report": "report.json",
    "uplift_plot": "uplift.svg",
    "sweep": "sweep.json",
    "sweep_plot": "sweep.svg",
    "replay": "replay.json",
    "replay_table": "replay.md",
    "population": "population.csv",
}

_PROBLEM_DEFAULTS = {
    "constraints": {},
    "weights": "uniform",
    "arm_costs": None,
    "solver": "auto",
    "n_buckets": 100,
    "exact_limit": 1e7,
    "sales_model": {"base": "ridge", "add_arm_cost": True},
}
_EVAL_DEFAULTS = {"uplift_arms": None, "plots": True, "baseline_quantile": 0.35}
_REPLAY_DEFAULTS = {"n_customers": 20_000, "train_fraction": 0.5}
# replays default to the honest forest with ridge-based propensity handling
_REPLAY_MODEL = {"meta": "causal_forest", "base": "ridge"}


class MissingArtifactError(UpliftGuardError):
    """An upstream command has not produced a file this command needs."""


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "."
    dgp: Optional[DgpSpec] = None
    dataset: Optional[str] = None
    truth: Optional[str] = None
    model: UpliftModelSpec = field(default_factory=UpliftModelSpec)
    problem: dict = field(default_factory=lambda: json.loads(json.dumps(_PROBLEM_DEFAULTS)))
    eval: dict = field(default_factory=lambda: dict(_EVAL_DEFAULTS))
    sweep: dict = field(default_factory=dict)
    replay: dict = field(default_factory=lambda: dict(_REPLAY_DEFAULTS))
    model_given: bool = False

    @property
    def constraints(self):
        return ConstraintSet.from_dict(self.problem["constraints"])

    def to_dict(self):
        """Effective configuration (what the config hash covers; the output directory is excluded)."""
        return {
            "seed": int(self.seed),
            "dgp": None if self.dgp is None else self.dgp.to_dict(),
            "dataset": self.dataset,
            "truth": self.truth,
            "model": self.model.to_dict(),
            "problem": self.problem,
            "eval": self.eval,
            "sweep": self.sweep,
            "replay": self.replay,
        }

    def hash(self):
        return _sha256_text(_canonical(self.to_dict()))

    def path(self, key):
        return os.path.join(self.output_dir, FILES[key])


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _sha256_text(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_seed(seed):
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    return int(seed)


def load_config(source=None, seed=None, output_dir=None):
    """Build a :class:`PipelineConfig` from a JSON file path, a dict, or nothing.

    ``seed`` (the ``--seed`` flag) overrides every seed in the config;
    otherwise the top-level seed fills in any section that does not set its
    own.  Relative dataset paths are resolved against the config file.
    """
    base_dir = "."
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = json.loads(json.dumps(source))
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {source}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {source} is not valid JSON: {exc}") from None
        base_dir = os.path.dirname(os.path.abspath(source))
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    validate(raw, "pipeline_config")

    top_seed = _check_seed(raw.get("seed", 0) if seed is None else seed)
    cfg = PipelineConfig(seed=top_seed)
    cfg.output_dir = output_dir or raw.get("output_dir") or "."
    if "dgp" in raw:
        d = dict(raw["dgp"])
        if seed is not None or "seed" not in d:
            d["seed"] = top_seed
        cfg.dgp = DgpSpec.from_dict(d).validate()
    if "dataset" in raw:
        path = raw["dataset"]
        cfg.dataset = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(cfg.dataset):
            raise ConfigurationError(f"dataset: file not found: {cfg.dataset}")
    if "truth" in raw:
        path = raw["truth"]
        cfg.truth = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.exists(cfg.truth):
            raise ConfigurationError(f"truth: file not found: {cfg.truth}")
    m = dict(raw.get("model") or {})
    cfg.model_given = "model" in raw
    if seed is not None or "seed" not in m:
        m["seed"] = top_seed
    cfg.model = UpliftModelSpec.from_dict(m)
    problem = json.loads(json.dumps(_PROBLEM_DEFAULTS))
    problem.update(raw.get("problem") or {})
    problem["sales_model"] = {**_PROBLEM_DEFAULTS["sales_model"], **(raw.get("problem", {}).get("sales_model") or {})}
    ConstraintSet.from_dict(problem["constraints"])
    cfg.problem = problem
    cfg.eval = {**_EVAL_DEFAULTS, **(raw.get("eval") or {})}
    cfg.sweep = dict(raw.get("sweep") or {})
    cfg.replay = {**_REPLAY_DEFAULTS, **(raw.get("replay") or {})}
    return cfg


# ---------------------------------------------------------------------------
# artifacts


def _require(path):
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing upstream artifact: {path}")
    return path


def _dataset_path(cfg):
    return cfg.dataset if cfg.dataset is not None else cfg.path("dataset")


def _load_dataset(cfg):
    return load_csv(_require(_dataset_path(cfg)))


def _truth_path(cfg):
    if cfg.truth is not None:
        return cfg.truth
    if cfg.dataset is None and os.path.exists(cfg.path("truth")):
        return cfg.path("truth")
    return None


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def write_manifest(cfg, command, inputs, outputs, extra=None):
    """``manifest.<command>.json`` next to the outputs; ``created_at`` is the only non-reproducible field."""
    doc = {
        "command": command,
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": int(cfg.seed),
        "inputs": {k: {"path": os.path.basename(p), "sha256": file_sha256(p)} for k, p in sorted(inputs.items())},
        "outputs": {k: {"path": os.path.basename(p), "sha256": file_sha256(p)} for k, p in sorted(outputs.items())},
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        doc.update(extra)
    path = os.path.join(cfg.output_dir, f"manifest.{command}.json")
    _write_json(doc, path)
    return path


def _costs(cfg, n_arms, dgp_meta=None):
    costs = cfg.problem.get("arm_costs")
    if costs is None and cfg.dgp is not None:
        costs = list(cfg.dgp.costs)
    if costs is None and dgp_meta:
        costs = list(DgpSpec.from_dict(dgp_meta).costs)
    if costs is None:
        costs = [0.0] * n_arms
    if len(costs) != n_arms:
        raise ConfigurationError(f"problem.arm_costs has {len(costs)} entries for {n_arms} arms")
    return np.asarray(costs, dtype=float)


def _dgp_meta(cfg):
    if cfg.dgp is not None:
        return cfg.dgp.to_dict()
    if cfg.dataset is None and os.path.exists(cfg.path("dgp")):
        with open(cfg.path("dgp"), encoding="utf-8") as fh:
            return json.load(fh)
    return None


def build_problem(cfg, data, cate, sales_data=None, features=None):
    """Allocation problem for ``cate``; sales models are fit on ``sales_data`` (default ``data``)."""
    costs = _costs(cfg, data.n_arms, _dgp_meta(cfg))
    constraints = cfg.constraints
    sales = None
    if constraints.revenue_floor is not None:
        sm = cfg.problem["sales_model"]
        src = data if sales_data is None else sales_data
        models = fit_arm_outcome_models(
            src, sm["base"], seed=cfg.model.seed, add_arm_cost=costs if sm["add_arm_cost"] else None
        )
        sales = predict_arm_outcomes(models, data.features, data.n_arms)
    return AllocationProblem(
        cate, None, costs, sales, constraints, data.features if features is None else features, {}, data.customer_id
    )


def _check_cate(cate, data):
    if cate.scored_on != data.fingerprint() or not np.array_equal(cate.customer_id, data.customer_id):
        raise ConsistencyError("fingerprint mismatch: CATE estimates were not scored on this dataset")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg):
    if cfg.dgp is None:
        raise ConfigurationError("generate needs a 'dgp' section in the config")
    os.makedirs(cfg.output_dir, exist_ok=True)
    data = generate(cfg.dgp)
    save_csv(data, cfg.path("dataset"))
    save_truth(data.truth, cfg.path("truth"))
    with open(cfg.path("dgp"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dgp.to_json() + "\n")
    outputs = {k: cfg.path(k) for k in ("dataset", "truth", "dgp")}
    write_manifest(cfg, "generate", {}, outputs)
    return outputs


def cmd_fit(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    data = _load_dataset(cfg)
    model = fit(cfg.model, data)
    save_model(model, cfg.path("model"))
    cate = predict(model, data)
    save_cate(cate, cfg.path("cate"))
    outputs = {"model": cfg.path("model"), "cate": cfg.path("cate"), "cate_meta": cfg.path("cate") + ".meta.json"}
    write_manifest(cfg, "fit", {"dataset": _dataset_path(cfg)}, outputs)
    return outputs


def cmd_optimize(cfg):
    data = _load_dataset(cfg)
    cate = load_cate(_require(cfg.path("cate")))
    _check_cate(cate, data)
    problem = build_problem(cfg, data, cate)
    policy = solve(problem, cfg.problem["solver"], cfg.problem["n_buckets"], cfg.problem["exact_limit"])
    save_policy(policy, cfg.path("policy"))
    doc = audit_document(policy, problem.constraints)
    doc["dataset_fingerprint"] = data.fingerprint()
    doc["cate_fingerprint"] = cate_fingerprint(cate)
    _write_json(doc, cfg.path("audit"))
    outputs = {"policy": cfg.path("policy"), "audit": cfg.path("audit")}
    write_manifest(cfg, "optimize", {"dataset": _dataset_path(cfg), "cate": cfg.path("cate")}, outputs)
    return outputs


def _policy_from_files(cfg, data):
    ids, arms = load_policy(_require(cfg.path("policy")))
    with open(_require(cfg.path("audit")), encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("dataset_fingerprint") != data.fingerprint():
        raise ConsistencyError("fingerprint mismatch: the policy was optimized on a different dataset")
    if not np.array_equal(np.sort(ids), np.sort(data.customer_id)):
        raise ConsistencyError("fingerprint mismatch: policy customers differ from the dataset")
    policy = PolicyAssignment(arms, doc["objective_value"], doc["solver"], doc["feasible"], None, ids)
    return policy, doc


def cmd_evaluate(cfg):
    data = _load_dataset(cfg)
    model = load_model(_require(cfg.path("model")))
    cate = load_cate(_require(cfg.path("cate")))
    if cate.fitted_on != model.fitted_on:
        raise ConsistencyError("fingerprint mismatch: CATE estimates come from a different model fit")
    _check_cate(cate, data)
    policy, audit_doc = _policy_from_files(cfg, data)
    if audit_doc.get("cate_fingerprint") != cate_fingerprint(cate):
        raise ConsistencyError("fingerprint mismatch: the policy was optimized on different CATE estimates")
    truth_path = _truth_path(cfg)
    truth = load_truth(truth_path) if truth_path else None
    arms = cfg.eval["uplift_arms"] or list(range(1, data.n_arms))
    plots = []
    if cfg.eval["plots"]:
        plot_uplift_curves([uplift_curve(cate, data, k) for k in arms], cfg.path("uplift_plot"))
        plots.append(FILES["uplift_plot"])
    doc = build_report(
        data,
        policy=policy,
        cate=cate,
        truth=truth,
        audit=audit_doc["audit"],
        uplift_arms=arms,
        config_hashes={"pipeline": cfg.hash(), "model": _sha256_text(_canonical(model.spec.to_dict()))},
        seeds={"pipeline": cfg.seed, "model": model.spec.seed},
        plots=plots,
    )
    write_report(doc, cfg.path("report"))
    inputs = {"dataset": _dataset_path(cfg), "model": cfg.path("model"), "cate": cfg.path("cate"),
              "policy": cfg.path("policy"), "audit": cfg.path("audit")}
    if truth_path:
        inputs["truth"] = truth_path
    outputs = {"report": cfg.path("report")}
    if plots:
        outputs["uplift_plot"] = cfg.path("uplift_plot")
    write_manifest(cfg, "evaluate", inputs, outputs)
    return doc


def cmd_sweep(cfg, constraint_id=None, grid=None):
    constraint_id = constraint_id or cfg.sweep.get("constraint_id")
    grid = grid if grid is not None else cfg.sweep.get("grid")
    if not constraint_id or not grid:
        raise ConfigurationError("sweep needs a constraint id and a grid (flags or the 'sweep' config section)")
    data = _load_dataset(cfg)
    cate = load_cate(_require(cfg.path("cate")))
    _check_cate(cate, data)
    problem = build_problem(cfg, data, cate)
    points = sensitivity_sweep(
        problem, constraint_id, grid, cfg.problem["solver"], cfg.problem["n_buckets"], cfg.problem["exact_limit"]
    )
    doc = {
        "constraint_id": constraint_id,
        "dataset_fingerprint": data.fingerprint(),
        "points": [
            {
                "bound": p.bound,
                "objective": p.objective,
                "feasible": bool(p.feasible),
                "targeting_shares": [float(s) for s in p.targeting_shares],
            }
            for p in points
        ],
    }
    _write_json(doc, cfg.path("sweep"))
    outputs = {"sweep": cfg.path("sweep")}
    if cfg.eval["plots"]:
        plot_sweep(points, constraint_id, cfg.path("sweep_plot"))
        outputs["sweep_plot"] = cfg.path("sweep_plot")
    write_manifest(cfg, "sweep", {"dataset": _dataset_path(cfg), "cate": cfg.path("cate")}, outputs,
                   extra={"sweep": {"constraint_id": constraint_id, "grid": [float(g) for g in grid]}})
    return doc


# ---------------------------------------------------------------------------
# replay

# guardrails per scenario: the reward campaign protects revenue against the
# full-reward reference, the others run unconstrained
_REPLAY_CONSTRAINTS = {
    "retention_scenario": {},
    "reward_scenario": {"revenue_floor": {"reference_arm": 1, "max_deterioration": 0.01}},
    "threshold_scenario": {},
}


def _baseline_policy(arms, data, name):
    return PolicyAssignment(np.asarray(arms, dtype=np.int64), 0.0, "baseline", True, None, data.customer_id), name


def cmd_replay(cfg, scenario):
    """End-to-end run of a scenario preset with baseline comparisons.

    The preset population is split at random into a training half (model and
    sales fits) and an evaluation half (optimization and scoring).  The
    optimized policy is compared with treat-everyone, treat-no-one and a
    score-threshold rule that treats customers whose predicted control
    outcome falls below the configured quantile.
    """
    if scenario not in PRESETS and scenario not in PRESETS.values():
        raise ConfigurationError(f"unknown scenario {scenario!r}; expected one of {sorted(PRESETS)}")
    key = PRESETS.get(scenario, scenario)
    os.makedirs(cfg.output_dir, exist_ok=True)
    cfg.dgp = scenario_preset(key, cfg.replay["n_customers"], cfg.seed)
    if not cfg.model_given:
        cfg.model = UpliftModelSpec.from_dict({**_REPLAY_MODEL, "seed": cfg.model.seed})
    if not cfg.problem["constraints"]:
        cfg.problem["constraints"] = _REPLAY_CONSTRAINTS[key]
    cfg.dataset = None

    full = generate(cfg.dgp)
    save_csv(full, cfg.path("population"))
    save_truth(full.truth, cfg.path("truth"))
    with open(cfg.path("dgp"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dgp.to_json() + "\n")
    train_mask = _random.uniforms(cfg.seed, "replay_split", full.customer_id)[:, 0] < cfg.replay["train_fraction"]
    train = full.subset(np.flatnonzero(train_mask))
    test = full.subset(np.flatnonzero(~train_mask))
    test_truth = test.truth
    test = test.without_truth()
    save_csv(test, cfg.path("dataset"))

    model = fit(cfg.model, train.without_truth())
    save_model(model, cfg.path("model"))
    cate = predict(model, test)
    save_cate(cate, cfg.path("cate"))
    problem = build_problem(cfg, test, cate, sales_data=train.without_truth())
    policy = solve(problem, cfg.problem["solver"], cfg.problem["n_buckets"], cfg.problem["exact_limit"])
    save_policy(policy, cfg.path("policy"))
    audit_doc = audit_document(policy, problem.constraints)
    audit_doc["dataset_fingerprint"] = test.fingerprint()
    audit_doc["cate_fingerprint"] = cate_fingerprint(cate)
    _write_json(audit_doc, cfg.path("audit"))

    # score-threshold baseline: predicted control outcome below the quantile -> treat with arm 1
    control_model = fit_arm_outcome_models(train.without_truth(), "ridge", seed=cfg.model.seed, arms=[0])
    score = predict_arm_outcomes(control_model, test.features, test.n_arms)[:, 0]
    q = cfg.eval["baseline_quantile"]
    cut = float(np.quantile(score, q))
    policies = [(policy, "optimized")]
    policies.append(_baseline_policy(np.zeros(len(test)), test, "treat_no_one"))
    for k in range(1, test.n_arms):
        policies.append(_baseline_policy(np.full(len(test), k), test, f"treat_everyone_arm_{k}"))
    policies.append(_baseline_policy(np.where(score < cut, 1, 0), test, f"score_below_q{q:g}"))

    rows = []
    for pol, name in policies:
        est = ips(pol, test)
        tv = true_value(pol, test_truth)
        rows.append(
            {
                "policy": name,
                "true_value": tv.true_value,
                "ips": est.ips,
                "snips": est.snips,
                "targeting_share": float(np.mean(pol.assignment != 0)),
                "feasible": bool(pol.feasible) if name == "optimized" else None,
            }
        )
    ref = rows[1]["true_value"]
    for r in rows:
        r["lift_vs_treat_no_one_pct"] = None if ref == 0 else 100.0 * (r["true_value"] - ref) / abs(ref)

    arms = cfg.eval["uplift_arms"] or list(range(1, test.n_arms))
    plots = []
    if cfg.eval["plots"]:
        plot_uplift_curves([uplift_curve(cate, test, k) for k in arms], cfg.path("uplift_plot"))
        plots.append(FILES["uplift_plot"])
    report = build_report(
        test, policy=policy, cate=cate, truth=test_truth, audit=audit_doc["audit"], uplift_arms=arms,
        config_hashes={"pipeline": cfg.hash(), "model": _sha256_text(_canonical(model.spec.to_dict()))},
        seeds={"pipeline": cfg.seed, "dgp": cfg.dgp.seed, "model": model.spec.seed}, plots=plots,
        extra={"scenario": key, "baselines": rows[1:]},
    )
    write_report(report, cfg.path("report"))
    replay = {
        "scenario": key,
        "label": "illustrative: synthetic population, effect magnitudes are not estimates from real campaigns",
        "magnitudes": cfg.dgp.params.get("magnitudes"),
        "n_customers": int(len(full)),
        "n_train": int(len(train)),
        "n_eval": int(len(test)),
        "model": cfg.model.to_dict(),
        "constraints": problem.constraints.to_dict(),
        "baseline_quantile": q,
        "rows": rows,
    }
    _write_json(replay, cfg.path("replay"))
    with open(cfg.path("replay_table"), "w", encoding="utf-8") as fh:
        fh.write(format_table(replay))
    outputs = {k: cfg.path(k) for k in ("population", "dataset", "truth", "dgp", "model", "cate", "policy", "audit",
                                         "report", "replay", "replay_table")}
    if plots:
        outputs["uplift_plot"] = cfg.path("uplift_plot")
    write_manifest(cfg, "replay", {}, outputs, extra={"scenario": key})
    return replay


def format_table(replay):
    """Markdown comparison table of the replay rows."""
    lines = [
        f"# {replay['scenario']} replay ({replay['label']})",
        "",
        "| policy | true value | IPS | SNIPS | targeted | lift vs treat-no-one |",
        "|---|---:|---:|---:|---:|---:|",
    ]
    for r in replay["rows"]:
        snips = "undefined" if r["snips"] is None else f"{r['snips']:.4f}"
        lift = "n/a" if r["lift_vs_treat_no_one_pct"] is None else f"{r['lift_vs_treat_no_one_pct']:+.3f}%"
        lines.append(
            f"| {r['policy']} | {r['true_value']:.4f} | {r['ips']:.4f} | {snips} | "
            f"{100 * r['targeting_share']:.1f}% | {lift} |"
        )
    return "\n".join(lines) + "\n"
