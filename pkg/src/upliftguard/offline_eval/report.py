"""Evaluation report assembly and its JSON document."""
import json

import numpy as np

from .. import __version__
from ..exceptions import ConsistencyError
from ..schemas import validate
from .estimators import ips, true_value, uplift_curve

REPORT_SCHEMA = "evaluation_report"
REPORT_VERSION = "upliftguard.evaluation_report/1"


def _finite(x):
    return None if x is None else float(x)


def build_report(
    data,
    policy=None,
    cate=None,
    truth=None,
    audit=None,
    uplift_arms=None,
    config_hashes=None,
    seeds=None,
    plots=None,
    extra=None,
):
    """Collect every metric for one evaluation into a JSON-ready dict.

    ``cate`` must have been scored on ``data`` and ``policy`` must cover the
    same customers, otherwise :class:`ConsistencyError` is raised.  ``truth``
    (a :class:`GroundTruth`) is only used through :func:`true_value`.
    """
    fingerprint = data.fingerprint()
    if cate is not None:
        if cate.scored_on != fingerprint:
            raise ConsistencyError("fingerprint mismatch: CATE estimates were scored on a different dataset")
        if not np.array_equal(cate.customer_id, data.customer_id):
            raise ConsistencyError("fingerprint mismatch: CATE customers differ from the dataset")
    if policy is not None and policy.customer_id is not None:
        if not np.array_equal(np.sort(policy.customer_id), np.sort(data.customer_id)):
            raise ConsistencyError("fingerprint mismatch: policy customers differ from the dataset")

    doc = {
        "schema_version": REPORT_VERSION,
        "tool_version": __version__,
        "dataset": {"fingerprint": fingerprint, "n_customers": int(len(data)), "n_arms": int(data.n_arms)},
        "model": None,
        "uplift_curves": [],
        "policy": None,
        "policy_value": None,
        "truth": None,
        "audit": audit,
        "config_hashes": dict(config_hashes or {}),
        "seeds": {k: int(v) for k, v in (seeds or {}).items()},
        "plots": list(plots or []),
    }
    if cate is not None:
        doc["model"] = {
            "provenance": cate.model_provenance,
            "fitted_on": cate.fitted_on,
            "scored_on": cate.scored_on,
        }
        arms = uplift_arms or range(1, cate.n_arms)
        for k in arms:
            curve = uplift_curve(cate, data, k)
            doc["uplift_curves"].append(
                {"arm": int(k), "auc": curve.auc, "endpoint": float(curve.values[-1]), "n_points": len(curve.ranks)}
            )
    if policy is not None:
        doc["policy"] = {
            "solver": policy.solver,
            "feasible": bool(policy.feasible),
            "objective_value": float(policy.objective_value),
            "targeting_shares": [float(s) for s in policy.targeting_shares(data.n_arms)],
        }
        est = ips(policy, data)
        doc["policy_value"] = {
            "ips": est.ips,
            "snips": _finite(est.snips),
            "match_count": est.match_count,
            "effective_sample_size": est.effective_sample_size,
        }
        if truth is not None:
            tr = true_value(policy, truth)
            doc["truth"] = {
                "true_value": tr.true_value,
                "regret_vs_oracle": tr.regret_vs_oracle,
                "oracle_value": tr.oracle_value,
                "baselines": tr.baseline_values,
                "abs_ips_error": abs(est.ips - tr.true_value),
            }
    if extra:
        doc["extra"] = extra
    validate(doc, REPORT_SCHEMA, error=ConsistencyError)
    return doc


def dumps(doc):
    """Canonical JSON text (sorted keys, fixed float formatting)."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))
