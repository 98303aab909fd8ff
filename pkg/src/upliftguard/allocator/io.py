"""Policy CSV and audit JSON files."""
import csv
import json

import numpy as np

from ..exceptions import IngestionError


def save_policy(policy, path):
    ids = policy.customer_id if policy.customer_id is not None else np.arange(len(policy.assignment))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("customer_id,arm\n")
        for c, a in zip(ids, policy.assignment):
            fh.write(f"{int(c)},{int(a)}\n")


def load_policy(path):
    """Return ``(customer_id, assignment)`` arrays from a policy CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["customer_id", "arm"]:
            raise IngestionError("policy header must be customer_id,arm", row=1)
        ids, arms = [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise IngestionError(f"expected 2 fields, found {len(row)}", row=line)
            try:
                ids.append(int(row[0]))
                arms.append(int(row[1]))
            except ValueError as exc:
                raise IngestionError(str(exc), row=line) from None
            if arms[-1] < 0:
                raise IngestionError("arm must be a non-negative integer", row=line)
    return np.asarray(ids, dtype=np.int64), np.asarray(arms, dtype=np.int64)


def audit_document(policy, constraints):
    return {
        "solver": policy.solver,
        "feasible": policy.feasible,
        "objective_value": policy.objective_value,
        "constraint_set": constraints.to_dict(),
        "audit": policy.audit.to_dict(),
    }


def save_audit(policy, constraints, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(audit_document(policy, constraints), fh, indent=2, sort_keys=True)
        fh.write("\n")
