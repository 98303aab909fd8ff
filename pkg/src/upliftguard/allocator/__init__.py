"""Guardrailed treatment allocation: one arm per customer under budgets,
a revenue floor, group caps and optional soft penalties."""
from .bucketing import DEFAULT_BUCKETS, Bucketing, bucketize
from .exact import DEFAULT_LIMIT, enumeration_size, solve_exact
from .greedy import solve_bucketed
from .io import audit_document, load_policy, save_audit, save_policy
from .problem import (
    REVENUE_TOL,
    AllocationProblem,
    AuditEntry,
    Budget,
    ConstraintAudit,
    ConstraintSet,
    GroupCap,
    PolicyAssignment,
    RevenueFloor,
    audit,
    make_policy,
)
from .sweep import SweepPoint, sensitivity_sweep, solve

__all__ = [
    "AllocationProblem",
    "AuditEntry",
    "Budget",
    "Bucketing",
    "ConstraintAudit",
    "ConstraintSet",
    "DEFAULT_BUCKETS",
    "DEFAULT_LIMIT",
    "GroupCap",
    "PolicyAssignment",
    "REVENUE_TOL",
    "RevenueFloor",
    "SweepPoint",
    "audit",
    "audit_document",
    "bucketize",
    "enumeration_size",
    "load_policy",
    "make_policy",
    "save_audit",
    "save_policy",
    "sensitivity_sweep",
    "solve",
    "solve_bucketed",
    "solve_exact",
]
