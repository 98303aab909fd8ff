"""Allocation problem, constraint set, policy assignment, and the audit."""
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..exceptions import ConfigurationError
from ..schemas import validate

# relative slack allowed on the revenue-deterioration bound
REVENUE_TOL = 1e-9
_OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal}


@dataclass(frozen=True)
class Budget:
    """At most ``max_count`` customers receive ``arm``."""

    arm: int
    max_count: float
    id: str = ""

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", f"budget_arm{self.arm}")
        if not self.max_count >= 0:
            raise ConfigurationError(f"{self.id}: max_count must be >= 0")


@dataclass(frozen=True)
class RevenueFloor:
    """``1 - Sales(pi) / Sales(pi*) <= max_deterioration``; ``pi*`` gives everyone ``reference_arm``."""

    reference_arm: int
    max_deterioration: float
    id: str = "revenue_floor"

    def __post_init__(self):
        if not 0 <= self.max_deterioration < 1:
            raise ConfigurationError(f"{self.id}: max_deterioration must lie in [0, 1)")


@dataclass(frozen=True)
class GroupCap:
    """At most ``max_count`` members of a customer group receive ``arm``.

    The group is either a named mask supplied on the problem (``group``) or a
    feature predicate ``where`` such as ``{"feature": 0, "op": "<", "value": 0}``
    (a list of predicates is their conjunction).
    """

    arm: int
    max_count: float
    group: Optional[str] = None
    where: object = None
    id: str = ""

    def __post_init__(self):
        if not self.id:
            raise ConfigurationError("group caps need an explicit id")
        if (self.group is None) == (self.where is None):
            raise ConfigurationError(f"{self.id}: give exactly one of 'group' or 'where'")
        if not self.max_count >= 0:
            raise ConfigurationError(f"{self.id}: max_count must be >= 0")


@dataclass(frozen=True)
class ConstraintSet:
    budgets: tuple = ()
    revenue_floor: Optional[RevenueFloor] = None
    group_caps: tuple = ()
    penalties: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(self.budgets))
        object.__setattr__(self, "group_caps", tuple(self.group_caps))
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"constraint ids must be unique, got {ids}")
        for cid, weight in self.penalties.items():
            if cid not in ids:
                raise ConfigurationError(f"penalty refers to unknown constraint id {cid!r}")
            if not (weight >= 0 and math.isfinite(weight)):
                raise ConfigurationError(f"penalty weight for {cid!r} must be a finite non-negative number")

    @property
    def ids(self):
        out = [b.id for b in self.budgets] + [g.id for g in self.group_caps]
        if self.revenue_floor is not None:
            out.append(self.revenue_floor.id)
        return out

    def get(self, cid):
        for c in (*self.budgets, *self.group_caps, self.revenue_floor):
            if c is not None and c.id == cid:
                return c
        raise ConfigurationError(f"unknown constraint id {cid!r}")

    def is_soft(self, cid):
        return cid in self.penalties

    def with_bound(self, cid, bound):
        """Copy with one constraint's bound replaced (count, or deterioration for the revenue floor)."""
        c = self.get(cid)
        if isinstance(c, RevenueFloor):
            return replace(self, revenue_floor=replace(c, max_deterioration=float(bound)))
        if isinstance(c, Budget):
            budgets = tuple(replace(b, max_count=bound) if b.id == cid else b for b in self.budgets)
            return replace(self, budgets=budgets)
        caps = tuple(replace(g, max_count=bound) if g.id == cid else g for g in self.group_caps)
        return replace(self, group_caps=caps)

    def to_dict(self):
        out = {
            "budgets": [{"id": b.id, "arm": b.arm, "max_count": b.max_count} for b in self.budgets],
            "revenue_floor": None,
            "group_caps": [],
            "penalties": [{"id": k, "weight": v} for k, v in self.penalties.items()],
        }
        if self.revenue_floor is not None:
            r = self.revenue_floor
            out["revenue_floor"] = {"id": r.id, "reference_arm": r.reference_arm, "max_deterioration": r.max_deterioration}
        for g in self.group_caps:
            entry = {"id": g.id, "arm": g.arm, "max_count": g.max_count}
            entry["group" if g.group is not None else "where"] = g.group if g.group is not None else g.where
            out["group_caps"].append(entry)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        validate(d, "constraint_set")
        try:
            budgets = [Budget(int(b["arm"]), b["max_count"], b.get("id", "")) for b in d.get("budgets") or []]
            rf = d.get("revenue_floor")
            revenue = None
            if rf is not None:
                revenue = RevenueFloor(
                    int(rf["reference_arm"]), float(rf["max_deterioration"]), rf.get("id", "revenue_floor")
                )
            caps = [
                GroupCap(int(g["arm"]), g["max_count"], g.get("group"), g.get("where"), g.get("id", ""))
                for g in d.get("group_caps") or []
            ]
        except KeyError as exc:
            raise ConfigurationError(f"constraints: missing field {exc}") from None
        penalties = {}
        for p in d.get("penalties") or []:
            if p["id"] in penalties:
                raise ConfigurationError(f"constraint id {p['id']!r} appears in penalties more than once")
            penalties[p["id"]] = float(p["weight"])
        return cls(tuple(budgets), revenue, tuple(caps), penalties)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def evaluate_predicate(where, features):
    if features is None:
        raise ConfigurationError("feature predicates need the problem's features")
    preds = where if isinstance(where, (list, tuple)) else [where]
    mask = np.ones(len(features), dtype=bool)
    for p in preds:
        try:
            op = _OPS[p["op"]]
            mask &= op(features[:, int(p["feature"])], float(p["value"]))
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"bad group predicate {p!r}: {exc}") from None
    return mask


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    """Choose one arm per customer to maximize ``sum_i w_i * tau_hat[i, a_i]``.

    ``tau_hat`` is ``N x (K-1)`` (control implicit at zero) or a
    :class:`~upliftguard.learners.CateEstimateMatrix`.
    """

    tau_hat: object
    weights: Optional[np.ndarray] = None
    arm_costs: Optional[np.ndarray] = None
    sales_estimates: Optional[np.ndarray] = None
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    features: Optional[np.ndarray] = None
    groups: dict = field(default_factory=dict)
    customer_id: Optional[np.ndarray] = None

    def __post_init__(self):
        tau = self.tau_hat
        cid = self.customer_id
        if hasattr(tau, "tau_hat"):
            cid = tau.customer_id if cid is None else cid
            tau = tau.tau_hat
        tau = np.asarray(tau, dtype=float)
        if tau.ndim == 1:
            tau = tau[:, None]
        if tau.ndim != 2 or tau.shape[1] < 1:
            raise ConfigurationError("tau_hat must be N x (K-1) with K >= 2")
        n, k = tau.shape[0], tau.shape[1] + 1
        if not np.all(np.isfinite(tau)):
            raise ConfigurationError("tau_hat must be finite")
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise ConfigurationError("weights must be N non-negative reals")
        costs = np.zeros(k) if self.arm_costs is None else np.asarray(self.arm_costs, dtype=float)
        if costs.shape != (k,) or np.any(costs < 0):
            raise ConfigurationError("arm_costs must be K non-negative reals")
        sales = self.sales_estimates
        if sales is not None:
            sales = np.asarray(sales, dtype=float)
            if sales.shape != (n, k) or not np.all(np.isfinite(sales)):
                raise ConfigurationError("sales_estimates must be a finite N x K matrix")
        cs = self.constraints
        if cs.revenue_floor is not None:
            if sales is None:
                raise ConfigurationError("a revenue-protection constraint requires sales_estimates")
            if not 0 <= cs.revenue_floor.reference_arm < k:
                raise ConfigurationError("revenue_floor.reference_arm out of range")
            if n and sales[:, cs.revenue_floor.reference_arm].sum() <= 0:
                raise ConfigurationError("reference sales must be positive")
        for c in (*cs.budgets, *cs.group_caps):
            if not 0 <= c.arm < k:
                raise ConfigurationError(f"{c.id}: arm {c.arm} out of range for K={k}")
        features = None if self.features is None else np.asarray(self.features, dtype=float)
        masks = []
        for g in cs.group_caps:
            if g.group is not None:
                if g.group not in self.groups:
                    raise ConfigurationError(f"{g.id}: unknown group {g.group!r}")
                m = np.asarray(self.groups[g.group], dtype=bool)
            else:
                m = evaluate_predicate(g.where, features)
            if m.shape != (n,):
                raise ConfigurationError(f"{g.id}: group mask must have length N")
            masks.append(m)
        cid = np.arange(n, dtype=np.int64) if cid is None else np.asarray(cid, dtype=np.int64)
        object.__setattr__(self, "tau_hat", tau)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "arm_costs", costs)
        object.__setattr__(self, "sales_estimates", sales)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "customer_id", cid)
        object.__setattr__(self, "_group_masks", masks)

    @property
    def n(self):
        return self.tau_hat.shape[0]

    @property
    def n_arms(self):
        return self.tau_hat.shape[1] + 1

    @property
    def group_masks(self):
        return self._group_masks

    @property
    def values(self):
        """``N x K`` per-customer objective contributions ``w_i * tau_hat`` (control column zero)."""
        return self.weights[:, None] * np.column_stack([np.zeros(self.n), self.tau_hat])

    @property
    def reference_sales(self):
        rf = self.constraints.revenue_floor
        if rf is None:
            return None
        return float(self.sales_estimates[:, rf.reference_arm].sum())

    def with_constraints(self, constraints):
        return AllocationProblem(
            self.tau_hat, self.weights, self.arm_costs, self.sales_estimates, constraints,
            self.features, self.groups, self.customer_id,
        )


@dataclass(frozen=True)
class AuditEntry:
    id: str
    kind: str
    lhs: float
    bound: float
    slack: float
    violated: bool
    soft: bool
    violation: float
    penalty: float


@dataclass(frozen=True)
class ConstraintAudit:
    entries: tuple
    arm_counts: tuple
    objective: float
    penalty: float
    total_cost: float
    sales: Optional[float]
    reference_sales: Optional[float]

    @property
    def hard_violations(self):
        return [e for e in self.entries if e.violated and not e.soft]

    @property
    def feasible(self):
        return not self.hard_violations

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "objective": self.objective,
            "penalty": self.penalty,
            "penalized_objective": self.objective - self.penalty,
            "arm_counts": list(self.arm_counts),
            "total_cost": self.total_cost,
            "sales": self.sales,
            "reference_sales": self.reference_sales,
            "constraints": [e.__dict__ for e in self.entries],
        }


@dataclass(frozen=True, eq=False)
class PolicyAssignment:
    """One arm per customer plus solver metadata and the audit."""

    assignment: np.ndarray
    objective_value: float
    solver: str
    feasible: bool
    audit: ConstraintAudit
    customer_id: Optional[np.ndarray] = None

    @property
    def penalized_objective(self):
        return self.objective_value - self.audit.penalty

    def targeting_shares(self, n_arms=None):
        k = n_arms or len(self.audit.arm_counts)
        counts = np.bincount(self.assignment, minlength=k)
        return counts / max(1, len(self.assignment))


def audit(assignment, problem: AllocationProblem) -> ConstraintAudit:
    """Recompute every constraint from scratch for ``assignment``."""
    a = np.asarray(assignment, dtype=np.int64)
    if a.shape != (problem.n,):
        raise ConfigurationError(f"assignment length {len(a)} != N = {problem.n}")
    k = problem.n_arms
    if problem.n and (a.min() < 0 or a.max() >= k):
        raise ConfigurationError("assignment contains an invalid arm index")
    cs = problem.constraints
    counts = np.bincount(a, minlength=k)
    rows = np.arange(problem.n)
    objective = float(problem.values[rows, a].sum())
    entries = []
    for b in cs.budgets:
        lhs = int(counts[b.arm])
        entries.append(_entry(b.id, "budget", lhs, b.max_count, max(0.0, lhs - b.max_count), cs))
    for g, mask in zip(cs.group_caps, problem.group_masks):
        lhs = int(np.count_nonzero(mask & (a == g.arm)))
        entries.append(_entry(g.id, "group_cap", lhs, g.max_count, max(0.0, lhs - g.max_count), cs))
    sales = ref = None
    if problem.sales_estimates is not None:
        sales = float(problem.sales_estimates[rows, a].sum())
    rf = cs.revenue_floor
    if rf is not None:
        ref = problem.reference_sales
        det = 1.0 - sales / ref
        shortfall = max(0.0, (1.0 - rf.max_deterioration) * ref - sales)
        e = _entry(rf.id, "revenue_floor", det, rf.max_deterioration, shortfall, cs)
        # violation only beyond the relative tolerance; penalty uses the currency shortfall
        entries.append(replace(e, violated=det > rf.max_deterioration + REVENUE_TOL))
    penalty = float(sum(e.penalty for e in entries))
    total_cost = float(problem.arm_costs[a].sum())
    return ConstraintAudit(tuple(entries), tuple(int(c) for c in counts), objective, penalty, total_cost, sales, ref)


def _entry(cid, kind, lhs, bound, violation, cs):
    soft = cs.is_soft(cid)
    weight = cs.penalties.get(cid, 0.0)
    return AuditEntry(
        id=cid,
        kind=kind,
        lhs=float(lhs),
        bound=float(bound),
        slack=float(bound - lhs),
        violated=violation > 0,
        soft=soft,
        violation=float(violation),
        penalty=float(weight * violation) if soft else 0.0,
    )


def make_policy(assignment, problem, solver):
    a = np.asarray(assignment, dtype=np.int64)
    rep = audit(a, problem)
    return PolicyAssignment(a, rep.objective, solver, rep.feasible, rep, problem.customer_id)
