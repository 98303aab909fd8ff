"""Bucket-level Lagrangian relaxation with greedy rounding, repair and local improvement.

The solve runs in four stages:

1. Price each (bucket, arm) pair.  Budget and revenue constraints are moved
   into the objective with multipliers found by bisection, one coordinate at
   a time, so that the priced bucket-level choice respects each bound.  Soft
   constraints cap their multiplier at the penalty weight.
2. Round: walk (bucket, arm) pairs by descending priced value per member and
   fill arms up to their hard budget.  Each bucket's member counts are then
   expanded to customers by descending priced value ``w_i * tau_hat``.
3. Repair hard constraints: move customers out of over-full arms or groups
   at the smallest objective loss, then restore the revenue floor with the
   moves that cost the least objective per unit of sales gained.
4. Improve: single moves, paired exchanges between arms and (for small
   problems) every simultaneous move of two or more customers, as far as
   an evaluation budget allows, each accepted only if it raises the
   penalized objective without breaking a hard constraint.
"""
from itertools import combinations, product
from math import comb

import numpy as np

from .bucketing import DEFAULT_BUCKETS, Bucketing, bucketize
from .problem import REVENUE_TOL, AllocationProblem, make_policy
from ..exceptions import ConfigurationError

PAIR_SEARCH_LIMIT = 64
# larger simultaneous moves are searched while one sweep stays under this many evaluations
MULTI_MOVE_BUDGET = 20000
MULTISTART_LIMIT = 5000
# revenue multipliers tried around the bisection value on small problems
_LAMBDA_SCALES = (0.0, 0.5, 2.0, 4.0)
_BISECT_STEPS = 60
_ROUNDS = 30


class _Instance:
    """Constraint data flattened for fast incremental evaluation."""

    def __init__(self, problem):
        cs = problem.constraints
        self.n, self.k = problem.n, problem.n_arms
        self.V = problem.values
        self.S = problem.sales_estimates
        self.scale = float(np.abs(self.V).max()) + 1.0 if self.n else 1.0
        self.tol = 1e-12 * self.scale
        self.budgets = [(b.arm, float(b.max_count), cs.penalties.get(b.id)) for b in cs.budgets]
        self.groups = [
            (mask, g.arm, float(g.max_count), cs.penalties.get(g.id))
            for g, mask in zip(cs.group_caps, problem.group_masks)
        ]
        self.budgets_by_arm = {}
        for j, (arm, _, _) in enumerate(self.budgets):
            self.budgets_by_arm.setdefault(arm, []).append(j)
        self.cust_groups = {}
        for g, (mask, _, _, _) in enumerate(self.groups):
            for i in np.flatnonzero(mask):
                self.cust_groups.setdefault(int(i), []).append(g)
        self.revenue = None
        rf = cs.revenue_floor
        if rf is not None:
            ref = problem.reference_sales
            self.revenue = {
                "ref": ref,
                # aim a hair inside the audit tolerance so rounding cannot flip the verdict
                "target": ref * (1.0 - rf.max_deterioration - 0.5 * REVENUE_TOL),
                "floor": ref * (1.0 - rf.max_deterioration),
                "weight": cs.penalties.get(rf.id),
            }
        self.hard_cap = np.full(self.k, np.inf)
        for arm, bound, weight in self.budgets:
            if weight is None:
                self.hard_cap[arm] = min(self.hard_cap[arm], np.floor(bound + 1e-9))
        self.has_soft = bool(cs.penalties)


class _State:
    def __init__(self, inst, assignment):
        self.inst = inst
        self.a = np.asarray(assignment, dtype=np.int64).copy()
        self.counts = np.bincount(self.a, minlength=inst.k).astype(np.int64)
        self.gcounts = [int(np.count_nonzero(mask & (self.a == arm))) for mask, arm, _, _ in inst.groups]
        rows = np.arange(inst.n)
        self.sales = float(inst.S[rows, self.a].sum()) if inst.S is not None else 0.0

    # -- totals ---------------------------------------------------------
    def hard_violation(self, revenue=True):
        inst = self.inst
        h = 0.0
        for arm, bound, weight in inst.budgets:
            if weight is None:
                h += max(0.0, self.counts[arm] - bound)
        for (mask, arm, bound, weight), c in zip(inst.groups, self.gcounts):
            if weight is None:
                h += max(0.0, c - bound)
        rev = inst.revenue
        if revenue and rev is not None and rev["weight"] is None:
            h += max(0.0, rev["target"] - self.sales) / rev["ref"]
        return h

    def penalized_objective(self):
        inst = self.inst
        value = float(inst.V[np.arange(inst.n), self.a].sum())
        pen = 0.0
        for arm, bound, weight in inst.budgets:
            if weight is not None:
                pen += weight * max(0.0, self.counts[arm] - bound)
        for (mask, arm, bound, weight), c in zip(inst.groups, self.gcounts):
            if weight is not None:
                pen += weight * max(0.0, c - bound)
        rev = inst.revenue
        if rev is not None and rev["weight"] is not None:
            pen += rev["weight"] * max(0.0, rev["floor"] - self.sales)
        return value - pen

    # -- incremental ----------------------------------------------------
    def evaluate(self, moves, revenue=True):
        """``(ok, d_hard, d_objective)`` for moving each ``(customer, arm)`` pair.

        ``ok`` is False when any single hard constraint would get worse.
        """
        inst = self.inst
        dcount = {}
        dgroup = {}
        dv = ds = 0.0
        for i, b in moves:
            a = int(self.a[i])
            if a == b:
                continue
            dcount[a] = dcount.get(a, 0) - 1
            dcount[b] = dcount.get(b, 0) + 1
            for g in inst.cust_groups.get(i, ()):
                garm = inst.groups[g][1]
                if garm == a:
                    dgroup[g] = dgroup.get(g, 0) - 1
                elif garm == b:
                    dgroup[g] = dgroup.get(g, 0) + 1
            dv += inst.V[i, b] - inst.V[i, a]
            if inst.S is not None:
                ds += inst.S[i, b] - inst.S[i, a]
        ok = True
        dh = dp = 0.0
        for arm, d in dcount.items():
            if d == 0:
                continue
            c = self.counts[arm]
            for j in inst.budgets_by_arm.get(arm, ()):
                _, bound, weight = inst.budgets[j]
                change = max(0.0, c + d - bound) - max(0.0, c - bound)
                if weight is None:
                    dh += change
                    ok = ok and change <= 0
                else:
                    dp += weight * change
        for g, d in dgroup.items():
            if d == 0:
                continue
            _, _, bound, weight = inst.groups[g]
            c = self.gcounts[g]
            change = max(0.0, c + d - bound) - max(0.0, c - bound)
            if weight is None:
                dh += change
                ok = ok and change <= 0
            else:
                dp += weight * change
        rev = inst.revenue
        if revenue and rev is not None and ds != 0.0:
            s = self.sales
            if rev["weight"] is None:
                change = (max(0.0, rev["target"] - s - ds) - max(0.0, rev["target"] - s)) / rev["ref"]
                dh += change
                ok = ok and change <= 0
            else:
                dp += rev["weight"] * (max(0.0, rev["floor"] - s - ds) - max(0.0, rev["floor"] - s))
        return ok, dh, dv - dp

    def apply(self, moves):
        inst = self.inst
        for i, b in moves:
            a = int(self.a[i])
            if a == b:
                continue
            self.counts[a] -= 1
            self.counts[b] += 1
            for g in inst.cust_groups.get(i, ()):
                garm = inst.groups[g][1]
                if garm == a:
                    self.gcounts[g] -= 1
                elif garm == b:
                    self.gcounts[g] += 1
            if inst.S is not None:
                self.sales += inst.S[i, b] - inst.S[i, a]
            self.a[i] = b

    def accepts(self, moves, infeasible):
        ok, dh, dj = self.evaluate(moves)
        if infeasible:
            return dh < -1e-12 or (dh <= 1e-12 and ok and dj > self.inst.tol)
        return ok and dj > self.inst.tol


# ---------------------------------------------------------------------------
# stage 1-2: priced bucket allocation


def _unit_aggregates(inst, bucketing):
    u = bucketing.bucket_of
    nb = np.bincount(u, minlength=bucketing.n_buckets).astype(float)
    Vb = np.column_stack([np.bincount(u, weights=inst.V[:, k], minlength=bucketing.n_buckets) for k in range(inst.k)])
    Sb = None
    if inst.S is not None:
        Sb = np.column_stack(
            [np.bincount(u, weights=inst.S[:, k], minlength=bucketing.n_buckets) for k in range(inst.k)]
        )
    keep = nb > 0
    return nb, Vb, Sb, keep


def _prices(inst, mu):
    price = np.zeros(inst.k)
    for (arm, _, _), m in zip(inst.budgets, mu):
        price[arm] += m
    return price


def _priced(nb, Vb, Sb, price, lam):
    P = Vb if Sb is None or lam == 0 else Vb + lam * Sb
    return P / np.maximum(nb, 1)[:, None] - price[None, :]


def _choice_stats(inst, nb, Vb, Sb, mu, lam):
    P = _priced(nb, Vb, Sb, _prices(inst, mu), lam)
    choice = np.argmax(P, axis=1)
    counts = np.bincount(choice, weights=nb, minlength=inst.k)
    sales = float(Sb[np.arange(len(nb)), choice].sum()) if Sb is not None else 0.0
    return counts, sales


def _smallest_satisfying(check, cap):
    """Smallest multiplier in ``[0, cap]`` for which ``check`` holds (``cap`` if none)."""
    if check(0.0):
        return 0.0
    hi = 1.0
    limit = cap if np.isfinite(cap) else 1e18
    hi = min(hi, limit)
    while not check(hi):
        if hi >= limit:
            return limit
        hi = min(hi * 4.0, limit)
    lo = 0.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if check(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return hi


def _multipliers(inst, nb, Vb, Sb):
    mu = np.zeros(len(inst.budgets))
    lam = 0.0
    rev = inst.revenue
    for _ in range(_ROUNDS):
        old = (mu.copy(), lam)
        for j, (arm, bound, weight) in enumerate(inst.budgets):
            def fits(m, j=j, arm=arm, bound=bound):
                trial = mu.copy()
                trial[j] = m
                return _choice_stats(inst, nb, Vb, Sb, trial, lam)[0][arm] <= bound + 1e-9

            mu[j] = _smallest_satisfying(fits, np.inf if weight is None else weight)
        if rev is not None:
            def enough(x):
                return _choice_stats(inst, nb, Vb, Sb, mu, x)[1] >= rev["target"]

            cap = np.inf if rev["weight"] is None else rev["weight"]
            lam = _smallest_satisfying(enough, cap)
        if np.allclose(mu, old[0], rtol=1e-9, atol=1e-12) and abs(lam - old[1]) <= 1e-12 * max(1.0, lam):
            break
    return mu, lam


def _greedy_fill(inst, nb, P):
    """Integer member counts per (bucket, arm), filling arms up to their hard budget."""
    n_units = len(nb)
    x = np.zeros((n_units, inst.k), dtype=np.int64)
    left = nb.astype(np.int64).copy()
    cap = inst.hard_cap.copy()
    units = np.repeat(np.arange(n_units), inst.k)
    arms = np.tile(np.arange(inst.k), n_units)
    flat = P.ravel()
    order = np.lexsort((arms, units, -flat))
    for idx in order:
        u, k = units[idx], arms[idx]
        if left[u] == 0 or cap[k] <= 0:
            continue
        take = int(min(left[u], cap[k]))
        x[u, k] += take
        left[u] -= take
        cap[k] -= take
    # members that fit nowhere stay on their best-priced arm; repair deals with them
    stuck = np.flatnonzero(left > 0)
    if len(stuck):
        best = np.argmax(P[stuck], axis=1)
        x[stuck, best] += left[stuck]
    return x


def _expand(inst, bucketing, x, score):
    """Turn per-bucket arm counts into a per-customer assignment."""
    a = np.full(inst.n, -1, dtype=np.int64)
    b = bucketing.bucket_of
    pure = (x > 0).sum(axis=1) == 1
    single_arm = np.argmax(x, axis=1)
    in_pure = pure[b]
    a[in_pure] = single_arm[b[in_pure]]
    mixed = np.flatnonzero(~in_pure)
    if len(mixed):
        rows = np.repeat(mixed, inst.k)
        arms = np.tile(np.arange(inst.k), len(mixed))
        vals = score[rows, arms]
        order = np.lexsort((arms, rows, -vals, b[rows]))
        remaining = x.copy()
        for idx in order:
            i, k = int(rows[idx]), int(arms[idx])
            if a[i] >= 0:
                continue
            u = b[i]
            if remaining[u, k] > 0:
                a[i] = k
                remaining[u, k] -= 1
    return a


def _lagrangian_start(inst, bucketing, sales_only=False, lam_scale=1.0):
    nb, Vb, Sb, keep = _unit_aggregates(inst, bucketing)
    if sales_only:
        Vb = Sb
    mu, lam = _multipliers(inst, nb, Vb, Sb)
    lam *= lam_scale
    price = _prices(inst, mu)
    P = _priced(nb, Vb, Sb, price, lam)
    P[~keep] = -np.inf
    x = _greedy_fill(inst, nb, np.where(keep[:, None], P, 0.0))
    base = inst.S if sales_only else inst.V
    score = base + (lam * inst.S if inst.S is not None and lam and not sales_only else 0.0) - price[None, :]
    return _expand(inst, bucketing, x, score)


# ---------------------------------------------------------------------------
# stage 3: repair


def _repair_counts(state):
    inst = state.inst
    V = inst.V
    for _ in range(inst.n * inst.k + 1):
        target = None
        for arm, bound, weight in inst.budgets:
            if weight is None and state.counts[arm] > bound + 1e-9:
                target = state.a == arm
                break
        if target is None:
            for (mask, arm, bound, weight), c in zip(inst.groups, state.gcounts):
                if weight is None and c > bound + 1e-9:
                    target = mask & (state.a == arm)
                    break
        if target is None:
            return
        members = np.flatnonzero(target)
        cur = V[members, state.a[members]]
        moved = False
        # cheapest members first; each tries its alternatives from best to worst
        alt = V[members].copy()
        alt[np.arange(len(members)), state.a[members]] = -np.inf
        loss = cur - alt.max(axis=1)
        for idx in np.lexsort((members, loss)):
            i = int(members[idx])
            for b in np.argsort(-V[i], kind="stable"):
                if b == state.a[i]:
                    continue
                ok, dh, _ = state.evaluate([(i, int(b))], revenue=False)
                if dh < 0 and ok:
                    state.apply([(i, int(b))])
                    moved = True
                    break
            if moved:
                break
        if not moved:
            # no clean move left: accept any move that lowers total count violation
            for idx in np.lexsort((members, loss)):
                i = int(members[idx])
                for b in np.argsort(-V[i], kind="stable"):
                    if b != state.a[i] and state.evaluate([(i, int(b))], revenue=False)[1] < 0:
                        state.apply([(i, int(b))])
                        moved = True
                        break
                if moved:
                    break
        if not moved:
            return


def _repair_revenue(state):
    inst = state.inst
    rev = inst.revenue
    if rev is None or rev["weight"] is not None or state.sales >= rev["target"]:
        return
    rows = np.arange(inst.n)
    V, S = inst.V, inst.S
    for _ in range(3):
        cur_v = V[rows, state.a][:, None]
        cur_s = S[rows, state.a][:, None]
        gain = S - cur_s
        loss = cur_v - V
        ii, bb = np.nonzero(gain > 0)
        if not len(ii):
            return
        ratio = loss[ii, bb] / gain[ii, bb]
        order = np.lexsort((bb, ii, ratio))
        for idx in order:
            if state.sales >= rev["target"]:
                return
            i, b = int(ii[idx]), int(bb[idx])
            if S[i, b] <= S[i, state.a[i]]:
                continue
            ok, dh, _ = state.evaluate([(i, b)])
            if ok and dh < 0:
                state.apply([(i, b)])
        if state.sales >= rev["target"]:
            return
        _exchange_for_sales(state)


def _exchange_for_sales(state):
    """Pairwise exchanges that raise sales while keeping count constraints."""
    inst = state.inst
    S = inst.S
    rows = np.arange(inst.n)
    for p in range(inst.k):
        for q in range(inst.k):
            if p == q:
                continue
            into_q = np.flatnonzero(state.a == p)
            out_q = np.flatnonzero(state.a == q)
            if not len(into_q) or not len(out_q):
                continue
            g_in = S[into_q, q] - S[into_q, p]
            g_out = S[out_q, p] - S[out_q, q]
            A = into_q[np.lexsort((into_q, -g_in))]
            B = out_q[np.lexsort((out_q, -g_out))]
            for i, j in zip(A, B):
                if state.sales >= inst.revenue["target"]:
                    return
                if S[i, q] - S[i, p] + S[j, p] - S[j, q] <= 0:
                    break
                moves = [(int(i), q), (int(j), p)]
                ok, dh, _ = state.evaluate(moves)
                if ok and dh < 0:
                    state.apply(moves)


# ---------------------------------------------------------------------------
# stage 4: improvement


def _single_moves(state):
    inst = state.inst
    rows = np.arange(inst.n)
    infeasible = state.hard_violation() > 0
    gain = inst.V - inst.V[rows, state.a][:, None]
    cand = gain > inst.tol
    if not infeasible:
        cand &= ~(state.counts >= inst.hard_cap)[None, :]
        rev = inst.revenue
        if rev is not None and rev["weight"] is None:
            slack = state.sales - rev["target"]
            cand &= (inst.S - inst.S[rows, state.a][:, None]) >= -slack
    if inst.has_soft or infeasible:
        if inst.n * inst.k <= 50_000:
            cand = np.ones_like(cand)
        cand[rows, state.a] = False
    ii, bb = np.nonzero(cand)
    if not len(ii):
        return False
    order = np.lexsort((bb, ii, -gain[ii, bb]))
    improved = False
    for idx in order:
        i, b = int(ii[idx]), int(bb[idx])
        if state.a[i] == b:
            continue
        if state.accepts([(i, b)], infeasible):
            state.apply([(i, b)])
            improved = True
            infeasible = state.hard_violation() > 0
    return improved


def _exchanges(state):
    inst = state.inst
    V = inst.V
    improved = False
    infeasible = state.hard_violation() > 0
    for p in range(inst.k):
        for q in range(p + 1, inst.k):
            P_ = np.flatnonzero(state.a == p)
            Q_ = np.flatnonzero(state.a == q)
            if not len(P_) or not len(Q_):
                continue
            g_pq = V[P_, q] - V[P_, p]
            g_qp = V[Q_, p] - V[Q_, q]
            A = P_[np.lexsort((P_, -g_pq))]
            B = Q_[np.lexsort((Q_, -g_qp))]
            ga = np.sort(g_pq)[::-1]
            gb = np.sort(g_qp)[::-1]
            limit = int(np.count_nonzero(ga[: len(gb)] + gb[: len(ga)] > inst.tol))
            for t in range(limit):
                moves = [(int(A[t]), q), (int(B[t]), p)]
                if state.accepts(moves, infeasible):
                    state.apply(moves)
                    improved = True
                    infeasible = state.hard_violation() > 0
    return improved


def _multi_moves(state, size):
    """Best-improvement search over every ``size``-customer move (small problems only)."""
    inst = state.inst
    improved = False
    while True:
        infeasible = state.hard_violation() > 0
        best = None
        for group in combinations(range(inst.n), size):
            # every member changes arm; partial moves are covered by smaller searches
            choices = [[b for b in range(inst.k) if b != state.a[i]] for i in group]
            for arms in product(*choices):
                moves = list(zip(group, arms))
                ok, dh, dj = state.evaluate(moves)
                if infeasible:
                    if not (dh < -1e-12 or (dh <= 1e-12 and ok)):
                        continue
                    key = (-dh, dj)
                else:
                    if not ok:
                        continue
                    key = (0.0, dj)
                if key[0] <= 1e-12 and key[1] <= inst.tol:
                    continue
                if best is None or key > best[0]:
                    best = (key, moves)
        if best is None:
            return improved
        state.apply(best[1])
        improved = True


def _neighbourhood_size(inst, size):
    if size > inst.n:
        return np.inf
    return comb(inst.n, size) * (inst.k - 1) ** size


def _improve(state, deep=False, max_passes=50):
    for _ in range(max_passes):
        changed = _single_moves(state)
        changed |= _exchanges(state)
        if state.inst.n <= PAIR_SEARCH_LIMIT:
            changed |= _multi_moves(state, 2)
        size = 3
        while deep and not changed and _neighbourhood_size(state.inst, size) <= MULTI_MOVE_BUDGET:
            changed |= _multi_moves(state, size)
            size += 1
        if not changed:
            break


def _run(inst, start):
    state = _State(inst, start)
    _repair_counts(state)
    _repair_revenue(state)
    _repair_counts(state)
    _improve(state)
    return state


def _rank(state):
    return (state.hard_violation(), -state.penalized_objective())


def solve_bucketed(problem: AllocationProblem, bucketing: Bucketing = None, n_buckets=DEFAULT_BUCKETS):
    """Guardrailed allocation at scale; see the module docstring for the stages.

    Returns a :class:`PolicyAssignment` with ``solver="greedy_lagrangian"``.
    The result is hard-feasible whenever the search finds a feasible point;
    otherwise it is the least-violating assignment found, flagged infeasible.
    """
    if bucketing is None:
        bucketing = bucketize(problem, n_buckets)
    if len(bucketing.bucket_of) != problem.n:
        raise ConfigurationError("bucketing does not cover the problem's customers")
    inst = _Instance(problem)
    if problem.n == 0:
        return make_policy(np.zeros(0, dtype=np.int64), problem, "greedy_lagrangian")
    state = _run(inst, _lagrangian_start(inst, bucketing))
    starts = []
    if inst.revenue is not None and problem.n <= MULTISTART_LIMIT:
        starts += [lambda s=s: _lagrangian_start(inst, bucketing, lam_scale=s) for s in _LAMBDA_SCALES]
    if inst.S is not None:
        starts.append(lambda: _lagrangian_start(inst, bucketing, sales_only=True))
    starts.append(lambda: np.zeros(problem.n, dtype=np.int64))
    for make_start in starts:
        if state.hard_violation() == 0 and problem.n > MULTISTART_LIMIT:
            break
        alt = _run(inst, make_start())
        if _rank(alt) < _rank(state):
            state = alt
    _improve(state, deep=True)
    return make_policy(state.a, problem, "greedy_lagrangian")
