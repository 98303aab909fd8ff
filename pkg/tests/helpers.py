"""Small builders shared by the test modules."""
import numpy as np

from upliftguard.synthpop import ExperimentDataset


def make_dataset(X, t, y, p=None, n_arms=2):
    """Dataset from raw columns; uniform logging propensities by default."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if p is None:
        p = np.full((n, n_arms), 1.0 / n_arms)
    return ExperimentDataset(np.arange(n), X, np.asarray(t), np.asarray(y, dtype=float), p)


def brute_force(tau, weights, budgets=(), sales=None, revenue=None, caps=(), penalties=None):
    """Best assignment by plain enumeration, written independently of the solvers.

    ``budgets`` are ``(arm, max_count)``, ``revenue`` is ``(reference_arm, delta)``,
    ``caps`` are ``(mask, arm, max_count)`` and ``penalties`` maps the position of a
    constraint in ``budgets + caps (+ revenue)`` to a weight, making it soft.
    Returns ``(objective, assignment)`` of the best feasible assignment in
    enumeration order (first maximum wins), or ``None`` when none is feasible.
    """
    import itertools

    tau = np.asarray(tau, dtype=float).reshape(len(weights), -1)
    n, k = tau.shape[0], tau.shape[1] + 1
    penalties = penalties or {}
    best = None
    for a in itertools.product(range(k), repeat=n):
        a = np.asarray(a)
        value = sum(weights[i] * (tau[i, a[i] - 1] if a[i] else 0.0) for i in range(n))
        ok = True
        checks = [(np.sum(a == arm), bound) for arm, bound in budgets]
        checks += [(np.sum(mask & (a == arm)), bound) for mask, arm, bound in caps]
        for j, (lhs, bound) in enumerate(checks):
            excess = max(0, lhs - bound)
            if j in penalties:
                value -= penalties[j] * excess
            elif excess:
                ok = False
        if revenue is not None:
            ref_arm, delta = revenue
            s = sum(sales[i][a[i]] for i in range(n))
            ref = sum(sales[i][ref_arm] for i in range(n))
            j = len(checks)
            if j in penalties:
                value -= penalties[j] * max(0.0, (1 - delta) * ref - s)
            elif 1 - s / ref > delta + 1e-9:
                ok = False
        if ok and (best is None or value > best[0] + 1e-12):
            best = (value, a)
    return best


def random_instance(rng, max_n=12, max_k=3):
    """Random small allocation problem with budgets and an optional revenue floor."""
    from upliftguard.allocator import AllocationProblem, Budget, ConstraintSet, RevenueFloor

    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(2, max_k + 1))
    tau = rng.normal(0, 1, (n, k - 1))
    w = rng.uniform(0.5, 1.5, n)
    budgets = tuple(Budget(arm, int(rng.integers(0, n + 1))) for arm in range(1, k) if rng.random() < 0.8)
    revenue = sales = None
    if rng.random() < 0.5:
        sales = rng.uniform(50, 150, (n, k)) + rng.normal(0, 20, k)
        revenue = RevenueFloor(int(rng.integers(0, k)), float(rng.choice([0.0, 0.01, 0.05, 0.1])))
    return AllocationProblem(tau, w, None, sales, ConstraintSet(budgets, revenue))


def objective_ratio_ok(heuristic, exact, rel=0.01):
    """``heuristic >= 99 % of exact``, read as ``exact - rel * |exact|`` so it also works for negative optima."""
    return heuristic >= exact - rel * abs(exact) - 1e-12
