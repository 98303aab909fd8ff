"""Exhaustive search over all ``K**N`` assignments (oracle for small problems)."""
import numpy as np

from ..exceptions import SizeError
from .problem import REVENUE_TOL, AllocationProblem, make_policy

DEFAULT_LIMIT = 10**7
_CHUNK_CELLS = 2_000_000


def enumeration_size(problem):
    return problem.n * problem.n_arms**problem.n


def solve_exact(problem: AllocationProblem, limit=DEFAULT_LIMIT):
    """Best feasible assignment by enumeration.

    Assignments are scanned in lexicographic order with customer 0 as the most
    significant digit, and a candidate replaces the incumbent only when it is
    strictly better, so ties resolve toward control (then lower arm indices)
    for the earliest customers.  When nothing is feasible the assignment with
    the smallest total hard violation (then the best penalized objective) is
    returned with ``feasible=False``.
    """
    n, k = problem.n, problem.n_arms
    if n == 0:
        return make_policy(np.zeros(0, dtype=np.int64), problem, "exact")
    if enumeration_size(problem) > limit:
        raise SizeError(
            f"exhaustive search needs N*K^N = {enumeration_size(problem):.3g} evaluations "
            f"(limit {limit:.3g}); use solve_bucketed for problems of this size"
        )
    cs = problem.constraints
    values = problem.values
    sales = problem.sales_estimates
    cols = np.arange(n)[None, :]
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    total = k**n
    chunk = max(1, _CHUNK_CELLS // n)
    # relative tolerance: sums that differ only by rounding count as ties
    tol = 1e-12 * float(np.abs(values).max()) * n

    best_feasible = None  # (score, code)
    best_relaxed = None  # (hard, score, code)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        A = (codes[:, None] // powers[None, :]) % k
        score = values[cols, A].sum(axis=1)
        hard = np.zeros(len(codes))
        counts = [np.count_nonzero(A == arm, axis=1) for arm in range(k)]
        for b in cs.budgets:
            _accumulate(cs, b.id, np.maximum(0.0, counts[b.arm] - b.max_count), hard, score)
        for g, mask in zip(cs.group_caps, problem.group_masks):
            lhs = np.count_nonzero((A == g.arm) & mask[None, :], axis=1)
            _accumulate(cs, g.id, np.maximum(0.0, lhs - g.max_count), hard, score)
        rf = cs.revenue_floor
        if rf is not None:
            ref = problem.reference_sales
            s = sales[cols, A].sum(axis=1)
            if cs.is_soft(rf.id):
                score -= cs.penalties[rf.id] * np.maximum(0.0, (1 - rf.max_deterioration) * ref - s)
            else:
                det = 1.0 - s / ref
                hard += np.where(det > rf.max_deterioration + REVENUE_TOL, det - rf.max_deterioration, 0.0)

        ok = hard == 0
        if ok.any():
            masked = np.where(ok, score, -np.inf)
            top = masked.max()
            i = int(np.flatnonzero(masked >= top - tol)[0])
            if best_feasible is None or score[i] > best_feasible[0] + tol:
                best_feasible = (float(score[i]), int(codes[i]))
        if best_feasible is None:
            h = hard.min()
            cand = np.flatnonzero(hard <= h + 1e-12)
            i = int(cand[np.argmax(score[cand])])
            if (
                best_relaxed is None
                or hard[i] < best_relaxed[0] - 1e-12
                or (hard[i] <= best_relaxed[0] + 1e-12 and score[i] > best_relaxed[1] + tol)
            ):
                best_relaxed = (float(hard[i]), float(score[i]), int(codes[i]))

    code = best_feasible[1] if best_feasible is not None else best_relaxed[2]
    assignment = (code // powers) % k
    return make_policy(assignment, problem, "exact")


def _accumulate(cs, cid, violation, hard, score):
    if cs.is_soft(cid):
        score -= cs.penalties[cid] * violation
    else:
        hard += violation
