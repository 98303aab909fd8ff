"""Re-solve an allocation problem over a grid of bounds for one constraint."""
from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError
from .bucketing import DEFAULT_BUCKETS, bucketize
from .exact import DEFAULT_LIMIT, enumeration_size, solve_exact
from .greedy import solve_bucketed
from .problem import make_policy


@dataclass(frozen=True, eq=False)
class SweepPoint:
    bound: float
    objective: float
    targeting_shares: np.ndarray
    feasible: bool
    policy: object


def solve(problem, solver="auto", n_buckets=DEFAULT_BUCKETS, exact_limit=DEFAULT_LIMIT):
    """Dispatch to ``solve_exact`` or ``solve_bucketed``.

    ``solver="auto"`` uses exhaustive search when the problem is within
    ``exact_limit`` and the bucketed solver otherwise.
    """
    if solver == "auto":
        solver = "exact" if enumeration_size(problem) <= exact_limit else "greedy_lagrangian"
    if solver == "exact":
        return solve_exact(problem, limit=exact_limit)
    if solver == "greedy_lagrangian":
        return solve_bucketed(problem, bucketize(problem, n_buckets))
    raise ConfigurationError(f"unknown solver {solver!r}; expected auto, exact or greedy_lagrangian")


def sensitivity_sweep(problem, constraint_id, grid, solver="auto", n_buckets=DEFAULT_BUCKETS, exact_limit=DEFAULT_LIMIT):
    """One solve per bound in ``grid`` (ascending, i.e. loosening).

    Each grid point also considers the previous point's policy, which stays
    feasible under the looser bound, so the reported (penalized) objective
    never decreases along the grid even when the heuristic solver is used.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ConfigurationError("sweep grid must not be empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("sweep grid must be sorted in ascending order")
    problem.constraints.get(constraint_id)
    points = []
    previous = None
    for bound in grid:
        sub = problem.with_constraints(problem.constraints.with_bound(constraint_id, bound))
        policy = solve(sub, solver, n_buckets, exact_limit)
        if previous is not None:
            carried = make_policy(previous.assignment, sub, policy.solver)
            if _better(carried, policy):
                policy = carried
        shares = policy.targeting_shares(problem.n_arms)
        points.append(SweepPoint(bound, policy.penalized_objective, shares, policy.feasible, policy))
        previous = policy
    return points


def _better(a, b):
    if a.feasible != b.feasible:
        return a.feasible
    return a.penalized_objective > b.penalized_objective + 1e-12 * (1.0 + abs(b.penalized_objective))
