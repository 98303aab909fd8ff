"""Group customers with similar estimated effects into buckets."""
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..exceptions import ConfigurationError

DEFAULT_BUCKETS = 100


@dataclass(frozen=True, eq=False)
class Bucketing:
    """``bucket_of[i]`` is customer ``i``'s bucket; ids run ``0 .. n_buckets - 1``."""

    bucket_of: np.ndarray
    n_buckets: int

    def __post_init__(self):
        b = np.asarray(self.bucket_of, dtype=np.int64)
        if b.ndim != 1 or (len(b) and (b.min() < 0 or b.max() >= self.n_buckets)):
            raise ConfigurationError("bucket ids must lie in [0, n_buckets)")
        object.__setattr__(self, "bucket_of", b)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n), n)

    @classmethod
    def from_labels(cls, labels):
        """Buckets from arbitrary labels (e.g. known segments), numbered in sorted label order."""
        _, inv = np.unique(np.asarray(labels), return_inverse=True)
        return cls(inv.ravel(), int(inv.max()) + 1 if len(inv) else 0)

    @property
    def counts(self):
        return np.bincount(self.bucket_of, minlength=self.n_buckets)

    def profile(self, problem):
        """Per bucket: member count, mean tau_hat per arm, mean sales estimate per arm."""
        counts = self.counts
        denom = np.maximum(counts, 1)[:, None]
        tau = np.column_stack([np.zeros(problem.n), problem.tau_hat])
        mean_tau = _group_sums(self.bucket_of, tau, self.n_buckets) / denom
        mean_sales = None
        if problem.sales_estimates is not None:
            mean_sales = _group_sums(self.bucket_of, problem.sales_estimates, self.n_buckets) / denom
        return {"count": counts, "mean_tau": mean_tau, "mean_sales": mean_sales}


def _group_sums(groups, matrix, n_groups):
    return np.column_stack(
        [np.bincount(groups, weights=matrix[:, j], minlength=n_groups) for j in range(matrix.shape[1])]
    ).reshape(n_groups, matrix.shape[1])


def bucketize(problem, n_buckets=DEFAULT_BUCKETS):
    """Per-arm quantile bins of tau_hat combined into a composite key.

    Each treated arm's effects are cut into ``floor(n_buckets ** (1 / (K - 1)))``
    quantile bins by rank (ties share the lowest rank, so equal effects always
    share a bin).  The composite of the per-arm bins is the bucket; only
    nonempty buckets get ids.  ``n_buckets >= N`` gives every customer its own
    bucket.
    """
    if int(n_buckets) != n_buckets or n_buckets < 1:
        raise ConfigurationError("n_buckets must be a positive integer")
    n = problem.n
    if n_buckets >= n:
        return Bucketing.identity(n)
    tau = problem.tau_hat
    per_arm = max(1, int(np.floor(n_buckets ** (1.0 / tau.shape[1]) + 1e-9)))
    key = np.zeros(n, dtype=np.int64)
    for j in range(tau.shape[1]):
        rank = rankdata(tau[:, j], method="min").astype(np.int64) - 1
        key = key * per_arm + (rank * per_arm) // n
    return Bucketing.from_labels(key)
