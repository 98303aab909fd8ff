"""Honest causal forest.

Each tree draws a subsample stratified by arm and splits it in two disjoint
halves: the *split sample* chooses the tree structure, the *estimation sample*
fills every node with an effect estimate.  Splits maximize the effect
heterogeneity ``n_L * tau_L**2 + n_R * tau_R**2`` and require ``min_leaf``
treated and control records on both sides.  Node effects are Hajek-weighted
differences in means with inverse-propensity weights, so with constant
propensities they reduce to plain differences in means.  A node whose
estimation sample lacks an arm inherits its parent's estimate.
"""
from dataclasses import dataclass

import numpy as np

from .._validation import check_clip
from ..exceptions import ConfigurationError
from .meta import BaseUpliftLearner


@dataclass
class HonestTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    split_sample: np.ndarray
    estimation_sample: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]


def _weighted_effect(t, y, w):
    w1, w0 = w * t, w * (1 - t)
    s1, s0 = w1.sum(), w0.sum()
    if s1 <= 0 or s0 <= 0:
        return None
    return float((w1 @ y) / s1 - (w0 @ y) / s0)


def _best_split(X, t, y, w, order, min_leaf):
    """Best split over all features for the records in ``order``.

    ``order`` is a ``(n_features, m)`` array; row ``j`` lists the node's records
    sorted by feature ``j``.  Returns ``(gain, feature, threshold)`` or ``None``.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    d, m = order.shape
    xs = np.take_along_axis(X.T, order, axis=1) if d else np.empty((0, m))
    tt = t[order]
    wt = w[order]
    wy = wt * y[order]
    c1 = np.cumsum(tt, axis=1)
    c0 = np.arange(1, m + 1)[None, :] - c1
    w1 = np.cumsum(wt * tt, axis=1)
    w0 = np.cumsum(wt * (1 - tt), axis=1)
    y1 = np.cumsum(wy * tt, axis=1)
    y0 = np.cumsum(wy * (1 - tt), axis=1)
    n1, n0 = c1[:, -1:], c0[:, -1:]
    valid = (
        (xs[:, :-1] < xs[:, 1:])
        & (c1[:, :-1] >= min_leaf)
        & (c0[:, :-1] >= min_leaf)
        & (n1 - c1[:, :-1] >= min_leaf)
        & (n0 - c0[:, :-1] >= min_leaf)
    )
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        tau_l = y1[:, :-1] / w1[:, :-1] - y0[:, :-1] / w0[:, :-1]
        tau_r = (y1[:, -1:] - y1[:, :-1]) / (w1[:, -1:] - w1[:, :-1]) - (y0[:, -1:] - y0[:, :-1]) / (
            w0[:, -1:] - w0[:, :-1]
        )
    n_l = np.arange(1, m)[None, :]
    score = np.where(valid, n_l * tau_l**2 + (m - n_l) * tau_r**2, -np.inf)
    tau = y1[0, -1] / w1[0, -1] - y0[0, -1] / w0[0, -1]
    best_per_feature = score.max(axis=1)
    j = int(np.argmax(best_per_feature))  # first maximum -> lowest feature index
    i = int(np.argmax(score[j]))  # first maximum -> lowest threshold
    gain = best_per_feature[j] - m * tau**2
    if not np.isfinite(gain) or gain <= 1e-12 * max(1.0, best_per_feature[j]):
        return None
    return gain, j, 0.5 * (xs[j, i] + xs[j, i + 1])


def grow_honest_tree(X, t, y, w, split_idx, est_idx, max_depth, min_leaf):
    """Grow one tree: structure from ``split_idx``, node values from ``est_idx``."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        return len(feature) - 1

    root_value = _weighted_effect(t[est_idx], y[est_idx], w[est_idx])
    if root_value is None:
        root_value = _weighted_effect(t[split_idx], y[split_idx], w[split_idx]) or 0.0
    order = split_idx[np.argsort(X[split_idx].T, axis=1, kind="stable")]
    stack = [(new_node(root_value), order, est_idx, 0)]
    while stack:
        node, order, est, depth = stack.pop()
        if depth >= max_depth or order.shape[1] < 4 * min_leaf:
            continue
        found = _best_split(X, t, y, w, order, min_leaf)
        if found is None:
            continue
        _, j, thr = found
        feature[node], threshold[node] = j, thr
        goes_left = X[:, j] <= thr
        keep = goes_left[order]
        m_left = int(keep[0].sum())
        order_l = order[keep].reshape(order.shape[0], m_left)
        order_r = order[~keep].reshape(order.shape[0], order.shape[1] - m_left)
        est_l, est_r = est[goes_left[est]], est[~goes_left[est]]
        for child_order, child_est, side in ((order_l, est_l, left), (order_r, est_r, right)):
            v = _weighted_effect(t[child_est], y[child_est], w[child_est])
            child = new_node(value[node] if v is None else v)
            side[node] = child
            stack.append((child, child_order, child_est, depth + 1))
    return HonestTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        np.sort(split_idx),
        np.sort(est_idx),
    )


def honest_subsample(t, subsample, honesty_fraction, rng):
    """Disjoint ``(split_idx, est_idx)`` drawn per arm from a subsample."""
    split, est = [], []
    for arm in (0, 1):
        idx = rng.permutation(np.flatnonzero(t == arm))
        n_sub = max(2, int(round(subsample * len(idx))))
        n_est = min(n_sub - 1, max(1, int(round(honesty_fraction * n_sub))))
        est.append(idx[:n_est])
        split.append(idx[n_est:n_sub])
    return np.concatenate(split), np.concatenate(est)


class CausalForest(BaseUpliftLearner):
    """Honest causal forest estimating ``tau_k(x)`` one-vs-control.

    Parameters
    ----------
    n_trees : int, default=200
    max_depth : int, default=8
    min_leaf : int, default=5
        Minimum treated *and* minimum control records on each side of a split.
    subsample : float, default=0.5
        Fraction of each arm drawn (without replacement) per tree.
    honesty_fraction : float, default=0.5
        Share of the subsample reserved for leaf estimation.
    base, propensity_source, clip, seed
        As for the meta-learners; ``base`` is only used to estimate propensities
        when ``propensity_source="estimated"``.
    """

    _uses_propensity = True

    def __init__(
        self,
        n_trees=200,
        max_depth=8,
        min_leaf=5,
        subsample=0.5,
        honesty_fraction=0.5,
        base="ridge",
        propensity_source="logged",
        clip=(0.01, 0.99),
        folds=2,
        seed=0,
    ):
        super().__init__(base=base, propensity_source=propensity_source, clip=clip, folds=folds, seed=seed)
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.subsample = subsample
        self.honesty_fraction = honesty_fraction

    def fit(self, X, treatment, y, propensities=None):
        if not 0 < self.honesty_fraction < 1:
            raise ConfigurationError("honesty_fraction must lie in (0, 1)")
        if not 0 < self.subsample <= 1:
            raise ConfigurationError("subsample must lie in (0, 1]")
        if int(self.n_trees) < 1 or int(self.max_depth) < 0 or int(self.min_leaf) < 1:
            raise ConfigurationError("n_trees >= 1, max_depth >= 0 and min_leaf >= 1 required")
        return super().fit(X, treatment, y, propensities)

    def _fit_arm(self, X, t, y, e, base, arm):
        e = np.clip(np.asarray(e, dtype=float), *check_clip(self.clip))
        w = np.where(t == 1, 1.0 / e, 1.0 / (1.0 - e))
        trees = []
        for b in range(int(self.n_trees)):
            rng = np.random.default_rng([int(self.seed), arm, b])
            split_idx, est_idx = honest_subsample(t, self.subsample, self.honesty_fraction, rng)
            trees.append(
                grow_honest_tree(X, t, y, w, split_idx, est_idx, int(self.max_depth), int(self.min_leaf))
            )
        return trees

    def _predict_arm(self, trees, X):
        total = np.zeros(len(X))
        for tree in trees:
            total += tree.predict(X)
        return total / len(trees)
