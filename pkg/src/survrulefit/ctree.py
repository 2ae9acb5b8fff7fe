"""Conditional inference trees with permutation tests, boosted to generate candidate rules."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import BINARY, infer_kinds
from .exceptions import DataError
from .rules import Condition, Rule, dedup_rules, rule_matrix

_CHUNK = 100


@dataclass
class CTreeConfig:
    alpha: float = 0.05
    bonferroni: bool = True
    max_depth: int = 5
    max_trees: int = 500
    min_split: float = 20.0
    min_bucket: float = 10.0
    learn_rate: float = 0.01
    subsample_fraction: float = 0.5
    permutations: int = 999

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must lie in (0, 1]")

    @classmethod
    def from_dict(cls, raw):
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown tree config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class Node:
    value: float
    n: int
    weight: float
    depth: int
    key: int
    feature: int = -1
    threshold: float = np.nan
    p_value: float = 1.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class TestResult:
    p_values: np.ndarray  # adjusted, one per column; 1.0 for untested
    statistics: np.ndarray  # standardized linear statistics
    early_stop: bool = False


def permutation_test(X, y, w, alpha, bonferroni=True, permutations=999, rng=None):
    """Per-covariate Monte Carlo permutation test of independence between X_j and y.

    Statistic: T_j = sum_i x_ij u_i with u = w * (y - weighted mean of y), i.e. a weighted
    covariance; the null distribution permutes u across observations.  p-values are
    (1 + #{|T_perm| >= |T_obs|}) / (B + 1), Bonferroni-multiplied by the number of
    non-constant covariates when requested.  Permutation stops early once no covariate
    can reach ``alpha`` (the accept/reject decision is unchanged).
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    wsum = w.sum()
    u = w * (y - np.dot(w, y) / wsum)
    p_adj = np.ones(p)
    stats = np.zeros(p)
    xc = X - X.mean(axis=0)
    ss_x = np.einsum("ij,ij->j", xc, xc)
    tested = np.flatnonzero(ss_x > 1e-12 * max(1.0, ss_x.max()))
    ss_u = np.dot(u, u)
    if tested.size == 0 or m < 2 or ss_u <= 1e-300:
        return TestResult(p_adj, stats)
    xt = np.ascontiguousarray(xc[:, tested])
    t_obs = xt.T @ u
    stats[tested] = t_obs / np.sqrt(ss_x[tested] * ss_u / (m - 1))
    bar = np.abs(t_obs) * (1 - 1e-9) - 1e-12 * np.sqrt(ss_x[tested] * ss_u)
    mult = tested.size if bonferroni else 1
    # covariate j can still be significant only while count_j <= limit
    limit = alpha * (permutations + 1) / mult - 1
    counts = np.zeros(tested.size, dtype=np.int64)
    done = 0
    early = False
    while done < permutations:
        b = min(_CHUNK, permutations - done)
        perm = rng.permuted(np.broadcast_to(u, (b, m)), axis=1)
        counts += (np.abs(perm @ xt) >= bar).sum(axis=0)
        done += b
        if done < permutations and np.all(counts > limit):
            early = True
            break
    p_raw = (1 + counts) / (permutations + 1)
    p_adj[tested] = np.minimum(1.0, p_raw * mult)
    return TestResult(p_adj, stats, early)


def best_cutpoint(x, u, w, binary, min_bucket):
    """Threshold maximising the standardized two-sample statistic S_L^2 / (n_L n_R).

    Returns None when no cut leaves ``min_bucket`` weight on both sides.
    """
    if binary:
        left = x <= 0.5
        if w[left].sum() >= min_bucket and w[~left].sum() >= min_bucket and 0 < left.sum() < x.size:
            return 0.5
        return None
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    m = xs.size
    s_left = np.cumsum(u[order])[:-1]
    w_left = np.cumsum(w[order])[:-1]
    n_left = np.arange(1, m)
    ok = (xs[1:] > xs[:-1]) & (w_left >= min_bucket) & (w.sum() - w_left >= min_bucket)
    if not np.any(ok):
        return None
    score = np.where(ok, s_left**2 / (n_left * (m - n_left)), -1.0)
    k = int(np.argmax(score))
    return 0.5 * (xs[k] + xs[k + 1])


class CTree:
    """A fitted conditional inference regression tree."""

    def __init__(self, root, binary_mask):
        self.root = root
        self.binary_mask = binary_mask

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.value
                continue
            go_left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def _conditions(self, node, left):
        j = node.feature
        if self.binary_mask[j]:
            return Condition(j, "==", 0.0 if left else 1.0)
        return Condition(j, "<=" if left else ">", node.threshold)

    def rules(self):
        """One rule per non-root node, in depth-first (left before right) order."""
        out = []
        stack = [(self.root, ())]
        while stack:
            node, path = stack.pop()
            if path:
                out.append(Rule(path))
            if not node.is_leaf:
                stack.append((node.right, path + (self._conditions(node, False),)))
                stack.append((node.left, path + (self._conditions(node, True),)))
        return out

    @property
    def n_leaves(self):
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                count += 1
            else:
                stack.extend((node.left, node.right))
        return count


def fit_ctree(X, y, w, cfg: CTreeConfig | None = None, seed=0, tree_index=0, binary_mask=None) -> CTree:
    """Grow a conditional inference tree on (X, y) with case weights w.

    Each node's permutation stream is keyed by (seed, tree_index, node key).
    """
    cfg = cfg or CTreeConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if binary_mask is None:
        binary_mask = np.array([k == BINARY for k in infer_kinds(X)])

    def make(idx, depth, key):
        ww = w[idx]
        wsum = ww.sum()
        value = float(np.dot(ww, y[idx]) / wsum) if wsum > 0 else 0.0
        node = Node(value=value, n=idx.size, weight=float(wsum), depth=depth, key=key)
        if depth >= cfg.max_depth or wsum < cfg.min_split or idx.size < 2:
            return node
        yy = y[idx]
        if np.ptp(yy) == 0:
            return node
        Xn = X[idx]
        rng = np.random.default_rng([seed, tree_index, key])
        res = permutation_test(Xn, yy, ww, cfg.alpha, cfg.bonferroni, cfg.permutations, rng)
        if res.early_stop or res.p_values.min() > cfg.alpha:
            return node
        cand = np.flatnonzero(res.p_values == res.p_values.min())
        j = int(cand[np.argmax(np.abs(res.statistics[cand]))])
        u = ww * (yy - value)
        thr = best_cutpoint(Xn[:, j], u, ww, bool(binary_mask[j]), cfg.min_bucket)
        if thr is None:
            return node
        node.feature = j
        node.threshold = float(thr)
        node.p_value = float(res.p_values[j])
        go_left = Xn[:, j] <= thr
        node.left = make(idx[go_left], depth + 1, 2 * key)
        node.right = make(idx[~go_left], depth + 1, 2 * key + 1)
        return node

    root = make(np.arange(X.shape[0]), 0, 1)
    return CTree(root, np.asarray(binary_mask, dtype=bool))


@dataclass
class BoostResult:
    rules: list
    fitted: np.ndarray
    intercept: float
    trees: list = field(default_factory=list)


def boost_rules(X, y, w, cfg: CTreeConfig | None = None, seed=0, binary_mask=None, keep_trees=False) -> BoostResult:
    """Gradient-boost shallow conditional inference trees on weighted residuals.

    Starts from the weighted mean of ``y``; each round fits a tree on a subsample
    (without replacement) and adds ``learn_rate`` times its prediction.  Every
    non-root node of every tree is returned as a raw (non-deduplicated) rule.
    """
    cfg = cfg or CTreeConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise DataError("rule generation needs at least two complete cases")
    if binary_mask is None:
        binary_mask = np.array([k == BINARY for k in infer_kinds(X)])
    f0 = float(np.dot(w, y) / w.sum())
    F = np.full(n, f0)
    size = max(2, int(round(cfg.subsample_fraction * n)))
    rules, trees = [], []
    for m in range(cfg.max_trees):
        sub = np.sort(np.random.default_rng([seed, m]).choice(n, size=size, replace=False))
        resid = y - F
        tree = fit_ctree(X[sub], resid[sub], w[sub], cfg, seed=seed, tree_index=m, binary_mask=binary_mask)
        if not tree.root.is_leaf:
            rules.extend(tree.rules())
        if cfg.learn_rate != 0:
            F = F + cfg.learn_rate * tree.predict(X)
        if keep_trees:
            trees.append(tree)
    return BoostResult(rules, F, f0, trees)


class CTreeRuleEnsemble(TransformerMixin, BaseEstimator):
    """Candidate-subgroup generator: boosted conditional inference trees -> 0/1 rule features.

    ``fit(X, y, sample_weight)`` extracts and deduplicates rules on the training rows;
    ``transform(X)`` returns the n x K rule design matrix.
    """

    def __init__(
        self,
        alpha=0.05,
        bonferroni=True,
        max_depth=5,
        max_trees=500,
        min_split=20.0,
        min_bucket=10.0,
        learn_rate=0.01,
        subsample_fraction=0.5,
        permutations=999,
        covariate_kinds=None,
        random_state=0,
    ):
        self.alpha = alpha
        self.bonferroni = bonferroni
        self.max_depth = max_depth
        self.max_trees = max_trees
        self.min_split = min_split
        self.min_bucket = min_bucket
        self.learn_rate = learn_rate
        self.subsample_fraction = subsample_fraction
        self.permutations = permutations
        self.covariate_kinds = covariate_kinds
        self.random_state = random_state

    def config(self):
        return CTreeConfig(
            alpha=self.alpha,
            bonferroni=self.bonferroni,
            max_depth=self.max_depth,
            max_trees=self.max_trees,
            min_split=self.min_split,
            min_bucket=self.min_bucket,
            learn_rate=self.learn_rate,
            subsample_fraction=self.subsample_fraction,
            permutations=self.permutations,
        )

    def fit(self, X, y, sample_weight=None):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float)
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if np.any(w < 0):
            raise DataError("sample weights must be nonnegative")
        kinds = self.covariate_kinds or infer_kinds(X)
        mask = np.array([k == BINARY for k in kinds])
        seed = self.random_state if self.random_state is not None else 0
        res = boost_rules(X, y, w, self.config(), seed=int(seed), binary_mask=mask)
        self.raw_rules_ = res.rules
        self.rules_ = dedup_rules(res.rules, X)
        self.fitted_ = res.fitted
        self.intercept_ = res.intercept
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "rules_")
        X = check_array(X, dtype=np.float64)
        return rule_matrix(self.rules_, X)
