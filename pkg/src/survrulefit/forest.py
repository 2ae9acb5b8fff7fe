"""Random survival forest: bootstrap trees, log-rank splits, Nelson-Aalen leaves."""

from __future__ import annotations

import math
import os
import warnings

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import _rsf_kernels as K
from .exceptions import DataError


def default_n_jobs():
    """Worker count from ``SURVRULEFIT_JOBS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SURVRULEFIT_JOBS", "1")))
    except ValueError:
        return 1


def seed_sequence(random_state):
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if random_state is None:
        return np.random.SeedSequence()
    if isinstance(random_state, (list, tuple)):
        return np.random.SeedSequence([int(s) for s in random_state])
    return np.random.SeedSequence(int(random_state))


def _grow_batch(X, time, event, seeds, mtry, min_node, nsplit):
    out = []
    n = X.shape[0]
    for ss in seeds:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, n)
        tree = K.grow_tree(X, time, event, boot, mtry, min_node, nsplit, rng)
        out.append((np.bincount(boot, minlength=n).astype(np.int32), tree))
    return out


def _batches(items, k):
    k = max(1, min(k, len(items)))
    bounds = np.linspace(0, len(items), k + 1).astype(int)
    return [items[bounds[i]:bounds[i + 1]] for i in range(k)]


class RandomSurvivalForest(BaseEstimator):
    """Ensemble of log-rank survival trees.

    Parameters
    ----------
    n_estimators : int
        Number of bootstrap trees.
    max_features : int, float or "third"
        Covariates tried per node; ``"third"`` means ``ceil(p / 3)``.
    min_samples_leaf : int
        Minimum bootstrap rows in each daughter node.
    n_split_points : int
        Random candidate cutpoints examined per covariate and node.
    random_state : int, sequence or None
        Per-tree streams are spawned from this seed, so results do not depend on
        ``n_jobs``.
    n_jobs : int or None
        Worker processes for tree growth; ``None`` reads ``SURVRULEFIT_JOBS``.
    """

    def __init__(
        self,
        n_estimators=500,
        max_features="third",
        min_samples_leaf=15,
        n_split_points=10,
        random_state=None,
        n_jobs=None,
    ):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.n_split_points = n_split_points
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _mtry(self, p):
        mf = self.max_features
        if mf == "third":
            return max(1, math.ceil(p / 3))
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        if isinstance(mf, float):
            return max(1, min(p, math.ceil(mf * p)))
        return max(1, min(p, int(mf)))

    def fit(self, X, time, event):
        X = check_array(X, dtype=np.float64)
        time = np.ascontiguousarray(time, dtype=np.float64)
        event = np.ascontiguousarray(event, dtype=np.int64)
        if time.shape != (X.shape[0],) or event.shape != (X.shape[0],):
            raise DataError("time and event must have one entry per row of X")
        if not np.any(event == 1):
            raise DataError("no events in the data: survival forest cannot be fitted")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        n, p = X.shape
        seeds = seed_sequence(self.random_state).spawn(self.n_estimators)
        n_jobs = self.n_jobs or default_n_jobs()
        args = (self._mtry(p), int(self.min_samples_leaf), int(self.n_split_points))
        if n_jobs == 1:
            results = _grow_batch(X, time, event, seeds, *args)
        else:
            parts = Parallel(n_jobs=n_jobs)(
                delayed(_grow_batch)(X, time, event, batch, *args) for batch in _batches(seeds, n_jobs)
            )
            results = [r for part in parts for r in part]
        self._pack([tree for _, tree in results])
        self.inbag_ = np.vstack([counts for counts, _ in results])
        self.n_features_in_ = p
        self.n_train_ = n
        self.event_times_ = np.unique(time[event == 1])
        self._X_train = X
        return self

    def _pack(self, trees):
        node_ptr = np.zeros(len(trees) + 1, dtype=np.int64)
        leaf_base = np.zeros(len(trees) + 1, dtype=np.int64)
        feats, thrs, lefts, rights, leaves, ptrs, times, chfs = [], [], [], [], [], [], [], []
        offset = 0
        for b, (f, thr, l, r, lf, lptr, lt, lc) in enumerate(trees):
            node_ptr[b + 1] = node_ptr[b] + f.size
            n_leaves = lptr.size - 1
            leaf_base[b + 1] = leaf_base[b] + n_leaves
            feats.append(f)
            thrs.append(thr)
            lefts.append(l)
            rights.append(r)
            leaves.append(lf)
            ptrs.append(lptr[:-1] + offset)
            offset += lt.size
            times.append(lt)
            chfs.append(lc)
        ptrs.append(np.array([offset], dtype=np.int64))
        self._packed = (
            node_ptr,
            np.concatenate(feats),
            np.concatenate(thrs),
            np.concatenate(lefts),
            np.concatenate(rights),
            np.concatenate(leaves),
            leaf_base[:-1].copy(),
            np.concatenate(ptrs),
            np.concatenate(times),
            np.concatenate(chfs),
        )

    @property
    def n_nodes_(self):
        check_is_fitted(self, "_packed")
        return np.diff(self._packed[0])

    def _chf(self, X, times, left, oob):
        check_is_fitted(self, "_packed")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} covariates, got {X.shape[1]}")
        t = np.broadcast_to(np.asarray(times, dtype=np.float64), (X.shape[0],)).copy()
        inbag = self.inbag_ if oob else np.zeros((1, 1), dtype=np.int32)
        return K.forest_chf(*self._packed, X, t, bool(left), inbag, bool(oob))

    def cumulative_hazard(self, X, times, left=False):
        """Ensemble-average Nelson-Aalen hazard at scalar or per-row ``times``.

        ``left=True`` evaluates the left limit H(t-).
        """
        total, used = self._chf(X, times, left, oob=False)
        return total / used

    def oob_cumulative_hazard(self, times, left=False):
        """Out-of-bag hazard for the training rows.

        A row that was in every bootstrap sample falls back to the full ensemble.
        """
        total, used = self._chf(self._X_train, times, left, oob=True)
        never = used == 0
        if np.any(never):
            warnings.warn(
                f"{int(never.sum())} training rows were never out-of-bag; using all trees for them",
                RuntimeWarning,
                stacklevel=2,
            )
            full = self.cumulative_hazard(self._X_train[never], np.broadcast_to(times, (self.n_train_,))[never], left)
            total = total.copy()
            total[never] = full
            used = np.where(never, 1, used)
        return total / used

    def predict_survival(self, X, t, left=False):
        return np.exp(-self.cumulative_hazard(X, t, left))

    def oob_survival(self, t, left=False):
        return np.exp(-self.oob_cumulative_hazard(t, left))
