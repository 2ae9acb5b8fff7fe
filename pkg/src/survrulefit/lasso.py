"""Weighted Lasso on a rule design: coordinate descent path and K-fold cross-validation.

Objective for a given lambda::

    (1/n) * sum_i w_i (y_i - b0 - sum_k b_k z_ik)^2 + lambda * sum_k |b_k|

with an unpenalized intercept.  With ``standardize=True`` the columns are centred and
scaled by their weighted standard deviation before fitting (the penalty then acts on
the standardized coefficients); coefficients are always reported on the 0/1 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InsufficientCandidatesError, NumericalError


@njit(cache=True)
def _sweep(G, grad, g, half, coords):
    max_change = 0.0
    K = g.shape[0]
    for k in coords:
        a = G[k, k]
        old = g[k]
        b = grad[k] + a * old
        if b > half:
            new = (b - half) / a
        elif b < -half:
            new = (b + half) / a
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            g[k] = new
            for j in range(K):
                grad[j] -= G[j, k] * delta
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


@njit(cache=True)
def _cd_path(G, c, lambdas, tol, max_iter, active):
    """Coordinate descent over a Gram matrix with warm starts along ``lambdas``.

    Minimises g' G g - 2 c' g + lam * |g|_1 for each lam.  Sweeps alternate between
    all eligible coordinates and the current nonzero set; a lambda is converged
    once a full sweep moves no coefficient by ``tol`` or more.  Returns the path
    and the sweeps taken per lambda (-1 where ``max_iter`` was hit).
    """
    K = c.shape[0]
    L = lambdas.shape[0]
    path = np.zeros((L, K))
    sweeps = np.zeros(L, dtype=np.int64)
    g = np.zeros(K)
    grad = c.copy()  # c - G g
    eligible = np.flatnonzero(active)
    for li in range(L):
        half = 0.5 * lambdas[li]
        it = 0
        converged = False
        while it < max_iter:
            it += 1
            if _sweep(G, grad, g, half, eligible) < tol:
                converged = True
                break
            nz = np.flatnonzero(g != 0.0)
            while it < max_iter:
                it += 1
                if _sweep(G, grad, g, half, nz) < tol:
                    break
        path[li, :] = g
        sweeps[li] = it if converged else -1
    return path, sweeps


@dataclass
class LassoPath:
    lambdas: np.ndarray  # descending
    coefs: np.ndarray  # (L, K), original 0/1 scale
    intercepts: np.ndarray  # (L,)
    scale: np.ndarray  # per-column scale the penalty acts on (1 if unstandardized)
    lambda_max: float

    def predict(self, design, index=None):
        design = np.asarray(design, dtype=float)
        if index is None:
            return self.intercepts[None, :] + design @ self.coefs.T
        return self.intercepts[index] + design @ self.coefs[index]


def _prepare(design, y, w, standardize):
    Z = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = Z.shape[0]
    W = w.sum()
    if W <= 0:
        raise ValueError("total weight must be positive")
    mean = (w @ Z) / W
    ybar = float(w @ y / W)
    Zc = Z - mean
    sd = np.sqrt((w @ (Zc * Zc)) / W)
    active = sd > 1e-12
    scale = np.where(active, sd, 1.0) if standardize else np.ones(Z.shape[1])
    Zs = Zc / scale
    G = (Zs * w[:, None]).T @ Zs / n
    c = Zs.T @ (w * (y - ybar)) / n
    return G, c, mean, ybar, scale, active


def lambda_max(design, y, w, standardize=True):
    """Smallest lambda at which every coefficient is zero."""
    G, c, *_ = _prepare(design, y, w, standardize)
    return float(2.0 * np.max(np.abs(c))) if c.size else 0.0


def lambda_grid(lmax, n_lambdas=100, min_ratio=1e-3):
    if lmax <= 0:
        return np.zeros(1)
    return lmax * np.logspace(0.0, np.log10(min_ratio), n_lambdas)


def fit_lasso_path(
    design,
    y,
    w,
    lambdas=None,
    n_lambdas=100,
    min_ratio=1e-3,
    standardize=True,
    tol=1e-7,
    max_iter=1_000_000,
    min_columns=2,
) -> LassoPath:
    """Warm-started coordinate-descent path from lambda_max down to ``min_ratio * lambda_max``."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] < min_columns:
        raise InsufficientCandidatesError(0 if design.ndim != 2 else design.shape[1])
    G, c, mean, ybar, scale, active = _prepare(design, y, w, standardize)
    lmax = float(2.0 * np.max(np.abs(c)))
    if lambdas is None:
        lambdas = lambda_grid(lmax, n_lambdas, min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0) or np.any(np.diff(lambdas) > 0):
        raise ValueError("lambdas must be nonnegative and non-increasing")
    path, sweeps = _cd_path(G, c, lambdas, tol, max_iter, active)
    bad = np.flatnonzero(sweeps < 0)
    if bad.size:
        raise NumericalError(f"coordinate descent did not converge at lambda index {bad[0]} "
                             f"(lambda={lambdas[bad[0]]:.4g}) within {max_iter} sweeps")
    coefs = path / scale
    intercepts = ybar - coefs @ mean
    return LassoPath(lambdas, coefs, intercepts, scale, lmax)


def cross_validate(
    design, y, w, folds=10, rng=None, n_lambdas=100, min_ratio=1e-3, standardize=True, tol=1e-7, rule="min"
):
    """Choose lambda by K-fold cross-validated weighted squared error.

    ``rule="min"`` takes the minimiser; ``rule="1se"`` takes the largest lambda whose
    error is within one standard error (across folds) of the minimum.  The lambda
    grid comes from the full data; returns ``(lambda, cv_error, path)`` where
    ``path`` is the full-data path on that grid.
    """
    if rule not in ("min", "1se"):
        raise ValueError("rule must be 'min' or '1se'")
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = design.shape[0]
    if n < folds:
        raise ValueError(f"cross-validation needs at least {folds} complete cases, got {n}")
    full = fit_lasso_path(design, y, w, n_lambdas=n_lambdas, min_ratio=min_ratio, standardize=standardize, tol=tol)
    rng = np.random.default_rng(rng)
    assign = rng.permutation(np.arange(n) % folds)
    errors = np.zeros((folds, full.lambdas.size))
    for f in range(folds):
        test = assign == f
        train = ~test
        part = fit_lasso_path(
            design[train], y[train], w[train], lambdas=full.lambdas,
            standardize=standardize, tol=tol, min_columns=1,
        )
        resid = y[test][:, None] - part.predict(design[test])
        errors[f] = (w[test] @ resid**2) / test.sum()
    cv = errors.mean(axis=0)
    best = int(np.argmin(cv))
    if rule == "1se":
        se = errors.std(axis=0, ddof=1) / np.sqrt(folds)
        best = int(np.flatnonzero(cv <= cv[best] + se[best])[0])
    return float(full.lambdas[best]), cv, full


class WeightedLassoCV(RegressorMixin, BaseEstimator):
    """L1-penalized weighted least squares with lambda chosen by K-fold CV."""

    def __init__(
        self, folds=10, n_lambdas=100, min_ratio=1e-3, standardize=True, tol=1e-7, rule="min", random_state=None
    ):
        self.folds = folds
        self.n_lambdas = n_lambdas
        self.min_ratio = min_ratio
        self.standardize = standardize
        self.tol = tol
        self.rule = rule
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float)
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        lam, cv, path = cross_validate(
            X, y, w, self.folds, self.random_state, self.n_lambdas, self.min_ratio, self.standardize, self.tol, self.rule
        )
        idx = int(np.flatnonzero(path.lambdas == lam)[0])
        self.lambda_ = lam
        self.cv_error_ = cv
        self.path_ = path
        self.coef_ = path.coefs[idx].copy()
        self.intercept_ = float(path.intercepts[idx])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return self.intercept_ + X @ self.coef_
