"""Pseudo-ITE outcomes and weights for the DR, DEA and R meta-learners."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Horizon, HorizonStatus, classify_at_horizon

LEARNERS = ("dr", "dea", "r")


@dataclass(frozen=True)
class PseudoSample:
    """Row-aligned pseudo outcomes; incomplete rows carry zero weights."""

    y_star: np.ndarray
    w_method: np.ndarray
    w_censor: np.ndarray
    complete: np.ndarray
    status: np.ndarray
    learner: str

    @property
    def weight(self):
        """Combined regression weight w^C * w^M."""
        return self.w_censor * self.w_method

    @property
    def n_complete(self):
        return int(self.complete.sum())


def ipcw_weights(d: Dataset, h: Horizon, nf) -> np.ndarray:
    """1 / P(C > min(T, t*) | X, A) for complete cases, 0 otherwise.

    Events before the horizon use the left limit G(U-).
    """
    status = classify_at_horizon(d, h)
    w = np.zeros(d.n)
    ev = status == HorizonStatus.EVENT_BEFORE_HORIZON
    surv = status == HorizonStatus.SURVIVED_PAST_HORIZON
    if np.any(ev):
        g = nf.censor_model.survival(np.where(ev, d.time, 0.0), left=True)
        w[ev] = 1.0 / g[ev]
    if np.any(surv):
        g = nf.censor_model.survival(np.full(d.n, h.t_star), left=False)
        w[surv] = 1.0 / g[surv]
    return w


def pseudo_outcomes(A, indicator, e, learner, s1=None, s0=None, s_pool=None):
    """(Y*, w^M) from treatment, I(T > t*) and nuisance values; vectorised, no censoring logic."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(indicator, dtype=float)
    e = np.asarray(e, dtype=float)
    assert np.all((e > 0) & (e < 1)), "propensity must lie strictly inside (0, 1)"
    if learner == "dr":
        s_a = np.where(A == 1, s1, s0)
        y_star = (A - e) / (e * (1 - e)) * (y - s_a) + s1 - s0
        w = np.ones_like(y_star)
    elif learner == "dea":
        sign = 2 * A - 1
        y_star = 2 * sign * (y - s_pool)
        w = sign * (A - e) / (4 * e * (1 - e))
    elif learner == "r":
        y_star = (y - s_pool) / (A - e)
        w = (A - e) ** 2
    else:
        raise ValueError(f"unknown learner {learner!r}; choose from {LEARNERS}")
    return y_star, w


def build_pseudo(d: Dataset, h: Horizon, nf, learner) -> PseudoSample:
    learner = learner.lower()
    if learner not in LEARNERS:
        raise ValueError(f"unknown learner {learner!r}; choose from {LEARNERS}")
    nf.check_learner(learner)
    status = classify_at_horizon(d, h)
    complete = status != HorizonStatus.CENSORED_UNKNOWN
    indicator = np.where(complete, status, 0)
    y_star, w_m = pseudo_outcomes(
        d.treatment, indicator, nf.e_hat, learner, nf.s1_hat, nf.s0_hat, nf.s_pool_hat
    )
    w_c = ipcw_weights(d, h, nf)
    y_star = np.where(complete, y_star, 0.0)
    w_m = np.where(complete, w_m, 0.0)
    return PseudoSample(y_star, w_m, w_c, complete, status, learner)


def weighted_loss(samples: PseudoSample, tau_hat) -> float:
    """Mean over complete cases of w^C * w^M * (Y* - tau_hat)^2."""
    n_o = samples.n_complete
    if n_o == 0:
        raise ValueError("weighted loss undefined: no complete cases")
    c = samples.complete
    r = samples.y_star[c] - np.asarray(tau_hat, dtype=float)[c]
    return float(np.sum(samples.weight[c] * r * r) / n_o)
