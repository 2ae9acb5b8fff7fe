"""Accuracy of CATE predictions against the truth, and subgroup-selection bookkeeping."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} true values")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def bias(pred, truth) -> float:
    """Mean signed error."""
    pred, truth = _pair(pred, truth)
    return float(np.mean(pred - truth))


def binned_rmse(pred, truth, Q=50) -> float:
    """RMSE within Q equal-count bins of the truth-sorted subjects, averaged over bins.

    When N is not a multiple of Q the leading bins get one extra subject.
    """
    pred, truth = _pair(pred, truth)
    if Q < 1 or pred.size < Q:
        raise ValueError(f"binned RMSE needs 1 <= Q <= N (Q={Q}, N={pred.size})")
    order = np.argsort(truth, kind="mergesort")
    resid = (pred - truth)[order]
    return float(np.mean([np.sqrt(np.mean(b * b)) for b in np.array_split(resid, Q)]))


def spearman(pred, truth) -> float:
    """1 - 6 sum d^2 / (N (N^2 - 1)) on average ranks."""
    pred, truth = _pair(pred, truth)
    n = pred.size
    if n < 2:
        raise ValueError("Spearman correlation needs at least two observations")
    if np.ptp(pred) == 0 or np.ptp(truth) == 0:
        raise ValueError("Spearman correlation undefined for a constant vector")
    d = rankdata(pred) - rankdata(truth)
    return float(1.0 - 6.0 * np.sum(d * d) / (n * (n * n - 1.0)))


@dataclass(frozen=True)
class PredictionMetrics:
    bias: float
    binned_rmse: float
    spearman: float  # nan when predictions are constant
    N: int
    Q: int

    def to_dict(self):
        return asdict(self)


def evaluate_predictions(pred, truth, Q=50) -> PredictionMetrics:
    pred, truth = _pair(pred, truth)
    try:
        rho = spearman(pred, truth)
    except ValueError:
        rho = float("nan")
    return PredictionMetrics(bias(pred, truth), binned_rmse(pred, truth, Q), rho, pred.size, Q)


@dataclass(frozen=True)
class SelectionSummary:
    counts: dict  # covariate name -> replicates with >= 1 selected rule mentioning it
    n_selected: tuple  # L per replicate, in replicate order
    replicates: int

    @property
    def median(self):
        return float(np.median(self.n_selected))

    @property
    def min(self):
        return int(min(self.n_selected))

    @property
    def max(self):
        return int(max(self.n_selected))

    def frequency(self, name):
        return self.counts.get(name, 0) / self.replicates

    def table_row(self):
        """``median (min, max)``, with an integer median printed without decimals."""
        med = self.median
        med_txt = f"{int(med)}" if med == int(med) else f"{med:g}"
        return f"{med_txt} ({self.min}, {self.max})"


def selection_frequency(models, covariate_names=None) -> SelectionSummary:
    """Covariate usage counts and selected-rule counts across replicates.

    ``models`` holds fitted RuleModel objects; ``None`` marks a failed replicate and
    counts as L = 0 with no covariates.
    """
    models = list(models)
    if not models:
        raise ValueError("need at least one replicate")
    names = list(covariate_names) if covariate_names is not None else None
    counts = {}
    if names is None:
        for m in models:
            if m is not None:
                names = list(m.covariate_names)
                break
    for name in names or ():
        counts[name] = 0
    n_sel = []
    for m in models:
        if m is None:
            n_sel.append(0)
            continue
        n_sel.append(m.n_selected)
        used = {m.covariate_names[j] for r in m.rules for j in r.variables}
        for name in used:
            counts[name] = counts.get(name, 0) + 1
    return SelectionSummary(counts, tuple(n_sel), len(models))
