"""Nuisance estimates: propensity, arm-wise and pooled survival at t*, censoring survival."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .data import Dataset, Horizon, kaplan_meier
from .exceptions import DataError
from .forest import RandomSurvivalForest, default_n_jobs, seed_sequence

LEARNER_NEEDS = {"dr": {"arms"}, "dea": {"pooled"}, "r": {"pooled"}}


@dataclass
class NuisanceConfig:
    propensity: str = "forest"  # forest | oracle | constant
    propensity_value: float = 0.5
    survival: str = "forest"  # forest | oracle
    pooled: str = "forest"  # forest (fit ignoring arm) | mixture (e*S1 + (1-e)*S0)
    censoring: str = "km"  # km | forest | oracle
    trees: int = 500
    min_node: int = 15
    n_split_points: int = 10
    clamp: float = 0.025
    censor_floor: float = 0.01

    def __post_init__(self):
        choices = {
            "propensity": ("forest", "oracle", "constant"),
            "survival": ("forest", "oracle"),
            "pooled": ("forest", "mixture"),
            "censoring": ("km", "forest", "oracle"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ValueError(f"nuisance {key} must be one of {allowed}, got {getattr(self, key)!r}")
        if not 0 <= self.clamp < 0.5:
            raise ValueError("clamp must lie in [0, 0.5)")
        if not 0 < self.censor_floor <= 1:
            raise ValueError("censor_floor must lie in (0, 1]")

    @classmethod
    def from_dict(cls, raw):
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown nuisance config keys: {sorted(unknown)}")
        return cls(**raw)


# ---------------------------------------------------------------------------
# censoring models: G(c | X_i, A_i) for the training subjects, row-aligned


class KMCensoring:
    """Marginal censoring survival from the product-limit estimator on flipped indicators."""

    provenance = "estimated"

    def __init__(self, km, floor=0.01):
        self.km = km
        self.floor = floor

    def raw(self, times, left=False):
        return self.km(times, left=left)

    def survival(self, times, left=False):
        return np.maximum(self.raw(times, left), self.floor)


class ForestCensoring:
    """Covariate-dependent censoring survival; out-of-bag for every training subject."""

    provenance = "estimated"

    def __init__(self, forest, floor=0.01):
        self.forest = forest
        self.floor = floor

    def raw(self, times, left=False):
        return np.exp(-self.forest.oob_cumulative_hazard(times, left=left))

    def survival(self, times, left=False):
        return np.maximum(self.raw(times, left), self.floor)


class OracleCensoring:
    """Exact censoring survival from a simulation scenario."""

    provenance = "oracle"

    def __init__(self, spec, X, floor=0.01):
        self.spec = spec
        self.X = np.asarray(X, dtype=float)
        self.floor = floor

    def raw(self, times, left=False):
        return self.spec.survival(times, self.X)

    def survival(self, times, left=False):
        return np.maximum(self.raw(times, left), self.floor)


@dataclass
class NuisanceFit:
    e_hat: np.ndarray
    s1_hat: np.ndarray | None
    s0_hat: np.ndarray | None
    s_pool_hat: np.ndarray | None
    censor_model: object
    provenance: str = "estimated"
    t_star: float | None = None

    def check_learner(self, learner):
        if learner == "dr":
            if self.s1_hat is None or self.s0_hat is None:
                raise ValueError("DR learner needs arm-wise survival estimates")
        elif self.s_pool_hat is None:
            raise ValueError(f"{learner.upper()} learner needs a pooled survival estimate")


# ---------------------------------------------------------------------------


def _int_seed(ss):
    return int(ss.generate_state(1)[0])


def fit_propensity_forest(d: Dataset, cfg: NuisanceConfig | None = None, random_state=None, n_jobs=None):
    """Out-of-bag random-forest propensity scores, clamped to [clamp, 1 - clamp]."""
    cfg = cfg or NuisanceConfig()
    if np.unique(d.treatment).size < 2:
        raise DataError("propensity model: both arms required")
    rf = RandomForestClassifier(
        n_estimators=cfg.trees,
        max_features=max(1, math.ceil(math.sqrt(d.p))),
        min_samples_leaf=cfg.min_node,
        bootstrap=True,
        oob_score=True,
        random_state=_int_seed(seed_sequence(random_state)),
        n_jobs=n_jobs or default_n_jobs(),
    )
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Some inputs do not have OOB scores")
        rf.fit(d.covariates, d.treatment)
    col = list(rf.classes_).index(1)
    e = rf.oob_decision_function_[:, col].copy()
    never = ~np.isfinite(e)
    if np.any(never):
        e[never] = rf.predict_proba(d.covariates[never])[:, col]
    return np.clip(e, cfg.clamp, 1.0 - cfg.clamp)


class SubjectSurvival:
    """Forest survival for every subject of a dataset: out-of-bag for rows used in fitting."""

    def __init__(self, forest, d: Dataset, rows):
        self.forest = forest
        self.d = d
        self.rows = np.asarray(rows)

    def __call__(self, t):
        t = float(t)
        out = np.empty(self.d.n)
        mask = np.zeros(self.d.n, dtype=bool)
        mask[self.rows] = True
        out[mask] = self.forest.oob_survival(t)
        if np.any(~mask):
            out[~mask] = self.forest.predict_survival(self.d.covariates[~mask], t)
        return np.clip(out, 0.0, 1.0)


def survival_forest(d: Dataset, arm, cfg=None, random_state=None, n_jobs=None) -> SubjectSurvival:
    cfg = cfg or NuisanceConfig()
    if arm in (0, 1):
        rows = np.flatnonzero(d.treatment == arm)
    elif arm == "pooled":
        rows = np.arange(d.n)
    else:
        raise ValueError(f"arm must be 0, 1 or 'pooled', got {arm!r}")
    if rows.size == 0:
        raise DataError(f"survival forest: no subjects in arm {arm!r}")
    if not np.any(d.event[rows] == 1):
        raise DataError(f"survival forest: no events in arm {arm!r}")
    forest = RandomSurvivalForest(
        n_estimators=cfg.trees,
        max_features="third",
        min_samples_leaf=cfg.min_node,
        n_split_points=cfg.n_split_points,
        random_state=random_state,
        n_jobs=n_jobs,
    ).fit(d.covariates[rows], d.time[rows], d.event[rows])
    return SubjectSurvival(forest, d, rows)


def fit_survival_forest(d: Dataset, h, arm, cfg=None, random_state=None, n_jobs=None):
    """S_arm(t* | X_i) for every subject; arm is 0, 1 or ``"pooled"``."""
    t = h.t_star if isinstance(h, Horizon) else float(h)
    return survival_forest(d, arm, cfg, random_state, n_jobs)(t)


def fit_censoring_km(d: Dataset, floor=0.01) -> KMCensoring:
    return KMCensoring(kaplan_meier(d.time, 1 - d.event), floor)


def fit_censoring_forest(d: Dataset, cfg=None, random_state=None, n_jobs=None):
    cfg = cfg or NuisanceConfig()
    if not np.any(d.event == 0):
        return fit_censoring_km(d, cfg.censor_floor)
    XA = np.column_stack([d.covariates, d.treatment])
    forest = RandomSurvivalForest(
        n_estimators=cfg.trees,
        max_features="third",
        min_samples_leaf=cfg.min_node,
        n_split_points=cfg.n_split_points,
        random_state=random_state,
        n_jobs=n_jobs,
    ).fit(XA, d.time, 1 - d.event)
    return ForestCensoring(forest, cfg.censor_floor)


def oracle_nuisance(truth, scn, X, floor=0.01) -> NuisanceFit:
    """Plug-in nuisances from the data-generating truth (testing seam)."""
    e = np.asarray(truth.propensity, dtype=float)
    s1 = np.asarray(truth.surv1, dtype=float)
    s0 = np.asarray(truth.surv0, dtype=float)
    return NuisanceFit(
        e_hat=e,
        s1_hat=s1,
        s0_hat=s0,
        s_pool_hat=e * s1 + (1 - e) * s0,
        censor_model=OracleCensoring(scn.censoring, X, floor),
        provenance="oracle",
        t_star=truth.t_star,
    )


def estimate_nuisance(
    d: Dataset,
    h: Horizon,
    cfg: NuisanceConfig | None = None,
    learners=("dea",),
    random_state=None,
    n_jobs=None,
    truth=None,
    scenario=None,
) -> NuisanceFit:
    """Fit every nuisance component the requested learners need.

    ``truth`` (a TruthTable at ``h``) and ``scenario`` are required for oracle parts.
    """
    cfg = cfg or NuisanceConfig()
    needs = set().union(*(LEARNER_NEEDS[lr] for lr in learners))
    if cfg.pooled == "mixture" and "pooled" in needs:
        needs.add("arms")
    ss_prop, ss_s1, ss_s0, ss_pool, ss_cens = seed_sequence(random_state).spawn(5)
    oracle_parts = {cfg.propensity, cfg.survival, cfg.censoring} & {"oracle"}
    if oracle_parts and (truth is None or scenario is None):
        raise ValueError("oracle nuisance components need the truth table and scenario")

    if cfg.propensity == "forest":
        e = fit_propensity_forest(d, cfg, ss_prop, n_jobs)
    elif cfg.propensity == "constant":
        e = np.full(d.n, float(cfg.propensity_value))
    else:
        e = np.asarray(truth.propensity, dtype=float)
    if np.any((e <= 0) | (e >= 1)):
        raise DataError("propensity estimates must lie strictly inside (0, 1)")

    s1 = s0 = pooled = None
    if cfg.survival == "oracle":
        s1, s0 = np.asarray(truth.surv1), np.asarray(truth.surv0)
        pooled = e * s1 + (1 - e) * s0
    else:
        if "arms" in needs:
            s1 = fit_survival_forest(d, h, 1, cfg, ss_s1, n_jobs)
            s0 = fit_survival_forest(d, h, 0, cfg, ss_s0, n_jobs)
        if "pooled" in needs:
            if cfg.pooled == "forest":
                pooled = fit_survival_forest(d, h, "pooled", cfg, ss_pool, n_jobs)
            else:
                pooled = e * s1 + (1 - e) * s0

    if cfg.censoring == "km":
        cm = fit_censoring_km(d, cfg.censor_floor)
    elif cfg.censoring == "forest":
        cm = fit_censoring_forest(d, cfg, ss_cens, n_jobs)
    else:
        cm = OracleCensoring(scenario.censoring, d.covariates, cfg.censor_floor)

    provenance = "oracle" if oracle_parts == {"oracle"} and cfg.propensity == cfg.survival == cfg.censoring else "estimated"
    return NuisanceFit(e, s1, s0, pooled, cm, provenance, h.t_star)
