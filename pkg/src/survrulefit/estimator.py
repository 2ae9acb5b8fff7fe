"""End-to-end estimator: nuisance fits, pseudo outcomes, boosted rules and a weighted Lasso."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ctree import CTreeConfig, boost_rules
from .data import BINARY, Dataset, resolve_horizon
from .exceptions import DataError, InsufficientCandidatesError
from .forest import seed_sequence
from .lasso import cross_validate
from .model import RuleModel, importance
from .nuisance import NuisanceConfig, NuisanceFit, estimate_nuisance
from .pseudo import LEARNERS, PseudoSample, build_pseudo
from .rules import dedup_rules, rule_matrix


@dataclass
class RuleFitResult:
    model: RuleModel
    candidates: list
    n_raw_rules: int
    cv_error: np.ndarray
    lambdas: np.ndarray
    design: np.ndarray  # complete cases x candidates


def _int_seed(ss):
    return int(ss.generate_state(1)[0])


def fit_rules(
    X,
    pseudo: PseudoSample,
    t_star,
    tree_cfg: CTreeConfig,
    binary_mask,
    covariate_names,
    random_state=None,
    folds=10,
    n_lambdas=100,
    min_ratio=1e-3,
    standardize=True,
    lambda_rule="min",
    config=None,
) -> RuleFitResult:
    """Candidate rules and the CV Lasso fit on a prepared pseudo sample.

    Only complete cases enter; the regression weight is w^C * w^M.
    """
    X = np.asarray(X, dtype=float)
    c = pseudo.complete
    if pseudo.n_complete < max(2, folds):
        raise DataError(f"only {pseudo.n_complete} complete cases at t*={t_star:g}; need at least {max(2, folds)}")
    Xc, y, w = X[c], pseudo.y_star[c], pseudo.weight[c]
    ss_boost, ss_cv = seed_sequence(random_state).spawn(2)
    boosted = boost_rules(Xc, y, w, tree_cfg, seed=_int_seed(ss_boost), binary_mask=binary_mask)
    candidates = dedup_rules(boosted.rules, Xc)
    if len(candidates) < 2:
        raise InsufficientCandidatesError(len(candidates))
    Z = rule_matrix(candidates, Xc)
    lam, cv, path = cross_validate(
        Z, y, w, folds, np.random.default_rng(ss_cv), n_lambdas, min_ratio, standardize, rule=lambda_rule
    )
    k = int(np.flatnonzero(path.lambdas == lam)[0])
    beta = path.coefs[k]
    keep = np.flatnonzero(beta != 0)
    model = RuleModel(
        intercept=float(path.intercepts[k]),
        rules=[candidates[j] for j in keep],
        coefficients=beta[keep],
        lambda_=lam,
        learner=pseudo.learner,
        t_star=float(t_star),
        n_candidates=len(candidates),
        covariate_names=tuple(covariate_names),
        n_complete=pseudo.n_complete,
        config=dict(config or {}),
    )
    return RuleFitResult(model, candidates, len(boosted.rules), cv, path.lambdas, Z)


class SurvivalRuleFit(BaseEstimator):
    """Interpretable CATE model for a survival outcome at a fixed horizon.

    The treatment effect is the difference of survival probabilities at ``horizon``.
    Fitting estimates the nuisance functions and builds pseudo outcomes for the
    chosen meta-learner. Candidate subgroups are then generated with boosted
    conditional inference trees, and a sparse subset is kept by a cross-validated
    weighted Lasso.

    Parameters
    ----------
    learner : {"dea", "dr", "r"}
        Pseudo-outcome construction.
    horizon : float or {"auto", "auto-control"}
        Time of interest. ``"auto"`` takes the pooled Kaplan-Meier median of the
        training data.
    alpha, bonferroni, max_depth, max_trees, min_split, min_bucket, learn_rate, \
subsample_fraction, permutations
        Rule-generation settings, see :class:`CTreeConfig`.
    folds, n_lambdas, min_ratio, standardize, lambda_rule
        Lasso path and cross-validation settings.
    importance_divisor : {"subgroups", "conditions"}
        Divisor convention for covariate importance.
    nuisance : NuisanceConfig, dict or None
        Nuisance-model settings.
    random_state : int or None
        Master seed. Nuisance, boosting and CV streams are spawned from it.
    n_jobs : int or None
        Worker count for forest fitting. Results do not depend on it.

    Attributes
    ----------
    model_ : RuleModel
    importance_ : ImportanceReport
    horizon_ : Horizon
    nuisance_ : NuisanceFit
    pseudo_ : PseudoSample
    candidates_ : list of Rule
    cv_error_ : ndarray
    """

    def __init__(
        self,
        learner="dea",
        horizon="auto",
        alpha=0.05,
        bonferroni=True,
        max_depth=5,
        max_trees=500,
        min_split=20.0,
        min_bucket=10.0,
        learn_rate=0.01,
        subsample_fraction=0.5,
        permutations=999,
        folds=10,
        n_lambdas=100,
        min_ratio=1e-3,
        standardize=True,
        lambda_rule="min",
        importance_divisor="subgroups",
        nuisance=None,
        random_state=None,
        n_jobs=None,
    ):
        self.learner = learner
        self.horizon = horizon
        self.alpha = alpha
        self.bonferroni = bonferroni
        self.max_depth = max_depth
        self.max_trees = max_trees
        self.min_split = min_split
        self.min_bucket = min_bucket
        self.learn_rate = learn_rate
        self.subsample_fraction = subsample_fraction
        self.permutations = permutations
        self.folds = folds
        self.n_lambdas = n_lambdas
        self.min_ratio = min_ratio
        self.standardize = standardize
        self.lambda_rule = lambda_rule
        self.importance_divisor = importance_divisor
        self.nuisance = nuisance
        self.random_state = random_state
        self.n_jobs = n_jobs

    def tree_config(self):
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

    def nuisance_config(self):
        if self.nuisance is None:
            return NuisanceConfig()
        if isinstance(self.nuisance, NuisanceConfig):
            return self.nuisance
        return NuisanceConfig.from_dict(dict(self.nuisance))

    def _config_echo(self):
        params = self.get_params()
        params.pop("n_jobs")  # never affects results; keeps model files byte-stable
        params["nuisance"] = asdict(self.nuisance_config())
        hz = self.horizon
        params["horizon"] = hz if isinstance(hz, str) else float(getattr(hz, "t_star", hz))
        return params

    def fit(
        self,
        X,
        treatment=None,
        time=None,
        event=None,
        *,
        feature_names=None,
        covariate_kinds=None,
        nuisance_fit: NuisanceFit | None = None,
        truth=None,
        scenario=None,
    ):
        """Fit on covariates ``X`` and censored outcomes.

        ``X`` may also be a :class:`Dataset`, in which case the outcome arguments
        are omitted. ``nuisance_fit`` supplies precomputed nuisance estimates.
        ``truth`` and ``scenario`` enable oracle nuisance components.
        """
        learner = str(self.learner).lower()
        if learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}; choose from {LEARNERS}")
        if isinstance(X, Dataset):
            d = X
        else:
            if treatment is None or time is None or event is None:
                raise TypeError("treatment, time and event are required unless X is a Dataset")
            names = tuple(feature_names) if feature_names is not None else None
            if names is None and hasattr(X, "columns"):
                names = tuple(map(str, X.columns))
            X = np.asarray(X, dtype=float)
            d = Dataset(X, treatment, time, event, covariate_names=names, covariate_kinds=covariate_kinds)
        if np.unique(d.treatment).size < 2:
            raise DataError("both arms required")
        h = resolve_horizon(d, self.horizon)
        ss_nuis, ss_rules = seed_sequence(self.random_state).spawn(2)
        if nuisance_fit is None:
            nuisance_fit = estimate_nuisance(
                d, h, self.nuisance_config(), (learner,), ss_nuis, self.n_jobs, truth, scenario
            )
        elif nuisance_fit.t_star is not None and not np.isclose(nuisance_fit.t_star, h.t_star):
            raise ValueError(f"nuisance fit was computed at t*={nuisance_fit.t_star}, not {h.t_star}")
        pseudo = build_pseudo(d, h, nuisance_fit, learner)
        mask = np.array([k == BINARY for k in d.covariate_kinds])
        res = fit_rules(
            d.covariates,
            pseudo,
            h.t_star,
            self.tree_config(),
            mask,
            d.covariate_names,
            random_state=ss_rules,
            folds=self.folds,
            n_lambdas=self.n_lambdas,
            min_ratio=self.min_ratio,
            standardize=self.standardize,
            lambda_rule=self.lambda_rule,
            config=self._config_echo(),
        )
        self.horizon_ = h
        self.nuisance_ = nuisance_fit
        self.pseudo_ = pseudo
        self.candidates_ = res.candidates
        self.n_raw_rules_ = res.n_raw_rules
        self.cv_error_ = res.cv_error
        self.lambdas_ = res.lambdas
        self.model_ = res.model
        sel = [res.candidates.index(r) for r in res.model.rules]
        self.importance_ = importance(res.model, res.design[:, sel], self.importance_divisor)
        self.n_features_in_ = d.p
        self.feature_names_in_ = np.array(d.covariate_names, dtype=object)
        return self

    @property
    def intercept_(self):
        check_is_fitted(self, "model_")
        return self.model_.intercept

    @property
    def coef_(self):
        check_is_fitted(self, "model_")
        return self.model_.coefficients

    @property
    def rules_(self):
        check_is_fitted(self, "model_")
        return self.model_.rules

    def predict(self, X):
        """Estimated CATE S1(t*|x) - S0(t*|x) for each row of ``X``."""
        check_is_fitted(self, "model_")
        if isinstance(X, Dataset):
            X = X.covariates
        return self.model_.predict(X)
