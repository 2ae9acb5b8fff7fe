"""Interpretable treatment-effect subgroups for censored survival outcomes.

Meta-learner pseudo outcomes (DR, DEA, R) with inverse probability of censoring
weights, candidate subgroups from boosted conditional inference trees, and a
cross-validated weighted Lasso over the resulting rules.
"""

from .ctree import CTreeConfig, CTreeRuleEnsemble, boost_rules, fit_ctree
from .data import (
    Dataset,
    Horizon,
    HorizonStatus,
    Schema,
    classify_at_horizon,
    kaplan_meier,
    km_median_survival,
    load_csv,
    resolve_horizon,
    save_csv,
)
from .estimator import SurvivalRuleFit, fit_rules
from .exceptions import DataError, InsufficientCandidatesError, NumericalError, SurvRuleFitError
from .forest import RandomSurvivalForest
from .lasso import WeightedLassoCV, cross_validate, fit_lasso_path
from .metrics import (
    PredictionMetrics,
    SelectionSummary,
    binned_rmse,
    bias,
    evaluate_predictions,
    selection_frequency,
    spearman,
)
from .model import ImportanceReport, RuleModel, build_design, importance
from .nuisance import NuisanceConfig, NuisanceFit, estimate_nuisance, oracle_nuisance
from .pseudo import PseudoSample, build_pseudo, ipcw_weights, pseudo_outcomes, weighted_loss
from .rules import Condition, Rule, dedup_rules, evaluate_rule, rule_matrix
from .simulate import SimScenario, make_scenario, simulate_trial, true_cate
from .study import StudyConfig, run_study

__version__ = "0.1.0"

__all__ = [
    "CTreeConfig",
    "CTreeRuleEnsemble",
    "Condition",
    "DataError",
    "Dataset",
    "Horizon",
    "HorizonStatus",
    "ImportanceReport",
    "InsufficientCandidatesError",
    "NuisanceConfig",
    "NuisanceFit",
    "NumericalError",
    "PredictionMetrics",
    "PseudoSample",
    "RandomSurvivalForest",
    "Rule",
    "RuleModel",
    "Schema",
    "SelectionSummary",
    "SimScenario",
    "StudyConfig",
    "SurvRuleFitError",
    "SurvivalRuleFit",
    "WeightedLassoCV",
    "bias",
    "binned_rmse",
    "boost_rules",
    "build_design",
    "build_pseudo",
    "classify_at_horizon",
    "cross_validate",
    "dedup_rules",
    "estimate_nuisance",
    "evaluate_predictions",
    "evaluate_rule",
    "fit_ctree",
    "fit_lasso_path",
    "fit_rules",
    "importance",
    "ipcw_weights",
    "kaplan_meier",
    "km_median_survival",
    "load_csv",
    "make_scenario",
    "oracle_nuisance",
    "pseudo_outcomes",
    "resolve_horizon",
    "rule_matrix",
    "run_study",
    "save_csv",
    "selection_frequency",
    "simulate_trial",
    "spearman",
    "true_cate",
    "weighted_loss",
]
