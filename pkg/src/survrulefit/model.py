"""Fitted sparse rule model: prediction, importance scores and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, InsufficientCandidatesError
from .rules import Rule, rule_matrix


@dataclass
class RuleModel:
    intercept: float
    rules: list  # selected Rule objects (support = training complete-case share)
    coefficients: np.ndarray
    lambda_: float
    learner: str
    t_star: float
    n_candidates: int
    covariate_names: tuple
    n_complete: int | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if len(self.rules) != self.coefficients.size:
            raise ValueError("one coefficient per selected rule")
        if np.any(self.coefficients == 0):
            raise ValueError("selected rules must carry nonzero coefficients")

    @property
    def n_selected(self):
        return len(self.rules)

    def predict(self, X):
        """tau_hat(x) = intercept + sum_l beta_l r_l(x)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.covariate_names):
            raise DataError(
                f"expected {len(self.covariate_names)} covariates {list(self.covariate_names)}, "
                f"got array of shape {X.shape}"
            )
        if not self.rules:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + rule_matrix(self.rules, X) @ self.coefficients

    def to_dict(self, importance=None):
        imp = importance.rule_importance if importance is not None else [None] * self.n_selected
        return {
            "learner": self.learner,
            "horizon": self.t_star,
            "lambda": self.lambda_,
            "intercept": self.intercept,
            "covariates": list(self.covariate_names),
            "candidates_count": self.n_candidates,
            "n_complete": self.n_complete,
            "rules": [
                {
                    **rule.to_dict(self.covariate_names),
                    "coefficient": float(beta),
                    "support": rule.support,
                    "importance": None if r_l is None else float(r_l),
                }
                for rule, beta, r_l in zip(self.rules, self.coefficients, imp)
            ],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, raw):
        names = tuple(raw["covariates"])
        rules = [Rule.from_dict(r, names) for r in raw["rules"]]
        return cls(
            intercept=float(raw["intercept"]),
            rules=rules,
            coefficients=np.array([r["coefficient"] for r in raw["rules"]], dtype=float),
            lambda_=float(raw["lambda"]),
            learner=raw["learner"],
            t_star=float(raw["horizon"]),
            n_candidates=int(raw["candidates_count"]),
            covariate_names=names,
            n_complete=raw.get("n_complete"),
            config=raw.get("config", {}),
        )

    def save(self, path, importance=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(importance), fh, indent=2, sort_keys=False)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_design(rules, X):
    """Complete-case rule design; needs at least two candidate rules."""
    if len(rules) < 2:
        raise InsufficientCandidatesError(len(rules))
    return rule_matrix(rules, X)


def predict(model: RuleModel, X_new):
    return model.predict(X_new)


@dataclass
class ImportanceReport:
    rules: list  # selected rules sorted by importance (descending)
    coefficients: np.ndarray
    support: np.ndarray
    rule_importance: np.ndarray  # aligned with the model's rule order
    order: np.ndarray  # indices into the model's rules, descending importance
    variable_importance: dict  # covariate name -> V_j
    divisors: dict  # covariate name -> c used
    divisor: str

    def rows(self, names):
        for k in self.order:
            yield (
                self.rules[k].text(names),
                float(self.coefficients[k]),
                float(self.support[k]),
                float(self.rule_importance[k]),
            )


def importance(model: RuleModel, design=None, divisor="subgroups") -> ImportanceReport:
    """Subgroup importance R_l = |beta_l| sqrt(s_l (1 - s_l)) and covariate importance V_j.

    ``design`` (complete-case rows x selected rules) supplies the supports; otherwise
    the supports stored on the rules are used.  ``divisor="subgroups"`` divides each
    R_l by the number of selected rules mentioning covariate j;
    ``divisor="conditions"`` divides by the number of covariates in rule l.
    """
    if divisor not in ("subgroups", "conditions"):
        raise ValueError("divisor must be 'subgroups' or 'conditions'")
    if design is not None:
        design = np.asarray(design, dtype=float)
        s = design.mean(axis=0) if design.size else np.zeros(0)
    else:
        s = np.array([r.support for r in model.rules], dtype=float)
    beta = model.coefficients
    R = np.abs(beta) * np.sqrt(np.clip(s * (1 - s), 0.0, None))
    order = np.argsort(-R, kind="mergesort")
    names = model.covariate_names
    per_var_rules = {}
    for k, rule in enumerate(model.rules):
        for j in rule.variables:
            per_var_rules.setdefault(j, []).append(k)
    V, C = {}, {}
    for j, ks in sorted(per_var_rules.items()):
        if divisor == "subgroups":
            c = len(ks)
            V[names[j]] = float(sum(R[k] for k in ks) / c)
            C[names[j]] = c
        else:
            V[names[j]] = float(sum(R[k] / len(model.rules[k].variables) for k in ks))
            C[names[j]] = [len(model.rules[k].variables) for k in ks]
    return ImportanceReport(list(model.rules), beta, s, R, order, V, C, divisor)


def format_report(model: RuleModel, report: ImportanceReport | None = None) -> str:
    """Plain-text subgroup table ordered by importance."""
    report = report or importance(model)
    lines = [
        f"learner={model.learner}  t*={model.t_star:.6g}  lambda={model.lambda_:.6g}  "
        f"candidates={model.n_candidates}  selected={model.n_selected}",
        f"intercept: {model.intercept:+.4f}",
    ]
    if not model.rules:
        lines.append("no subgroups selected (intercept-only model)")
        return "\n".join(lines) + "\n"
    width = max(len(r.text(model.covariate_names)) for r in model.rules)
    width = max(width, len("subgroup"))
    lines.append(f"{'subgroup':<{width}}  {'coef':>9}  {'support':>7}  {'importance':>10}")
    for text, beta, s, r_l in report.rows(model.covariate_names):
        lines.append(f"{text:<{width}}  {beta:>+9.4f}  {s:>7.3f}  {r_l:>10.4f}")
    if report.variable_importance:
        lines.append("")
        lines.append("covariate importance:")
        for name, v in sorted(report.variable_importance.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name}: {v:.4f}")
    return "\n".join(lines) + "\n"
