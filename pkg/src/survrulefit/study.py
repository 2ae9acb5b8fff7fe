"""Replication harness: repeated simulated trials, fits per learner, aggregated metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .ctree import CTreeConfig
from .data import BINARY, resolve_horizon
from .estimator import fit_rules
from .exceptions import DataError, InsufficientCandidatesError, NumericalError
from .metrics import evaluate_predictions, selection_frequency
from .nuisance import NuisanceConfig, estimate_nuisance
from .pseudo import LEARNERS, build_pseudo
from .rules import rule_hygiene
from .simulate import calibrated, gen_covariates, make_scenario, simulate_trial, true_cate

log = logging.getLogger(__name__)

# fixed stream tags under the master seed; replicate r uses [seed, r]
_CALIBRATION_STREAM = 10**9 + 1
_TEST_STREAM = 10**9 + 2


@dataclass
class StudyConfig:
    scenario: str = "S1"
    setting: str = "independent"
    censoring: str = "exponential"
    censor_rate: float = 0.3
    censor_b1: float = 0.5
    censor_b2: float = -0.5
    n_train: int = 1000
    n_test: int = 10000
    replicates: int = 100
    learners: tuple = ("dea",)
    horizon: object = "auto"
    nuisance: dict = field(default_factory=dict)
    tree: dict = field(default_factory=dict)
    folds: int = 10
    n_lambdas: int = 100
    min_ratio: float = 1e-3
    standardize: bool = True
    lambda_rule: str = "min"
    Q: int = 50
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.learners, str):
            self.learners = (self.learners,)
        self.learners = tuple(lr.lower() for lr in self.learners)
        bad = [lr for lr in self.learners if lr not in LEARNERS]
        if bad or not self.learners:
            raise ValueError(f"learners must be drawn from {LEARNERS}, got {list(self.learners)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.replicates < _CALIBRATION_STREAM:
            raise ValueError("too many replicates")
        if self.n_train < 1 or self.n_test < self.Q:
            raise ValueError("need n_train >= 1 and n_test >= Q")
        # validate eagerly so config errors abort before any replicate runs
        self.tree_config()
        self.nuisance_config()
        make_scenario(self.scenario, self.setting, self.censoring, self.censor_rate)

    def tree_config(self):
        return CTreeConfig.from_dict(dict(self.tree))

    def nuisance_config(self):
        return NuisanceConfig.from_dict(dict(self.nuisance))

    def to_dict(self):
        out = asdict(self)
        out["learners"] = list(self.learners)
        return out

    @classmethod
    def from_dict(cls, raw):
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown study config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def replicate_seed(cfg: StudyConfig, r):
    return [int(cfg.seed), int(r)]


def study_scenario(cfg: StudyConfig):
    """Scenario with its censoring parameter calibrated from the study's calibration stream."""
    scn = make_scenario(
        cfg.scenario,
        cfg.setting,
        cfg.censoring,
        cfg.censor_rate,
        seed=cfg.seed,
        b1=cfg.censor_b1,
        b2=cfg.censor_b2,
    )
    return calibrated(scn, np.random.default_rng([cfg.seed, _CALIBRATION_STREAM]))


def study_test_covariates(cfg: StudyConfig, scn):
    return gen_covariates(scn, cfg.n_test, np.random.default_rng([cfg.seed, _TEST_STREAM]))


@dataclass
class ReplicateResult:
    index: int
    rows: list  # one dict per learner
    models: dict  # learner -> RuleModel or None
    candidates: dict = field(default_factory=dict)  # learner -> candidate rules (if kept)


def run_replicate(cfg: StudyConfig, scn, X_test, r, n_jobs=1, keep_candidates=False) -> ReplicateResult:
    """Simulate training set r, fit every learner on shared nuisances, score on the test set."""
    ss = np.random.SeedSequence(replicate_seed(cfg, r))
    ss_data, ss_nuis, ss_rules = ss.spawn(3)
    trial = simulate_trial(scn, cfg.n_train, np.random.default_rng(ss_data))
    d = trial.dataset
    mask = np.array([k == BINARY for k in d.covariate_kinds])
    rows, models, cands = [], {}, {}
    base = {"replicate": r, "seed": json.dumps(replicate_seed(cfg, r))}
    try:
        h = resolve_horizon(d, cfg.horizon)
    except DataError as exc:
        for lr in cfg.learners:
            rows.append({**base, "learner": lr, "status": "failed", "reason": str(exc), "n_selected": 0})
            models[lr] = None
        return ReplicateResult(r, rows, models, cands)
    truth_test = true_cate(X_test, scn, h)
    truth_train = true_cate(d.covariates, scn, h)
    nf = estimate_nuisance(
        d, h, cfg.nuisance_config(), cfg.learners, ss_nuis, n_jobs, truth=truth_train, scenario=scn
    )
    tree_cfg = cfg.tree_config()
    for lr, ss_lr in zip(cfg.learners, ss_rules.spawn(len(cfg.learners))):
        row = {**base, "learner": lr, "t_star": h.t_star}
        try:
            pseudo = build_pseudo(d, h, nf, lr)
            row["n_complete"] = pseudo.n_complete
            res = fit_rules(
                d.covariates,
                pseudo,
                h.t_star,
                tree_cfg,
                mask,
                d.covariate_names,
                random_state=ss_lr,
                folds=cfg.folds,
                n_lambdas=cfg.n_lambdas,
                min_ratio=cfg.min_ratio,
                standardize=cfg.standardize,
                lambda_rule=cfg.lambda_rule,
                config={"study": cfg.to_dict(), "replicate": r},
            )
        except (InsufficientCandidatesError, NumericalError, DataError) as exc:
            log.warning("replicate %d, learner %s failed: %s", r, lr, exc)
            row.update(status="failed", reason=str(exc), n_selected=0)
            rows.append(row)
            models[lr] = None
            continue
        model = res.model
        pm = evaluate_predictions(model.predict(X_test), truth_test.tau, cfg.Q)
        Xc = np.asarray(d.covariates)[pseudo.complete]
        audit = rule_hygiene(res.candidates, Xc)
        row.update(
            status="ok",
            reason="",
            n_candidates=model.n_candidates,
            n_selected=model.n_selected,
            **{"lambda": model.lambda_},
            bias=pm.bias,
            binned_rmse=pm.binned_rmse,
            spearman=pm.spearman,
            **{f"candidate_{k}": v for k, v in audit.items()},
        )
        rows.append(row)
        models[lr] = model
        if keep_candidates:
            cands[lr] = (res.candidates, Xc)
    return ReplicateResult(r, rows, models, cands)


METRIC_COLUMNS = [
    "replicate",
    "learner",
    "seed",
    "status",
    "reason",
    "t_star",
    "n_complete",
    "n_candidates",
    "n_selected",
    "lambda",
    "bias",
    "binned_rmse",
    "spearman",
    "candidate_duplicates",
    "candidate_complements",
    "candidate_identical",
    "candidate_degenerate",
]


@dataclass
class StudyResult:
    config: StudyConfig
    scenario: object
    metrics: pd.DataFrame
    selection: pd.DataFrame
    table: pd.DataFrame
    models: list  # ReplicateResult.models per replicate, in replicate order
    replicates: list


def aggregate(cfg: StudyConfig, results, covariate_names):
    """Reduce per-replicate results (in replicate order) to the three summary tables."""
    results = sorted(results, key=lambda res: res.index)
    metrics = pd.DataFrame([row for res in results for row in res.rows])
    metrics = metrics.reindex(columns=METRIC_COLUMNS)
    sel_rows, tab_rows = [], []
    for lr in cfg.learners:
        summary = selection_frequency([res.models[lr] for res in results], covariate_names)
        for name in covariate_names:
            sel_rows.append(
                {"learner": lr, "covariate": name, "count": summary.counts[name], "frequency": summary.frequency(name)}
            )
        ok = metrics[(metrics.learner == lr) & (metrics.status == "ok")]
        tab_rows.append(
            {
                "learner": lr,
                "replicates": summary.replicates,
                "failed": summary.replicates - len(ok),
                "median_selected": summary.median,
                "min_selected": summary.min,
                "max_selected": summary.max,
                "selected": summary.table_row(),
                "median_bias": float(ok.bias.median()) if len(ok) else np.nan,
                "median_abs_bias": float(ok.bias.abs().median()) if len(ok) else np.nan,
                "median_binned_rmse": float(ok.binned_rmse.median()) if len(ok) else np.nan,
                "median_spearman": float(ok.spearman.median()) if len(ok) else np.nan,
            }
        )
    return metrics, pd.DataFrame(sel_rows), pd.DataFrame(tab_rows)


def run_study(cfg: StudyConfig, workers=1, n_jobs=1, keep_candidates=False, replicates=None) -> StudyResult:
    """Run the replicates (optionally a subset) and aggregate.

    ``workers`` parallelizes over replicates and ``n_jobs`` over trees within a
    replicate; neither changes any result.
    """
    scn = study_scenario(cfg)
    X_test = study_test_covariates(cfg, scn)
    indices = list(range(cfg.replicates)) if replicates is None else sorted(int(r) for r in replicates)
    if workers == 1:
        results = [run_replicate(cfg, scn, X_test, r, n_jobs, keep_candidates) for r in indices]
    else:
        results = Parallel(n_jobs=workers)(
            delayed(run_replicate)(cfg, scn, X_test, r, n_jobs, keep_candidates) for r in indices
        )
    names = tuple(f"X{j + 1}" for j in range(scn.p))
    metrics, selection, table = aggregate(cfg, results, names)
    results = sorted(results, key=lambda res: res.index)
    return StudyResult(cfg, scn, metrics, selection, table, [res.models for res in results], results)


def write_study(result: StudyResult, out_dir):
    """metrics.csv, selection.csv, table1.csv, manifest.json and per-fit model JSON."""
    from . import __version__

    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    result.metrics.to_csv(out / "metrics.csv", index=False)
    result.selection.to_csv(out / "selection.csv", index=False)
    result.table.to_csv(out / "table1.csv", index=False)
    for res in result.replicates:
        for lr, model in res.models.items():
            if model is not None:
                model.save(out / "models" / f"rep{res.index:04d}_{lr}.json")
    cfg = result.config
    manifest = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "scenario": result.scenario.to_dict(),
        "streams": {
            "calibration": [cfg.seed, _CALIBRATION_STREAM],
            "test_covariates": [cfg.seed, _TEST_STREAM],
        },
        "replicate_seeds": {str(res.index): replicate_seed(cfg, res.index) for res in result.replicates},
        "failures": [
            {"replicate": int(row.replicate), "learner": row.learner, "reason": row.reason}
            for row in result.metrics.itertuples()
            if row.status != "ok"
        ],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return out
