"""Command-line interface: simulate, fit, predict, evaluate, report, replicate.

Exit codes: 0 success, 2 usage, 3 data or I/O error, 4 insufficient candidate
subgroups, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .data import Schema, load_csv, resolve_horizon, save_csv
from .exceptions import DataError, SurvRuleFitError
from .forest import default_n_jobs
from .metrics import evaluate_predictions
from .model import RuleModel, format_report, importance
from .pseudo import LEARNERS
from .simulate import SETTINGS, SCENARIOS, SimScenario, TruthTable, calibrated, make_scenario, simulate_trial, true_cate

EXIT_USAGE = 2

TRUTH_COLUMNS = ("id", "tau", "e", "S0", "S1")


class UsageError(SurvRuleFitError):
    exit_code = EXIT_USAGE


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _horizon_arg(text):
    if text in ("auto", "auto-control"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be a positive number, 'auto' or 'auto-control', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("horizon must be positive")
    return value


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    root = np.random.SeedSequence(args.seed)
    ss_cal, ss_data = root.spawn(2)
    scn = make_scenario(args.scenario, args.setting, args.censoring, args.censor_rate, seed=args.seed)
    scn = calibrated(scn, np.random.default_rng(ss_cal))
    trial = simulate_trial(scn, args.n, np.random.default_rng(ss_data))
    d = trial.dataset
    h = resolve_horizon(d, args.horizon)
    truth = true_cate(d.covariates, scn, h)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(d, out / "data.csv")
    pd.DataFrame(
        {"id": d.ids, "tau": truth.tau, "e": truth.propensity, "S0": truth.surv0, "S1": truth.surv1}
    ).to_csv(out / "truth.csv", index=False)
    manifest = {
        "seed": args.seed,
        "n": args.n,
        "horizon": args.horizon,
        "t_star": h.t_star,
        "censoring_fraction": float(1 - np.mean(d.event)),
        "scenario": scn.to_dict(),
    }
    _write_json(manifest, out / "manifest.json")
    print(f"wrote {out / 'data.csv'}, {out / 'truth.csv'}, {out / 'manifest.json'} (t*={h.t_star:.6g})")
    return 0


# ---------------------------------------------------------------------------
# fit


def read_truth(path, ids=None):
    """Truth CSV as a TruthTable, row-aligned to ``ids`` when given."""
    try:
        frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path}: cannot parse CSV ({exc})") from exc
    missing = [c for c in TRUTH_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing truth columns {missing}")
    if ids is not None:
        frame = frame.set_index("id")
        keys = [str(i) for i in ids]
        absent = [k for k in keys if k not in frame.index]
        if absent:
            raise DataError(f"{path}: no truth row for id {absent[0]!r}")
        frame = frame.loc[keys].reset_index()
    return frame


def _truth_table(frame, t_star):
    return TruthTable(
        tau=frame["tau"].to_numpy(float),
        propensity=frame["e"].to_numpy(float),
        surv0=frame["S0"].to_numpy(float),
        surv1=frame["S1"].to_numpy(float),
        t_star=t_star,
    )


def _load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_fit(args):
    from .estimator import SurvivalRuleFit

    schema = Schema.from_json(args.schema) if args.schema else None
    d = load_csv(args.data, schema)
    params = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            params.update(json.load(fh))
    flag_params = {
        "learner": args.learner,
        "horizon": args.horizon,
        "alpha": args.alpha,
        "bonferroni": args.bonferroni,
        "max_trees": args.max_trees,
        "max_depth": args.max_depth,
        "permutations": args.permutations,
        "learn_rate": args.learn_rate,
        "folds": args.folds,
        "lambda_rule": args.lambda_rule,
        "importance_divisor": args.divisor,
    }
    params.update({k: v for k, v in flag_params.items() if v is not None})
    nuisance = dict(params.pop("nuisance", {}) or {})
    if args.censoring_model:
        nuisance["censoring"] = args.censoring_model
    if args.trees is not None:
        nuisance["trees"] = args.trees

    truth = scenario = None
    if args.nuisance == "oracle":
        if not args.truth:
            raise UsageError("--nuisance oracle requires --truth")
        manifest_path = Path(args.manifest) if args.manifest else Path(args.truth).with_name("manifest.json")
        manifest = _load_manifest(manifest_path) if manifest_path.exists() else None
        frame = read_truth(args.truth, d.ids)
        if manifest is None:
            raise DataError(f"oracle mode needs the simulation manifest ({manifest_path} not found)")
        t_truth = float(manifest["t_star"])
        requested = params.get("horizon", "auto")
        if isinstance(requested, str):
            params["horizon"] = t_truth
        elif not np.isclose(float(requested), t_truth):
            raise UsageError(f"--horizon {requested} differs from the truth horizon {t_truth}")
        truth = _truth_table(frame, t_truth)
        scenario = SimScenario.from_dict(manifest["scenario"])
        nuisance.update(propensity="oracle", survival="oracle", censoring="oracle")
    elif args.truth:
        raise UsageError("--truth is only used with --nuisance oracle")
    params["nuisance"] = nuisance
    try:
        est = SurvivalRuleFit(**params, random_state=args.seed, n_jobs=args.jobs)
    except TypeError as exc:
        raise UsageError(f"invalid fit config: {exc}") from exc
    est.fit(d, truth=truth, scenario=scenario)
    est.model_.save(args.out, est.importance_)
    if args.dump_candidates:
        _write_json([r.to_dict(d.covariate_names) for r in est.candidates_], args.dump_candidates)
    m = est.model_
    print(
        f"fitted {m.learner} at t*={m.t_star:.6g}: {m.n_selected} of {m.n_candidates} candidate "
        f"subgroups selected (lambda={m.lambda_:.4g}); wrote {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# predict / evaluate / report


def cmd_predict(args):
    model = RuleModel.load(args.model)
    try:
        frame = pd.read_csv(args.data, dtype={"id": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{args.data}: cannot parse CSV ({exc})") from exc
    missing = [c for c in model.covariate_names if c not in frame.columns]
    if missing:
        raise DataError(f"{args.data}: missing covariate columns required by the model: {missing}")
    X = frame[list(model.covariate_names)].apply(pd.to_numeric, errors="coerce")
    if X.isna().any().any():
        row, col = next((i, c) for c in X.columns for i in np.flatnonzero(X[c].isna().to_numpy()))
        raise DataError(f"{args.data}: non-numeric value in column {col!r} at data row {row + 1}")
    tau = model.predict(X.to_numpy(float))
    ids = frame["id"] if "id" in frame.columns else pd.Series(np.arange(1, len(frame) + 1))
    pd.DataFrame({"id": ids, "tau_hat": tau}).to_csv(args.out, index=False)
    print(f"wrote {len(tau)} predictions to {args.out}")
    return 0


def cmd_evaluate(args):
    try:
        pred = pd.read_csv(args.pred, dtype={"id": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{args.pred}: cannot parse CSV ({exc})") from exc
    for col in ("id", "tau_hat"):
        if col not in pred.columns:
            raise DataError(f"{args.pred}: missing column {col!r}")
    truth = read_truth(args.truth, pred["id"].tolist())
    pm = evaluate_predictions(pred["tau_hat"].to_numpy(float), truth["tau"].to_numpy(float), args.q)
    text = json.dumps(pm.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_report(args):
    model = RuleModel.load(args.model)
    sys.stdout.write(format_report(model, importance(model, divisor=args.divisor)))
    return 0


# ---------------------------------------------------------------------------
# replicate


def cmd_replicate(args):
    from .study import StudyConfig, run_study, write_study

    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        raw = {
            "scenario": args.scenario,
            "setting": args.setting,
            "censor_rate": args.censor_rate,
            "learners": args.learners.split(","),
            "n_train": args.n_train,
            "n_test": args.n_test,
            "tree": {"alpha": args.alpha, "bonferroni": args.bonferroni},
        }
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = StudyConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid study config: {exc}") from exc
    out = args.out or cfg.output_dir
    if not out:
        raise UsageError("no output directory: pass --out or set output_dir in the config")
    result = run_study(cfg, workers=args.workers, n_jobs=args.jobs)
    write_study(result, out)
    print(result.table.to_string(index=False))
    print(f"wrote results to {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="survrulefit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_help = "worker threads for tree fitting (default: $SURVRULEFIT_JOBS or 1)"

    p = sub.add_parser("simulate", help="generate a synthetic trial with its true CATE")
    p.add_argument("--scenario", default="s1", type=str.upper, choices=sorted(SCENARIOS))
    p.add_argument("--setting", default="independent", choices=tuple(SETTINGS))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--censor-rate", type=float, default=0.3)
    p.add_argument("--censoring", default="exponential", choices=("exponential", "covariate"))
    p.add_argument("--horizon", type=_horizon_arg, default="auto", help="t* for truth.csv (default: pooled KM median)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a rule model to a trial CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", help="JSON column-role overrides")
    p.add_argument("--config", help="JSON with estimator parameters; flags override it")
    p.add_argument("--learner", choices=LEARNERS, type=str.lower)
    p.add_argument("--horizon", type=_horizon_arg)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bonferroni", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--max-trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--permutations", type=int)
    p.add_argument("--learn-rate", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--lambda-rule", choices=("min", "1se"))
    p.add_argument("--divisor", choices=("subgroups", "conditions"))
    p.add_argument("--trees", type=int, help="trees per nuisance forest")
    p.add_argument("--censoring-model", choices=("km", "forest"))
    p.add_argument("--nuisance", choices=("estimate", "oracle"), default="estimate")
    p.add_argument("--truth", help="truth.csv from simulate (oracle mode)")
    p.add_argument("--manifest", help="manifest.json from simulate (default: next to --truth)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None, help=jobs_help)
    p.add_argument("--dump-candidates", help="write the deduplicated candidate rules as JSON")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict CATE for the rows of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against truth.csv")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--q", type=int, default=50, help="number of bins for binned RMSE")
    p.add_argument("--out", help="write metrics JSON here as well as to stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print the subgroup table ordered by importance")
    p.add_argument("--model", required=True)
    p.add_argument("--divisor", choices=("subgroups", "conditions"), default="subgroups")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replicate", help="run a simulation study")
    p.add_argument("--config", help="study JSON; supersedes the scenario flags below")
    p.add_argument("--scenario", default="S1", type=str.upper, choices=sorted(SCENARIOS))
    p.add_argument("--setting", default="independent", choices=tuple(SETTINGS))
    p.add_argument("--censor-rate", type=float, default=0.3)
    p.add_argument("--learners", default="dea", help="comma-separated, e.g. dr,dea")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--bonferroni", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="replicates run in parallel")
    p.add_argument("--jobs", type=int, default=None, help=jobs_help)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 0) is None:
        args.jobs = default_n_jobs()
    try:
        return args.func(args)
    except SurvRuleFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (TypeError, ValueError) as exc:
        # configuration mistakes (unknown keys, out-of-range settings)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
