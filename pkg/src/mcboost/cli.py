"""Command-line front end.

Subcommands: simulate, fit, calibrate, evaluate, shift-eval, batchgcp,
multimvp, reproduce. ``--config file.json`` supplies option values (keys are
long option names, with ``-`` or ``_``); explicit flags override them. Exit
status is 0 on success, 2 on configuration errors, 3 on data errors and 1 on
anything else. Every output file is written to a temporary file and renamed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .auditors import AuditorKind
from .baselines import InitialModel, fit_forest, fit_ols, fit_quantile_forest, model_from_dict
from .boost import BoostConfig, CalibratedModel, StepRule, run
from .dataset import Dataset, SplitSpec, atomic_write_text, load_csv, split, write_csv, _fmt
from .errors import ConfigError, DataError, MCBoostError
from .experiments import FIGURES, ExperimentSettings, reproduce
from .instances import MvpConfig, batch_gcp, minmax_scaler, multi_mvp
from .metrics import evaluate
from .partitions import BucketSpec, GroupSpec, assign_groups
from .scores import ScoreKind, loss
from .shift import SHIFT_KINDS, ShiftSpec, make_weights
from .simgen import SimConfig, generate
from .stopping import StoppingRule

log = logging.getLogger("mcboost")


class _Errors:
    """Collects configuration problems so they are reported together."""

    def __init__(self):
        self.items: list[str] = []

    def attempt(self, field: str, fn):
        try:
            return fn()
        except ConfigError as e:
            self.items.append(f"{field}: {e}")
            return None

    def raise_if_any(self):
        if self.items:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(self.items))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, seed: bool = True):
    p.add_argument("--config", help="JSON file of option values; explicit flags win")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v: progress, -vv: per-iteration trace")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def _add_data(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--schema", help="column roles, e.g. cont:x1,cont:x2,cat:x6,y:y,weight:w "
                                    "(default: inferred)")


def _add_initial(p: argparse.ArgumentParser):
    p.add_argument("--model", help="initial model JSON written by `fit`")
    p.add_argument("--pred-col", help="data column holding initial predictions (instead of --model)")


def _add_groups(p: argparse.ArgumentParser):
    p.add_argument("--groups", default="", help="categorical columns whose cross product defines groups, "
                                                "e.g. x6,x7 (default: one group)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcboost", description="Multicalibration boosting toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="draw a synthetic dataset",
                       description="Write a synthetic dataset CSV (x1..x5, x6, x7, y, truth) to --out.")
    _add_common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--sigma-base", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output dataset CSV")

    p = sub.add_parser("fit", help="fit an initial predictor",
                       description="Fit OLS, a random forest or a quantile forest; writes model JSON to --out.")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model-type", choices=("ols", "forest", "quantile_forest"), default="ols")
    p.add_argument("--tau", type=float, default=0.9, help="quantile level for quantile_forest")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--mtry", type=int)
    p.add_argument("--no-categorical", action="store_true", help="use continuous features only")
    p.add_argument("--out", required=True, help="output model JSON")

    p = sub.add_parser("calibrate", help="run multicalibration boosting",
                       description="Split --data into calibration, validation and holdout parts, boost the "
                                   "initial predictions and write the model JSON (--out) and trace CSV "
                                   "(--trace). --calib-out saves the calibration rows.")
    _add_common(p)
    _add_data(p)
    _add_initial(p)
    _add_groups(p)
    p.add_argument("--score", default="squared", help="squared | pinball:TAU | logistic[:01|pm1] | exponential")
    p.add_argument("--auditor", choices=("constant", "linear", "tree"), default="tree")
    p.add_argument("--max-depth", type=int, default=3, help="tree auditor depth")
    p.add_argument("--min-leaf", type=int, default=5, help="tree auditor leaf size")
    p.add_argument("--ridge-lambda", type=float, default=1e-6, help="linear auditor ridge penalty")
    p.add_argument("--no-categorical-audit", action="store_true", help="auditor sees continuous features only")
    p.add_argument("--L", type=int, default=1, help="number of prediction buckets")
    p.add_argument("--range", type=_pair, help="bucket range LO,HI (default: observed predictions)")
    p.add_argument("--anchor", choices=("dynamic", "static"), default="dynamic")
    p.add_argument("--directional", action="store_true", help="nested one-sided buckets")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--step", default="adaptive", help="adaptive[:C_L] | fixed:ETA")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--projection", type=_pair, help="clip predictions to LO,HI")
    p.add_argument("--scope", choices=("local", "global"), default="local")
    p.add_argument("--stop", default="alpha", help="alpha | budget:RHO | budget:total=B | cv:K | patience:P")
    p.add_argument("--selected-only", action="store_true",
                   help="stop as soon as the selected cell is within alpha")
    p.add_argument("--calib-fraction", type=float, default=0.5)
    p.add_argument("--valid-fraction", type=float, default=0.25)
    p.add_argument("--share-calib-valid", action="store_true", help="audit on the calibration rows")
    p.add_argument("--out", required=True, help="output calibrated model JSON")
    p.add_argument("--trace", help="output trace CSV (default: OUT with .trace.csv)")
    p.add_argument("--calib-out", help="output CSV of the calibration rows")

    p = sub.add_parser("evaluate", help="evaluate predictions",
                       description="Evaluate a model on --data; prints the global metrics as JSON and writes "
                                   "the full report to --out (.csv for long format, JSON otherwise). "
                                   "--pred-out writes the predictions.")
    _add_common(p, seed=False)
    _add_data(p)
    _add_initial(p)
    p.add_argument("--groups", help="grouping columns (default: the model's)")
    p.add_argument("--L", type=int, help="buckets for per-cell errors (default: the model's)")
    p.add_argument("--tau", type=float, help="quantile level for coverage (default: the model's if pinball)")
    p.add_argument("--truth-col", help="column with the true regression function, for excess risk "
                                       "(default: truth if present)")
    p.add_argument("--out", help="output report (.csv or .json)")
    p.add_argument("--pred-out", help="output CSV of predictions")

    p = sub.add_parser("shift-eval", help="evaluate under covariate shift",
                       description="Reweight --data by a structural shift of the standardized covariates "
                                   "and evaluate the model; writes the report to --out.")
    _add_common(p, seed=False)
    _add_data(p)
    _add_initial(p)
    _add_groups(p)
    p.add_argument("--shift", choices=SHIFT_KINDS, required=True)
    p.add_argument("--custom", help="weight expression over z1, z2, x6, x7 for --shift custom")
    p.add_argument("--reference", help="reference CSV for standardization (default: --data)")
    p.add_argument("--group-id", type=int, help="group id for --shift group")
    p.add_argument("--clip", type=_pair, default=(0.1, 10.0), help="tilt weight clip LO,HI")
    p.add_argument("--one-sided", action="store_true", help="one-sided interaction subgroup")
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--out", help="output report (.csv or .json)")
    p.add_argument("--weights-out", help="output CSV of the shift weights")

    p = sub.add_parser("batchgcp", help="one-shot groupwise quantile shift",
                       description="Shift each group's initial quantiles by its residual tau-quantile; "
                                   "writes model JSON to --out.")
    _add_common(p, seed=False)
    _add_data(p)
    _add_initial(p)
    _add_groups(p)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--out", required=True, help="output model JSON")

    p = sub.add_parser("multimvp", help="grid-snapped iterative quantile calibration",
                       description="Calibrate quantiles on a grid over [0, 1]; writes model JSON to --out "
                                   "and the trace CSV to --trace. --scale min-max scales outcomes first and "
                                   "records the inverse map in the model.")
    _add_common(p, seed=False)
    _add_data(p)
    _add_initial(p)
    _add_groups(p)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--L", type=int, default=10, help="grid resolution")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--step", type=float, default=1.0, help="multiplier on the chosen grid shift")
    p.add_argument("--scale", action="store_true", help="min-max scale outcomes into [0, 1]")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--trace", help="output trace CSV")

    p = sub.add_parser("reproduce", help="regenerate a benchmark figure table",
                       description="Run a figure's experiment grid and write its tidy CSV table to --out "
                                   "(stdout if omitted).")
    _add_common(p)
    p.set_defaults(seed=1)
    p.add_argument("--figure", type=int, choices=FIGURES, required=True)
    p.add_argument("--reps", type=int, help="replications (default: the figure's)")
    p.add_argument("--threads", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--n-test", type=int, default=5000)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-trees", type=int, default=50)
    p.add_argument("--sizes", type=_ints, help="override the sample-size grid, e.g. 1000,4000")
    p.add_argument("--out", help="output CSV")
    return parser


# ---------------------------------------------------------------------------
# config files


def _config_defaults(parser: argparse.ArgumentParser, command: str, path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"--config: cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"--config: {path} is not valid JSON ({e})")
    if not isinstance(cfg, dict):
        raise ConfigError("--config: top level must be an object")
    if isinstance(cfg.get(command), dict):
        cfg = {**{k: v for k, v in cfg.items() if not isinstance(v, dict)}, **cfg[command]}
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    out, errors = {}, _Errors()
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            errors.items.append(f"config.{key}: unknown option for {command!r}")
            continue
        action = actions[dest]
        if action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as e:
                errors.items.append(f"config.{key}: {e}")
                continue
        elif action.type in (_pair, _ints) and isinstance(value, list):
            value = tuple(value)
        if action.choices is not None and value not in action.choices:
            errors.items.append(f"config.{key}: {value!r} is not one of {list(action.choices)}")
            continue
        out[dest] = value
    errors.raise_if_any()
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise KeyError(command)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((t for t in rest if not t.startswith("-")), None)
    if known.config and command in COMMANDS:
        defaults = _config_defaults(parser, command, known.config)
        sub = _subparser(parser, command)
        # required options may come from the file
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# shared helpers


def _load(args) -> Dataset:
    return load_csv(args.data, args.schema)


def _load_initial(path: str) -> InitialModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a JSON model file ({e})")
    if not isinstance(d, dict) or "kind" not in d:
        raise DataError(f"{path}: not an initial model written by `fit`")
    return model_from_dict(d)


def _initial_source(args, required: bool = True):
    if args.model and args.pred_col:
        raise ConfigError("give either --model or --pred-col, not both")
    if required and not (args.model or args.pred_col):
        raise ConfigError("an initial predictor is required: --model or --pred-col")


def _f0(data: Dataset, initial: InitialModel | None, pred_col: str | None) -> np.ndarray:
    if pred_col:
        if pred_col not in data.extras:
            raise DataError(f"column {pred_col!r} not found (is it declared as extra:{pred_col}?)")
        return data.extras[pred_col]
    return initial.predict(data)


def _groups(text: str | None) -> GroupSpec:
    cols = tuple(c.strip() for c in (text or "").split(",") if c.strip())
    return GroupSpec(cols) if cols else GroupSpec.none()


def _write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=1) + "\n")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> dict:
    errors = _Errors()
    cfg = errors.attempt("simulate", lambda: SimConfig(n=args.n, sigma_base=args.sigma_base, seed=args.seed))
    errors.raise_if_any()
    data, _ = generate(cfg)
    write_csv(data, args.out)
    return {"rows": data.n, "out": args.out}


def cmd_fit(args) -> dict:
    data = _load(args)
    cats = not args.no_categorical
    if args.model_type == "ols":
        model = fit_ols(data, include_categorical=cats)
    elif args.model_type == "forest":
        model = fit_forest(data, args.n_trees, args.max_depth, args.min_leaf, args.mtry, args.seed,
                           include_categorical=cats)
    else:
        model = fit_quantile_forest(data, args.tau, args.n_trees, args.max_depth, args.min_leaf, args.mtry,
                                    args.seed, include_categorical=cats)
    _write_json(args.out, model.to_dict())
    return {"model": args.model_type, "rows": data.n, "out": args.out}


def boost_config_from_args(args) -> tuple[BoostConfig, SplitSpec]:
    """Build and validate every configuration piece, reporting all problems at once."""
    e = _Errors()
    score = e.attempt("score", lambda: ScoreKind.parse(args.score))
    auditor = e.attempt("auditor", lambda: AuditorKind(args.auditor, args.ridge_lambda, args.max_depth,
                                                       args.min_leaf, not args.no_categorical_audit))
    groups = e.attempt("groups", lambda: _groups(args.groups))
    buckets = e.attempt("buckets", lambda: BucketSpec(args.L, args.range, args.anchor, args.directional))
    step = e.attempt("step", lambda: StepRule.parse(args.step))
    stop = e.attempt("stop", lambda: StoppingRule.parse(args.stop))
    if not args.alpha > 0:
        e.items.append(f"alpha: must be positive, got {args.alpha}")
    if args.max_iters < 0:
        e.items.append(f"max_iters: must be >= 0, got {args.max_iters}")
    splits = e.attempt("split", lambda: SplitSpec(args.calib_fraction, args.valid_fraction,
                                                  args.share_calib_valid, args.seed))
    e.raise_if_any()
    cfg = e.attempt("boost", lambda: BoostConfig(score, auditor, groups, buckets, args.alpha, step,
                                                 args.max_iters, args.projection, args.scope, stop,
                                                 not args.selected_only, args.seed))
    e.raise_if_any()
    return cfg, splits


def cmd_calibrate(args) -> dict:
    _initial_source(args)
    cfg, spec = boost_config_from_args(args)
    data = _load(args)
    initial = _load_initial(args.model) if args.model else None
    calib, valid, hold = split(data, spec)
    f0_hold = _f0(hold, initial, args.pred_col) if hold.n else None
    model, trace = run(calib, valid, cfg, _f0(calib, initial, args.pred_col),
                       None if valid is calib else _f0(valid, initial, args.pred_col),
                       holdout=hold if hold.n else None, f0_holdout=f0_hold, initial=initial)
    model.meta["split"] = spec.to_dict()
    if args.pred_col:
        model.meta["pred_col"] = args.pred_col
    model.save(args.out)
    trace_path = args.trace or _sibling(args.out, ".trace.csv")
    trace.write_csv(trace_path)
    if args.calib_out:
        write_csv(calib, args.calib_out)
    summary = trace.summary()
    # losses of the returned model (differs from the last trace row after a patience rollback)
    summary["final_calib_loss"] = float(np.mean(loss(cfg.score, calib.y, trace.final["calib"])))
    summary["final_valid_loss"] = float(np.mean(loss(cfg.score, valid.y, trace.final["valid"])))
    summary.update(n_calib=calib.n, n_valid=valid.n, n_holdout=hold.n, updates=model.n_updates,
                   out=args.out, trace=trace_path)
    for r in trace.records:
        log.debug(json.dumps({"iter": r.iter, "cell": [r.cell_g, r.cell_l], "delta": r.delta, "eta": r.eta,
                              "calib_loss": r.calib_loss, "valid_loss": r.valid_loss}))
    return summary


def _sibling(path: str, suffix: str) -> str:
    base = path[:-5] if path.endswith(".json") else path
    return base + suffix


def _scaled_y(model: CalibratedModel, data: Dataset) -> np.ndarray:
    if "scale" in model.meta:
        lo, hi = model.meta["scale"]
        return (data.y - lo) / (hi - lo)
    return data.y


def cmd_evaluate(args) -> dict:
    data = _load(args)
    if not args.model:
        raise ConfigError("--model is required")
    model = CalibratedModel.load(args.model)
    f = _predict(model, data, args.pred_col)
    y = _scaled_y(model, data)
    groups = _groups(args.groups) if args.groups is not None else model.groups
    gids = _group_ids(model, groups, data)
    L = args.L if args.L is not None else model.buckets.L
    tau = args.tau if args.tau is not None else model.score.tau
    truth_col = args.truth_col or ("truth" if "truth" in data.extras else None)
    f_star = None
    if truth_col:
        if truth_col not in data.extras:
            raise DataError(f"truth column {truth_col!r} not found")
        f_star = data.extras[truth_col]
    rep = evaluate(y, f, gids, model.score, data.weights, BucketSpec(L, model.buckets.range), f_star, tau)
    if args.out:
        rep.save(args.out)
    if args.pred_out:
        out = f
        if "scale" in model.meta:
            lo, hi = model.meta["scale"]
            out = lo + f * (hi - lo)
        atomic_write_text(args.pred_out, "prediction\n" + "".join(_fmt(v) + "\n" for v in out))
    return rep.to_dict()["global"]


def _predict(model: CalibratedModel, data: Dataset, pred_col: str | None) -> np.ndarray:
    pred_col = pred_col or model.meta.get("pred_col")
    if pred_col:
        if pred_col not in data.extras:
            raise DataError(f"column {pred_col!r} not found (declare it as extra:{pred_col})")
        f0 = data.extras[pred_col]
    elif model.initial is not None:
        f0 = model.initial.predict(data)
    else:
        raise ConfigError("model has no embedded initial predictor; pass --pred-col")
    if "scale" in model.meta:
        lo, hi = model.meta["scale"]
        f0 = (f0 - lo) / (hi - lo)
    return model.predict(data, f0)


def _group_ids(model: CalibratedModel, groups: GroupSpec, data: Dataset) -> np.ndarray:
    if groups == model.groups and model.group_sizes:
        return assign_groups(data, groups, model.group_sizes)
    return assign_groups(data, groups)


def cmd_shift_eval(args) -> dict:
    data = _load(args)
    reference = load_csv(args.reference, args.schema) if args.reference else data
    e = _Errors()
    spec = e.attempt("shift", lambda: ShiftSpec(args.shift, clip=args.clip, two_sided=not args.one_sided,
                                                group=args.group_id, expression=args.custom))
    e.raise_if_any()
    if not args.model:
        raise ConfigError("--model is required")
    model = CalibratedModel.load(args.model)
    f = _predict(model, data, args.pred_col)
    groups = _groups(args.groups) if args.groups else model.groups
    gids = _group_ids(model, groups, data)
    w = make_weights(data, spec, reference, gids)
    f_star = data.extras.get("truth")
    tau = model.score.tau
    rep = evaluate(_scaled_y(model, data), f, gids, model.score, w, BucketSpec(args.L), f_star, tau)
    if args.out:
        rep.save(args.out)
    if args.weights_out:
        atomic_write_text(args.weights_out, "weight\n" + "".join(_fmt(v) + "\n" for v in w))
    out = rep.to_dict()["global"]
    out.update(shift=spec.kind, effective_n=float(w.sum() ** 2 / np.sum(w * w)))
    return out


def cmd_batchgcp(args) -> dict:
    _initial_source(args)
    data = _load(args)
    initial = _load_initial(args.model) if args.model else None
    q0 = _f0(data, initial, args.pred_col)
    model = batch_gcp(data, q0, args.tau, _groups(args.groups), initial)
    if args.pred_col:
        model.meta["pred_col"] = args.pred_col
    model.save(args.out)
    return {"groups": len(model.updates), "shifts": model.meta["shifts"], "out": args.out}


def cmd_multimvp(args) -> dict:
    _initial_source(args)
    e = _Errors()
    cfg = e.attempt("multimvp", lambda: MvpConfig(args.tau, args.L, _groups(args.groups), args.alpha,
                                                  args.max_iters, args.step))
    e.raise_if_any()
    data = _load(args)
    initial = _load_initial(args.model) if args.model else None
    q0 = _f0(data, initial, args.pred_col)
    scale = None
    if args.scale:
        lo, hi = minmax_scaler(data.y)
        scale = [lo, hi]
        data = Dataset(data.x_cont, data.x_cat, (data.y - lo) / (hi - lo), data.cont_names, data.cat_names,
                       data.cat_levels, data.weights, data.extras)
        q0 = (q0 - lo) / (hi - lo)
    elif data.y.min() < 0 or data.y.max() > 1:
        raise DataError("multimvp expects outcomes in [0, 1]; pass --scale to min-max scale them")
    model, trace = multi_mvp(data, q0, cfg, initial)
    if scale:
        # outcomes and initial predictions stay in original units; predictions live on [0, 1]
        model.meta["scale"] = scale
    if args.pred_col:
        model.meta["pred_col"] = args.pred_col
    model.save(args.out)
    if args.trace:
        trace.write_csv(args.trace)
    s = trace.summary()
    s.update(out=args.out, scale=scale)
    return s


def cmd_reproduce(args) -> dict:
    e = _Errors()
    st = e.attempt("reproduce", lambda: ExperimentSettings(args.reps, args.seed, args.n_test, args.n_train,
                                                           args.n_trees, threads=args.threads,
                                                           sizes=args.sizes))
    e.raise_if_any()
    text = reproduce(args.figure, st)
    if args.out:
        atomic_write_text(args.out, text)
        return {"figure": args.figure, "rows": text.count("\n") - 1, "out": args.out}
    sys.stdout.write(text)
    return None


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "calibrate": cmd_calibrate, "evaluate": cmd_evaluate,
            "shift-eval": cmd_shift_eval, "batchgcp": cmd_batchgcp, "multimvp": cmd_multimvp,
            "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except ConfigError as e:
        print(f"mcboost: config error: {e}", file=sys.stderr)
        return 2
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(getattr(args, "verbose", 0), 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        result = COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"mcboost: config error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"mcboost: data error: {e}", file=sys.stderr)
        return 3
    except MCBoostError as e:
        print(f"mcboost: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"mcboost: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if result is not None:
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
