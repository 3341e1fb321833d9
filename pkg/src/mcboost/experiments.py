"""Desk-scale reproduction of the benchmark figures as tidy CSV tables.

Every replication draws fresh training, calibration and test samples from the
synthetic generator using seeds derived from one base seed, so a table is a
pure function of (figure, reps, seed, overrides) and does not depend on the
number of worker processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .auditors import AuditorKind
from .baselines import InitialModel, fit_forest, fit_ols
from .boost import BoostConfig, StepRule, run
from .dataset import Dataset, _fmt
from .errors import ConfigError
from .metrics import cell_calibration_error, groupwise_bias, wmean
from .partitions import BucketSpec, GroupSpec, assign_groups
from .scores import ScoreKind, loss
from .shift import ShiftSpec, make_weights
from .simgen import SimConfig, generate, replication_seeds
from .stopping import StoppingRule

log = logging.getLogger(__name__)

DEMOGRAPHIC = GroupSpec(("x6", "x7"))
FIGURES = (1, 2, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class ExperimentSettings:
    reps: int | None = None  # None means the figure's default
    seed: int = 1
    n_test: int = 5000
    n_train: int = 2000
    n_trees: int = 50
    forest_depth: int = 8
    threads: int = 1
    sizes: tuple[int, ...] | None = None  # overrides the figure's sample-size grid

    def __post_init__(self):
        if self.reps is not None and self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


# ---------------------------------------------------------------------------
# replication harness


def replicate(fn: Callable[[int, int], list[dict]], n_reps: int, base_seed: int, threads: int = 1) -> list[dict]:
    """Run ``fn(rep, seed)`` for each replication; rows come back in rep order."""
    seeds = replication_seeds(base_seed, n_reps)
    if threads <= 1 or n_reps == 1:
        results = [fn(r, s) for r, s in enumerate(seeds)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, range(n_reps), seeds))
    return [row for rows in results for row in rows]


def summarize(rows: list[dict], keys: tuple[str, ...], value: str = "value") -> list[dict]:
    """Mean and standard error of ``value`` per distinct key tuple, in first-seen order."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(float(r[value]))
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals)
        se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        out.append(dict(zip(keys, key), mean=float(v.mean()), se=se, reps=int(v.size)))
    return out


def table_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    def cell(v):
        if isinstance(v, float):
            return _fmt(v)
        return "" if v is None else str(v)
    lines = [",".join(columns)]
    lines += [",".join(cell(r.get(c)) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared pieces


def draw(seed: int, key: int, **sizes: int) -> dict[str, Dataset]:
    """Independent samples per named split for one (replication seed, key) pair."""
    children = np.random.SeedSequence([seed, key]).spawn(len(sizes))
    seeds = [int(c.generate_state(1, np.uint64)[0]) for c in children]
    return {name: generate(SimConfig(n=n, seed=s))[0] for (name, n), s in zip(sizes.items(), seeds)}


def fit_initial(kind: str, train: Dataset, mode: str, seed: int, st: ExperimentSettings) -> InitialModel:
    cats = mode == "all"
    if kind == "lm":
        return fit_ols(train, include_categorical=cats)
    return fit_forest(train, n_trees=st.n_trees, max_depth=st.forest_depth, seed=seed, include_categorical=cats)


def boost_config(auditor: str, G: int, L: int, mode: str, stop: StoppingRule,
                 step: StepRule | None = None, alpha: float = 1e-4, max_iters: int = 2000,
                 kind: ScoreKind | None = None, seed: int = 0) -> BoostConfig:
    return BoostConfig(score=kind or ScoreKind(),
                       auditor=AuditorKind(auditor, include_categorical=mode == "all"),
                       groups=DEMOGRAPHIC if G == 4 else GroupSpec.none(), buckets=BucketSpec(L=L),
                       alpha=alpha, step=step or StepRule(), max_iters=max_iters, stopping=stop, seed=seed)


def boosted(initial: InitialModel, calib: Dataset, cfg: BoostConfig, test: Dataset | None = None):
    """Boost on ``calib`` (audited on itself); returns (model, trace)."""
    f0 = initial.predict(calib)
    kw = {} if test is None else {"holdout": test, "f0_holdout": initial.predict(test)}
    return run(calib, calib, cfg, f0, **kw)


def test_metrics(test: Dataset, f: np.ndarray) -> dict[str, float]:
    gids = assign_groups(test, DEMOGRAPHIC)
    _, mab = groupwise_bias(test.y, f, gids)
    return {"mse": wmean((test.y - f) ** 2), "group_bias": mab}


def _excess(test: Dataset, f, kind: ScoreKind | None = None) -> float:
    kind = kind or ScoreKind()
    return wmean(loss(kind, test.y, f)) - wmean(loss(kind, test.y, test.extras["truth"]))


# ---------------------------------------------------------------------------
# figure 1: initial predictors, plus the boosted linear model without categoricals


def _fig1_rep(rep: int, seed: int, st: ExperimentSettings, sizes: tuple[int, ...]) -> list[dict]:
    rows = []
    for n in sizes:
        d = draw(seed, n, train=n, calib=n, test=st.n_test)
        for mode in ("all", "cont_only"):
            for init in ("lm", "rf"):
                m = fit_initial(init, d["train"], mode, seed, st)
                f = m.predict(d["test"])
                for metric, v in test_metrics(d["test"], f).items():
                    rows.append(dict(n=n, mode=mode, init=init, metric=metric, value=v))
                if init == "lm" and mode == "cont_only":
                    cfg = boost_config("tree", 4, 1, mode, StoppingRule("cv", k_folds=3), seed=seed)
                    model, _ = boosted(m, d["calib"], cfg)
                    fb = model.predict(d["test"], f)
                    for metric, v in test_metrics(d["test"], fb).items():
                        rows.append(dict(n=n, mode=mode, init="lm+mcboost", metric=metric, value=v))
    return rows


def figure1(st: ExperimentSettings) -> tuple[list[dict], tuple[str, ...]]:
    sizes = st.sizes or (500, 2000, 8000)
    rows = replicate(partial(_fig1_rep, st=st, sizes=sizes), st.reps or 20, st.seed, st.threads)
    return summarize(rows, ("n", "mode", "init", "metric")), ("n", "mode", "init", "metric", "mean", "se", "reps")


# ---------------------------------------------------------------------------
# figure 2: holdout excess risk along the boosting path


def excess_curve(initial: InitialModel, calib: Dataset, test: Dataset, G: int, L: int, eta: float,
                 budget_max: float, auditor: str = "tree") -> np.ndarray:
    """Holdout excess risk after 0, 1, 2, ... fixed-size steps up to the budget."""
    steps = int(round(budget_max / eta))
    cfg = boost_config(auditor, G, L, "all", StoppingRule("alpha"), StepRule("fixed", eta=eta),
                       alpha=1e-12, max_iters=steps)
    _, trace = boosted(initial, calib, cfg, test)
    base = wmean(loss(ScoreKind(), test.y, test.extras["truth"]))
    curve = np.r_[trace.initial_holdout_loss, trace.column("holdout_loss")] - base
    if curve.size < steps + 1:  # stopped early: the path is flat from there on
        curve = np.r_[curve, np.full(steps + 1 - curve.size, curve[-1])]
    return curve


def _fig2_rep(rep: int, seed: int, st: ExperimentSettings, sizes, grid) -> list[dict]:
    rows = []
    for n in sizes:
        d = draw(seed, n, train=st.n_train, calib=n, test=st.n_test)
        m = fit_ols(d["train"])
        for G in (1, 4):
            for L in (1, 4):
                for eta in (0.05, 0.2):
                    curve = excess_curve(m, d["calib"], d["test"], G, L, eta, grid[-1])
                    for b in grid:
                        rows.append(dict(n_calib=n, G=G, L=L, eta=eta, budget=float(b),
                                         value=curve[int(round(b / eta))]))
    return rows


def figure2(st: ExperimentSettings):
    sizes = st.sizes or (1000, 4000)
    grid = tuple(np.round(np.arange(0.0, 20.0 + 1e-9, 0.4), 10))
    rows = replicate(partial(_fig2_rep, st=st, sizes=sizes, grid=grid), st.reps or 10, st.seed, st.threads)
    keys = ("n_calib", "G", "L", "eta", "budget")
    return summarize(rows, keys), keys + ("mean", "se", "reps")


# ---------------------------------------------------------------------------
# figure 3: excess risk after each stopping rule versus calibration size

STOP_RULES = {"budget_rho_1/4": StoppingRule("budget", rho=0.25), "budget_rho_1/6": StoppingRule("budget", rho=1 / 6),
              "cv_3": StoppingRule("cv", k_folds=3), "patience_5": StoppingRule("patience", patience=5)}


def _fig3_rep(rep: int, seed: int, st: ExperimentSettings, sizes) -> list[dict]:
    rows = []
    step = StepRule("fixed", eta=0.1)
    for n in sizes:
        d = draw(seed, n, train=st.n_train, calib=n, test=st.n_test)
        m = fit_ols(d["train"])
        calib = d["calib"]
        n_mon = n // 4
        for G in (1, 4):
            for name, rule in STOP_RULES.items():
                cfg = boost_config("tree", G, 2, "all", rule, step, alpha=1e-12, max_iters=2000, seed=seed)
                if rule.kind == "patience":
                    # patience monitors loss on a quarter of the calibration pool
                    fit_part, mon = calib.subset(np.arange(n_mon, n)), calib.subset(np.arange(n_mon))
                    model, _ = run(fit_part, fit_part, cfg, m.predict(fit_part), monitor=mon,
                                   f0_monitor=m.predict(mon))
                else:
                    model, _ = boosted(m, calib, cfg)
                f = model.predict(d["test"], m.predict(d["test"]))
                rows.append(dict(n_calib=n, G=G, L=2, rule=name, value=_excess(d["test"], f)))
    return rows


def figure3(st: ExperimentSettings):
    sizes = st.sizes or (500, 1000, 2000, 4000)
    rows = replicate(partial(_fig3_rep, st=st, sizes=sizes), st.reps or 10, st.seed, st.threads)
    keys = ("n_calib", "G", "L", "rule")
    return summarize(rows, keys), keys + ("mean", "se", "reps")


# ---------------------------------------------------------------------------
# figures 4 and 6: groupwise bias and MSE by auditor, group setting and calibration size

SETTINGS = {"G1_all": (1, "all"), "G4_all": (4, "all"), "G1_cont_only": (1, "cont_only")}
AUDITORS = ("constant", "linear", "tree")


def _auditor_rep(rep: int, seed: int, st: ExperimentSettings, sizes, metric: str) -> list[dict]:
    rows = []
    for n in sizes:
        d = draw(seed, n, train=st.n_train, calib=n, test=st.n_test)
        for setting, (G, mode) in SETTINGS.items():
            for init in ("lm", "rf"):
                m = fit_initial(init, d["train"], mode, seed, st)
                f0 = m.predict(d["test"])
                rows.append(dict(setting=setting, n_calib=n, init=init, auditor="none",
                                 value=test_metrics(d["test"], f0)[metric]))
                for aud in AUDITORS:
                    cfg = boost_config(aud, G, 2, mode, StoppingRule("cv", k_folds=3), seed=seed)
                    model, _ = boosted(m, d["calib"], cfg)
                    f = model.predict(d["test"], f0)
                    rows.append(dict(setting=setting, n_calib=n, init=init, auditor=aud,
                                     value=test_metrics(d["test"], f)[metric]))
    return rows


def _auditor_figure(st: ExperimentSettings, metric: str):
    sizes = st.sizes or (500, 1000, 2000, 4000)
    rows = replicate(partial(_auditor_rep, st=st, sizes=sizes, metric=metric), st.reps or 10, st.seed, st.threads)
    keys = ("setting", "n_calib", "init", "auditor")
    out = summarize(rows, keys)
    for r in out:
        r["metric"] = metric
    return out, keys + ("metric", "mean", "se", "reps")


def figure4(st: ExperimentSettings):
    return _auditor_figure(st, "group_bias")


def figure6(st: ExperimentSettings):
    return _auditor_figure(st, "mse")


# ---------------------------------------------------------------------------
# figure 5: per-(group, bucket) calibration error before and after boosting


def _fig5_rep(rep: int, seed: int, st: ExperimentSettings, sizes) -> list[dict]:
    rows = []
    L = 4
    for n in sizes:
        d = draw(seed, n, train=st.n_train, calib=n, test=st.n_test)
        test = d["test"]
        m = fit_initial("rf", d["train"], "all", seed, st)
        f0 = m.predict(test)
        gids = assign_groups(test, DEMOGRAPHIC)
        for G in (1, 4):
            cfg = boost_config("tree", G, L, "all", StoppingRule("cv", k_folds=3), seed=seed)
            model, _ = boosted(m, d["calib"], cfg)
            f = model.predict(test, f0)
            for stage, pred in (("before", f0), ("after", f)):
                cells = cell_calibration_error(test.y, pred, gids, BucketSpec(L=L))
                for (g, l), (err, cnt) in cells.items():
                    rows.append(dict(n_calib=n, G=G, rep=rep, stage=stage, group=g, bucket=l, n=cnt, error=err))
    return rows


def figure5(st: ExperimentSettings):
    sizes = st.sizes or (2000,)
    rows = replicate(partial(_fig5_rep, st=st, sizes=sizes), st.reps or 10, st.seed, st.threads)
    return rows, ("n_calib", "G", "rep", "stage", "group", "bucket", "n", "error")


# ---------------------------------------------------------------------------
# figure 7: bias and MSE on structural subgroups and weighted shifts

SHIFTS = ("interaction_reg", "interaction_neg", "hard_region", "curvature_tilt", "hard_mixed_tilt", "local_bump")


def _fig7_rep(rep: int, seed: int, st: ExperimentSettings, sizes) -> list[dict]:
    rows = []
    for n in sizes:
        d = draw(seed, n, train=st.n_train, calib=n, test=st.n_test)
        test = d["test"]
        weights = {s: make_weights(test, ShiftSpec(s), test) for s in SHIFTS}
        for init in ("lm", "rf"):
            m = fit_initial(init, d["train"], "all", seed, st)
            f0 = m.predict(test)
            preds = {"none": f0}
            for aud in AUDITORS:
                cfg = boost_config(aud, 1, 2, "all", StoppingRule("cv", k_folds=3), seed=seed)
                model, _ = boosted(m, d["calib"], cfg)
                preds[aud] = model.predict(test, f0)
            for aud, f in preds.items():
                r = test.y - f
                for s, w in weights.items():
                    rows.append(dict(shift=s, n_calib=n, init=init, auditor=aud, metric="bias",
                                     value=abs(wmean(r, w))))
                    rows.append(dict(shift=s, n_calib=n, init=init, auditor=aud, metric="mse",
                                     value=wmean(r * r, w)))
    return rows


def figure7(st: ExperimentSettings):
    sizes = st.sizes or (500, 1000, 2000, 4000)
    rows = replicate(partial(_fig7_rep, st=st, sizes=sizes), st.reps or 10, st.seed, st.threads)
    keys = ("shift", "n_calib", "init", "auditor", "metric")
    return summarize(rows, keys), keys + ("mean", "se", "reps")


_RUNNERS = {1: figure1, 2: figure2, 3: figure3, 4: figure4, 5: figure5, 6: figure6, 7: figure7}


def reproduce(figure: int, settings: ExperimentSettings | None = None) -> str:
    """CSV text of one figure's table."""
    if figure not in _RUNNERS:
        raise ConfigError(f"unknown figure {figure!r}; choose one of {FIGURES}")
    rows, columns = _RUNNERS[figure](settings or ExperimentSettings())
    return table_csv(rows, columns)
