"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import csv
import io
import math
import time

import numpy as np
import pytest

from mcboost.auditors import AuditorKind
from mcboost.baselines import fit_ols
from mcboost.boost import BoostConfig, audit, run, violation
from mcboost.experiments import ExperimentSettings, draw, excess_curve, reproduce
from mcboost.instances import MvpConfig, batch_gcp, grid_cells, multi_mvp
from mcboost.metrics import cell_calibration_error, evaluate, wmean
from mcboost.partitions import BucketSpec, GroupSpec, assign_groups, bucketize, snap_index
from mcboost.scores import ScoreKind, loss
from mcboost.shift import ShiftSpec, make_weights, weighted_eval
from mcboost.simgen import SimConfig, generate

from conftest import make_data, random_groups_data

SQ = ScoreKind()
GROUPS = GroupSpec(("g",))


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def _cell_mean_oracle(y, f0, cells):
    """L2 projection onto the span of disjoint cell indicators: shift each cell to its mean outcome."""
    out = f0.copy()
    for c in np.unique(cells):
        m = cells == c
        out[m] += np.mean(y[m] - f0[m])
    return out


def _static_cells(d, f0, L):
    g = d.x_cat[:, 0]
    lo, hi = float(f0.min()), float(f0.max())
    return g * L + bucketize(f0, L, lo, hi)


def test_c01_descent_invariant(report):
    start = time.perf_counter()
    worst, rng = -np.inf, np.random.default_rng(101)
    kinds = ("constant", "linear", "tree")
    for i in range(200):
        n = int(rng.integers(50, 501))
        d = random_groups_data(rng, n)
        f0 = rng.normal(size=n)
        cfg = BoostConfig(auditor=AuditorKind(kinds[i % 3]), groups=GROUPS if rng.random() < 0.5 else GroupSpec.none(),
                          buckets=BucketSpec(L=int(rng.integers(1, 5)), anchor=("dynamic", "static")[i % 2]),
                          alpha=1e-6, max_iters=40)
        _, trace = run(d, d, cfg, f0)
        path = np.r_[trace.initial_calib_loss, trace.column("calib_loss")]
        if path.size > 1:
            worst = max(worst, float(np.max(np.diff(path))))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-12 and elapsed < 60,
           f"largest per-iteration loss increase {worst:.3e} (tol 1e-12), {elapsed:.1f}s (limit 60s)")


def _projection_instance(seed, n=400):
    rng = np.random.default_rng(seed)
    d = random_groups_data(rng, n)
    f0 = rng.normal(size=n)
    return d, f0, _cell_mean_oracle(d.y, f0, d.x_cat[:, 0])


def _group_cfg(**kw):
    base = dict(auditor=AuditorKind("constant"), groups=GROUPS, buckets=BucketSpec(L=1, anchor="static"),
                alpha=1e-12, max_iters=200)
    base.update(kw)
    return BoostConfig(**base)


def test_c02_projection_oracle(report):
    errs, iters = [], []
    for seed in range(10):
        d, f0, oracle = _projection_instance(seed)
        model, trace = run(d, d, _group_cfg(), f0)
        errs.append(float(np.max(np.abs(trace.final["calib"] - oracle))))
        iters.append(len(trace))
    ok = max(errs) <= 1e-8 and max(iters) <= 200
    report(2, ok, f"max |f - oracle| {max(errs):.2e} (tol 1e-8), max iterations {max(iters)} (limit 200)")


def test_c03_geometric_decay(report):
    rhos = []
    for seed in range(10):
        d, f0, oracle = _projection_instance(seed)
        _, trace = run(d, d, _group_cfg(), f0)
        limit = float(np.mean(loss(SQ, d.y, oracle)))
        gaps = np.r_[trace.initial_calib_loss, trace.column("calib_loss")] - limit
        ratios = [gaps[b + 1] / gaps[b] for b in range(len(gaps) - 1) if gaps[b] >= 1e-12]
        rhos.append(1.0 - max(ratios))
    report(3, min(rhos) > 0.05, f"smallest measured rho {min(rhos):.3f} over 10 instances (need > 0.05)")


def test_c04_stopping_validity(report):
    rng = np.random.default_rng(404)
    fired, worst_gap = 0, -np.inf
    for i in range(50):
        n = int(rng.integers(100, 400))
        d = random_groups_data(rng, n)
        v, f0, f0v = d, rng.normal(size=n), None
        alpha = float(rng.choice([0.05, 0.02, 0.01]))
        cfg = BoostConfig(auditor=AuditorKind(("constant", "linear", "tree")[i % 3]),
                          groups=GROUPS if rng.random() < 0.5 else GroupSpec.none(),
                          buckets=BucketSpec(L=int(rng.integers(1, 4)), anchor=("dynamic", "static")[(i // 2) % 2],
                                             directional=bool(i % 5 == 0)),
                          alpha=alpha, max_iters=5000)
        _, trace = run(d, v, cfg, f0, f0v)
        if trace.terminated_by != "alpha":
            continue
        fired += 1
        fc = trace.final["calib"]
        cands = audit(d, v, fc, fc, cfg, f0, f0v)
        top = max((c.normalized for c in cands), default=0.0)
        worst_gap = max(worst_gap, top - alpha)
    report(4, fired == 50 and worst_gap <= 0.0,
           f"alpha rule fired on {fired}/50 configs; max re-audited violation minus alpha {worst_gap:.3e} (need <= 0)")


def test_c05_termination_bound(report):
    c_L = 0.5
    lines, ok = [], True
    for alpha in (0.1, 0.05, 0.02):
        for seed in range(5):
            for L in (1, 4):
                d, f0, _ = _projection_instance(100 + seed)
                oracle = _cell_mean_oracle(d.y, f0, _static_cells(d, f0, L))
                gap = float(np.mean(loss(SQ, d.y, f0)) - np.mean(loss(SQ, d.y, oracle)))
                bound = math.ceil(16 * c_L * gap / alpha ** 2)
                _, trace = run(d, d, _group_cfg(alpha=alpha, buckets=BucketSpec(L=L, anchor="static"),
                                                max_iters=bound + 1000), f0)
                ok &= trace.terminated_by == "alpha" and len(trace) <= bound
                lines.append(len(trace) / bound)
    report(5, ok, f"30 runs all stop on alpha; largest iterations/bound ratio {max(lines):.3f}")


def test_c06_projection_inactive(report):
    rng = np.random.default_rng(606)
    used, worst = 0, 0.0
    for i in range(40):
        n = 300
        d = random_groups_data(rng, n)
        y = np.clip(0.5 + 0.15 * (d.y - d.y.mean()) / d.y.std(), 0.0, 1.0)
        d = make_data(d.x_cont, d.x_cat, y, cont_names=d.cont_names, cat_names=d.cat_names, cat_levels=d.cat_levels)
        f0 = rng.uniform(0.3, 0.7, size=n)
        cfg = BoostConfig(auditor=AuditorKind(("constant", "linear", "tree")[i % 3]), groups=GROUPS,
                          buckets=BucketSpec(L=2), alpha=1e-4, max_iters=300)
        _, free = run(d, d, cfg, f0)
        if not (free.final["calib"].min() > 0.05 and free.final["calib"].max() < 0.95):
            continue
        used += 1
        _, proj = run(d, d, BoostConfig(**{**vars(cfg), "projection": (0.0, 1.0)}), f0)
        worst = max(worst, float(np.max(np.abs(proj.final["calib"] - free.final["calib"]))))
    report(6, used >= 20 and worst <= 1e-10,
           f"{used}/40 instances with interior limit; max |projected - unprojected| {worst:.2e} (tol 1e-10)")


def _table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_c07_figure1_desk_scale(report):
    start = time.perf_counter()
    rows = _table(reproduce(1, ExperimentSettings(reps=20, seed=1)))
    elapsed = time.perf_counter() - start
    get = {(int(r["n"]), r["mode"], r["init"], r["metric"]): float(r["mean"]) for r in rows}
    rf, lm = get[(8000, "all", "rf", "mse")], get[(8000, "all", "lm", "mse")]
    ratios = {n: get[(n, "cont_only", "lm", "group_bias")] / get[(n, "cont_only", "lm+mcboost", "group_bias")]
              for n in (500, 2000, 8000)}
    ok = rf < lm and min(ratios.values()) >= 1.5 and elapsed < 600
    report(7, ok, f"n=8000 MSE rf {rf:.3f} < lm {lm:.3f}; cont-only bias ratio lm / lm+mcboost "
                  f"{', '.join(f'n={n}: {v:.1f}' for n, v in ratios.items())} (need >= 1.5); {elapsed:.0f}s")


def test_c08_multimvp_coverage(report):
    rng = np.random.default_rng(808)
    n, L, alpha, tau = 5000, 10, 0.02, 0.9
    y = rng.uniform(size=n)
    d = make_data(rng.normal(size=(n, 1)), None, y)
    model, trace = multi_mvp(d, np.full(n, 0.2), MvpConfig(tau=tau, L=L, alpha=alpha, max_iters=500))
    f = trace.final["calib"]
    cells = [c for c in grid_cells(y, snap_index(f, L), np.zeros(n, np.int64), 1, L) if c.n >= 50]
    slack = [alpha + 1 / (2 * L) + 2 / math.sqrt(c.n) - abs(c.coverage - tau) for c in cells]
    report(8, bool(cells) and min(slack) >= 0,
           f"{len(cells)} cells with >= 50 rows, smallest slack {min(slack):.4f} (need >= 0), "
           f"stopped by {trace.terminated_by}")


def test_c09_batchgcp_exact(report):
    grid = np.round(np.arange(-5.0, 5.0 + 5e-5, 1e-4), 10)
    worst = -np.inf
    for seed in range(20):
        rng = np.random.default_rng(900 + seed)
        n = int(rng.integers(30, 200))
        tau = float(rng.uniform(0.1, 0.9))
        d = random_groups_data(rng, n)
        q0 = rng.normal(size=n)
        model = batch_gcp(d, q0, tau, GROUPS)
        q = model.predict(d, q0)
        kind = ScoreKind.pinball(tau)
        for g in range(4):
            m = d.x_cat[:, 0] == g
            r = d.y[m] - q0[m]
            u = r[None, :] - grid[:, None]
            oracle = np.min(np.mean(np.maximum(tau * u, (tau - 1) * u), axis=1))
            got = float(np.mean(loss(kind, d.y[m], q[m])))
            worst = max(worst, got - oracle)
    report(9, worst <= 1e-9, f"max (objective - grid oracle) {worst:.2e} over 20 instances x 4 groups (tol 1e-9)")


def test_c10_shift_transfer(report):
    n, alpha = 20000, 0.01
    train = generate(SimConfig(n=n, seed=1001))[0]
    calib = generate(SimConfig(n=n, seed=1002))[0]
    hold = generate(SimConfig(n=n, seed=1003))[0]
    init = fit_ols(train, include_categorical=False)
    groups = GroupSpec(("x6", "x7"))
    cfg = BoostConfig(auditor=AuditorKind("constant"), groups=groups, buckets=BucketSpec(L=1),
                      alpha=alpha, max_iters=1000)
    model, trace = run(calib, calib, cfg, init.predict(calib))
    f = model.predict(hold, init.predict(hold))
    gids = assign_groups(hold, groups)
    slack = []
    for g in range(4):
        w = make_weights(hold, ShiftSpec("group", group=g), group_ids=gids)
        p = float(np.mean(gids == g))
        res = abs(weighted_eval(hold.y, f, w).bias)
        slack.append(alpha / p + 3 / math.sqrt(n * p) - res)
    report(10, trace.terminated_by == "alpha" and min(slack) >= 0,
           f"4 group shifts, smallest slack {min(slack):.4f} (need >= 0)")


def test_c11_early_stopping_shape(report):
    eta, budget_max = 0.05, 60.0
    good = 0
    for rep in range(20):
        seed = 5000 + rep
        mins = []
        for n in (1000, 4000):
            d = draw(seed, n, train=2000, calib=n, test=5000)
            c = excess_curve(fit_ols(d["train"]), d["calib"], d["test"], 4, 4, eta, budget_max)
            k = int(np.argmin(c))
            mins.append((k * eta, c[0] > c[k] and c[-1] > c[k]))
        good += mins[0][1] and mins[1][1] and mins[1][0] >= mins[0][0]
    report(11, good >= 16, f"{good}/20 replications U-shaped with the n=4000 minimizer at or after n=1000's (need 16)")


def test_c12_metric_identities(report):
    rng = np.random.default_rng(1212)
    y, f = rng.normal(size=500), rng.normal(size=500)
    g = rng.integers(0, 4, 500)
    a = evaluate(y, f, g, buckets=BucketSpec(L=3), tau=0.5).to_dict()
    b = evaluate(y, f, g, weights=np.ones(500), buckets=BucketSpec(L=3), tau=0.5).to_dict()
    unit = a == b
    cell = cell_calibration_error(y, f)[(0, 0)][0] == wmean(y - f)
    s = rng.normal(size=500)
    h = rng.normal(size=500)
    base = violation(h, s)[1]
    worst = max(abs(violation(c * h, s)[1] - base) / base for c in rng.uniform(0.01, 100, 100) * rng.choice([-1, 1], 100))
    report(12, unit and cell and worst <= 1e-12,
           f"unit weights bit-exact: {unit}; L=1 |G|=1 cell error equals global bias: {cell}; "
           f"max relative change of normalized violation under h -> c h: {worst:.1e}")
