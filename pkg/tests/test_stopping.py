import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcboost.auditors import AuditorKind
from mcboost.baselines import fit_ols
from mcboost.boost import BoostConfig, BoostRecord, BoostTrace, StepRule
from mcboost.errors import ConfigError
from mcboost.partitions import BucketSpec, GroupSpec
from mcboost.simgen import SimConfig, generate
from mcboost.stopping import StoppingRule, auto_grid, cv_select, patience_decision, should_stop


def _trace(budgets, valid=None):
    t = BoostTrace(initial_valid_loss=1.0, initial_monitor_loss=1.0)
    valid = valid or [1.0] * len(budgets)
    for i, (b, v) in enumerate(zip(budgets, valid)):
        t.records.append(BoostRecord(i + 1, 0, 0, 0.0, 0.0, 0.1, b, 0.0, v))
    return t


def test_budget_example():
    rule = StoppingRule.parse("budget:1/4")
    assert rule.threshold(4096) == pytest.approx(8.0)
    assert should_stop(rule, _trace([8.1]), 4096).stop
    assert not should_stop(rule, _trace([7.9]), 4096).stop


def test_patience_example():
    d = patience_decision([1.0, 0.9, 0.91, 0.92, 0.93], 3)
    assert d.stop and d.rollback_to == 2
    assert not patience_decision([1.0, 0.9, 0.91, 0.92], 3).stop


def test_alpha_rule_never_fires_here():
    assert not should_stop(StoppingRule("alpha"), _trace([100.0]), 10).stop


def test_parse_forms_and_errors():
    assert StoppingRule.parse("budget:0.25").rho == 0.25
    assert StoppingRule.parse("budget:total=5").total == 5.0
    assert StoppingRule.parse("cv:4").k_folds == 4
    assert StoppingRule.parse("patience:7").patience == 7
    for bad in ("budget:2", "cv:1", "sometimes", "patience:x"):
        with pytest.raises(ConfigError):
            StoppingRule.parse(bad)
    r = StoppingRule("cv", k_folds=5, grid=(1.0, 2.0))
    assert StoppingRule.from_dict(r.to_dict()) == r


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=40), st.floats(0.05, 0.45), st.floats(0.0, 0.5),
       st.integers(10, 5000))
def test_budget_monotone_in_rho(steps, rho, extra, n):
    budgets = np.cumsum(steps).tolist()
    lo, hi = StoppingRule("budget", rho=rho), StoppingRule("budget", rho=min(rho + extra, 0.99))

    def first_stop(rule):
        for k in range(1, len(budgets) + 1):
            if should_stop(rule, _trace(budgets[:k]), n).stop:
                return k
        return len(budgets) + 1
    assert first_stop(hi) >= first_stop(lo)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=30), st.integers(1, 5))
def test_patience_rolls_back_to_best(losses, p):
    d = patience_decision(losses, p, initial=1.0)
    if d.stop:
        seq = [1.0] + losses
        executed = seq[:len(seq)]
        assert seq[d.rollback_to] == min(executed[:d.rollback_to + p + 1])


def test_auto_grid():
    g = auto_grid(2000)
    assert len(g) == 12 and g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(2 * 2000 ** 0.25)


def _cv_setup(seed):
    train = generate(SimConfig(n=1000, seed=10_000 + seed))[0]
    data = generate(SimConfig(n=2000, seed=seed))[0]
    f0 = fit_ols(train, include_categorical=False).predict(data)
    cfg = BoostConfig(auditor=AuditorKind("tree", include_categorical=False), groups=GroupSpec(("x6", "x7")),
                      buckets=BucketSpec(L=2), alpha=1e-6, step=StepRule("fixed", eta=0.1), max_iters=1000)
    return data, f0, cfg


def test_cv_single_grid_point():
    data, f0, cfg = _cv_setup(0)
    assert cv_select(data, f0, cfg, 3, grid=(1.0,))[0] == 1.0


def test_cv_picks_largest_budget_when_loss_keeps_falling():
    # with a tiny grid the held-out loss is still decreasing at the last point
    data, f0, cfg = _cv_setup(1)
    budget, curve = cv_select(data, f0, cfg, 3, grid=(0.1, 0.2, 0.3, 0.4))
    assert np.all(np.diff(curve) < 0)
    assert budget == 0.4


def test_cv_deterministic_under_row_permutation():
    data, f0, cfg = _cv_setup(2)
    grid = (0.5, 1.0, 2.0)
    perm = np.random.default_rng(0).permutation(data.n)
    a = cv_select(data, f0, cfg, 3, grid, seed=4)
    b = cv_select(data.subset(perm), f0[perm], cfg, 3, grid, seed=4)
    assert a[0] == b[0]
    assert np.allclose(a[1], b[1], rtol=0, atol=1e-12)


def test_cv_selects_interior_budget():
    # package defaults (one group, L=1, adaptive step, depth-3 tree) on an OLS start
    interior = 0
    for seed in range(10):
        train = generate(SimConfig(n=1000, seed=10_000 + seed))[0]
        data = generate(SimConfig(n=2000, seed=seed))[0]
        grid = auto_grid(data.n)
        budget, _ = cv_select(data, fit_ols(train).predict(data), BoostConfig(alpha=1e-6, max_iters=1000),
                              3, grid, seed=seed)
        interior += grid[0] < budget < grid[-1]
    assert interior >= 8
