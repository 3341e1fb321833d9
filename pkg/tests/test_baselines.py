import json

import numpy as np
import pytest

from mcboost.auditors import AuditorKind, fit_tree, linear_design
from mcboost.baselines import (fit_forest, fit_ols, fit_quantile_forest, lower_quantile, model_from_dict)
from mcboost.partitions import GroupSpec, assign_groups
from mcboost.simgen import SimConfig, generate

from conftest import make_data


def test_ols_noiseless_line():
    x = np.linspace(-2, 3, 20)
    m = fit_ols(make_data(x, None, 2 * x + 1, cont_names=("x1",)))
    assert m.intercept == pytest.approx(1.0, abs=1e-10)
    assert m.coef[0] == pytest.approx(2.0, abs=1e-10)


def test_ols_constant_outcome():
    rng = np.random.default_rng(0)
    m = fit_ols(make_data(rng.normal(size=(30, 2)), None, np.full(30, 3.5)))
    assert m.intercept == pytest.approx(3.5, abs=1e-10)
    assert np.allclose(m.coef, 0.0, atol=1e-10)


def test_ols_orthogonality(sim2000):
    m = fit_ols(sim2000)
    r = sim2000.y - m.predict(sim2000)
    X, _ = linear_design(sim2000, True)
    assert abs(r.mean()) <= 1e-8
    assert np.max(np.abs(X.T @ r)) / sim2000.n <= 1e-8


def test_ols_zero_bias_on_marginal_groups(sim2000):
    # main-effect indicators are in the design, so each marginal group has zero mean residual
    m = fit_ols(sim2000)
    r = sim2000.y - m.predict(sim2000)
    for col in ("x6", "x7"):
        g = assign_groups(sim2000, GroupSpec((col,)))
        assert max(abs(r[g == k].mean()) for k in np.unique(g)) <= 1e-8


def test_ols_singular_design_falls_back():
    x = np.arange(10.0)
    m = fit_ols(make_data(np.column_stack([x, 2 * x]), None, x + 1))
    assert m.ridge_fallback
    assert np.allclose(m.predict(make_data(np.column_stack([x, 2 * x]), None, x)), x + 1, atol=1e-4)


def test_forest_constant_outcome():
    rng = np.random.default_rng(1)
    d = make_data(rng.normal(size=(60, 2)), None, np.full(60, -1.25))
    f = fit_forest(d, n_trees=5, seed=1)
    assert np.all(f.predict(d) == -1.25)


def test_degenerate_forest_is_cart():
    rng = np.random.default_rng(2)
    d = make_data(rng.normal(size=(80, 3)), None, rng.normal(size=80))
    f = fit_forest(d, n_trees=1, max_depth=30, min_leaf=1, mtry=3, bootstrap=False, seed=4)
    t = fit_tree(d, d.y, kind=AuditorKind("tree", max_depth=30, min_leaf=1))
    assert np.array_equal(f.predict(d), t.evaluate(d))


def test_forest_determinism_and_roundtrip(sim2000):
    small = sim2000.subset(np.arange(300))
    a = fit_forest(small, n_trees=8, seed=9)
    b = fit_forest(small, n_trees=8, seed=9)
    assert np.array_equal(a.predict(small), b.predict(small))
    c = model_from_dict(json.loads(json.dumps(a.to_dict())))
    assert np.array_equal(c.predict(small), a.predict(small))
    m = fit_ols(small)
    assert np.array_equal(model_from_dict(json.loads(json.dumps(m.to_dict()))).predict(small), m.predict(small))


def test_forest_oob_beats_variance():
    d = generate(SimConfig(n=2000, seed=21))[0]
    f = fit_forest(d, n_trees=30, seed=3)
    oob, count = f.oob_predict(d)
    ok = count > 0
    assert np.mean((d.y[ok] - oob[ok]) ** 2) <= np.var(d.y)


def test_lower_quantile_rule():
    assert lower_quantile([1, 2, 3, 4], 0.5) == 2
    assert lower_quantile([4, 1, 3, 2], 1.0) == 4
    assert lower_quantile([7.0], 0.1) == 7.0


def test_quantile_forest_examples():
    one = make_data([[0.3]], None, [2.5])
    qf = fit_quantile_forest(one, 0.5, n_trees=3, min_leaf=1, seed=0)
    for tau in (0.1, 0.5, 1.0):
        assert qf.predict(one, tau)[0] == 2.5
    rng = np.random.default_rng(5)
    d = make_data(rng.normal(size=(50, 1)), None, rng.normal(size=50))
    qf = fit_quantile_forest(d, 1.0, n_trees=1, max_depth=1, min_leaf=50, bootstrap=False)
    assert np.all(qf.predict(d) == d.y.max())
    rt = model_from_dict(json.loads(json.dumps(qf.to_dict())))
    assert np.array_equal(rt.predict(d), qf.predict(d))
