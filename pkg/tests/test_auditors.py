import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcboost.auditors import (AuditorKind, ConstantDirection, LinearDirection, direction_from_dict, evaluate,
                              fit_constant, fit_linear, fit_tree)
from mcboost.errors import DataError, EmptyCellError

from conftest import make_data


def _x(vals):
    return make_data(np.asarray(vals, float)[:, None], None, np.zeros(len(vals)), cont_names=("x1",))


def test_constant_examples():
    assert fit_constant([1.0, 3.0]).value == 2.0
    assert fit_constant([0.0, 0.0, 0.0]).value == 0.0
    with pytest.raises(EmptyCellError):
        fit_constant([1.0, 2.0], np.array([False, False]))


def test_linear_interpolation():
    d = _x([0.0, 1.0])
    lin = fit_linear(d, [0.0, 1.0], lam=0.0)
    assert lin.intercept == pytest.approx(0.0, abs=1e-12)
    assert lin.coef[0] == pytest.approx(1.0, abs=1e-12)


def test_linear_constant_scores():
    d = _x([0.3, -1.0, 2.0, 5.0])
    lin = fit_linear(d, [1.5] * 4, lam=0.0)
    assert lin.intercept == pytest.approx(1.5, abs=1e-12)
    assert lin.coef[0] == pytest.approx(0.0, abs=1e-12)


def test_linear_normal_equations_oracle():
    # [[n, sum x], [sum x, sum x^2]] [a, b] = [sum s, sum x s] for x=(0,1,2), s=(1,0,1)
    x, s = np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.0, 1.0])
    A = np.array([[3, x.sum()], [x.sum(), (x * x).sum()]])
    a_or, b_or = np.linalg.solve(A, [s.sum(), (x * s).sum()])
    lin = fit_linear(_x(x), s, lam=0.0)
    assert lin.intercept == pytest.approx(a_or, abs=1e-12) == pytest.approx(2 / 3)
    assert lin.coef[0] == pytest.approx(b_or, abs=1e-12) == pytest.approx(0.0, abs=1e-12)


def test_linear_heavy_ridge_shrinks_to_mean():
    rng = np.random.default_rng(1)
    d = make_data(rng.normal(size=(40, 3)), None, np.zeros(40))
    s = rng.normal(size=40)
    lin = fit_linear(d, s, lam=1e12)
    assert np.max(np.abs(lin.coef)) < 1e-6
    assert lin.intercept == pytest.approx(s.mean(), abs=1e-6)


def test_tree_perfect_separator():
    t = fit_tree(_x([0, 0, 1, 1]), [0, 0, 1, 1], kind=AuditorKind("tree", max_depth=1, min_leaf=1))
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    assert t.value[t.left[0]] == 0.0 and t.value[t.right[0]] == 1.0


def test_tree_constant_scores_single_leaf():
    t = fit_tree(_x([1, 2, 3, 4, 5]), [2.5] * 5, kind=AuditorKind("tree", max_depth=3, min_leaf=1))
    assert t.n_leaves == 1 and t.value[0] == 2.5


def _sse_split_oracle(x, s, min_leaf):
    """Exhaustive enumeration of midpoint thresholds: (threshold, sse) with the smallest sse."""
    best = (None, float(((s - s.mean()) ** 2).sum()))
    xs = np.unique(x)
    for a, b in zip(xs[:-1], xs[1:]):
        t = (a + b) / 2
        l, r = s[x <= t], s[x > t]
        if len(l) < min_leaf or len(r) < min_leaf:
            continue
        sse = float(((l - l.mean()) ** 2).sum() + ((r - r.mean()) ** 2).sum())
        if sse < best[1] - 1e-12:
            best = (t, sse)
    return best


def test_tree_exhaustive_oracle_example():
    x, s = np.array([1.0, 2, 3, 4]), np.array([5.0, 5, 0, 0])
    t_or, _ = _sse_split_oracle(x, s, 1)
    t = fit_tree(_x(x), s, kind=AuditorKind("tree", max_depth=2, min_leaf=1))
    assert t.threshold[0] == t_or == 2.5
    assert t.n_leaves == 2
    assert sorted(t.value[t.feature < 0].tolist()) == [0.0, 5.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=4, max_size=25), st.data())
def test_tree_root_split_matches_oracle(xs, data):
    x = np.asarray(xs, float)
    s = np.asarray(data.draw(st.lists(st.integers(-3, 3), min_size=len(xs), max_size=len(xs))), float)
    t_or, sse_or = _sse_split_oracle(x, s, 2)
    t = fit_tree(_x(x), s, kind=AuditorKind("tree", max_depth=1, min_leaf=2))
    if t_or is None:
        assert t.n_leaves == 1
    else:
        pred = t.evaluate(_x(x))
        assert float(((s - pred) ** 2).sum()) == pytest.approx(sse_or, abs=1e-9)


def test_tree_depth_monotone_error():
    rng = np.random.default_rng(3)
    d = make_data(rng.normal(size=(300, 3)), None, np.zeros(300))
    s = np.sin(2 * d.x_cont[:, 0]) + rng.normal(scale=0.3, size=300)
    errs = []
    for depth in range(1, 6):
        t = fit_tree(d, s, kind=AuditorKind("tree", max_depth=depth, min_leaf=5))
        errs.append(float(((s - t.evaluate(d)) ** 2).sum()))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_constant_equals_single_leaf_tree():
    rng = np.random.default_rng(4)
    d = make_data(rng.normal(size=(50, 2)), None, np.zeros(50))
    s = rng.normal(size=50)
    mask = rng.random(50) < 0.5
    c = fit_constant(s, mask)
    t = fit_tree(d, s, mask, AuditorKind("tree", max_depth=1, min_leaf=50))
    assert t.n_leaves == 1 and t.value[0] == pytest.approx(c.value, abs=1e-12)


def test_tree_determinism_and_roundtrip():
    rng = np.random.default_rng(5)
    d = make_data(rng.normal(size=(200, 2)), rng.integers(0, 3, size=(200, 1)), np.zeros(200))
    s = rng.normal(size=200)
    a = fit_tree(d, s, kind=AuditorKind("tree", max_depth=4))
    b = fit_tree(d, s, kind=AuditorKind("tree", max_depth=4))
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(direction_from_dict(a.to_dict()).evaluate(d), a.evaluate(d))


def test_evaluate_examples():
    d = _x([0.0, 1.0, 2.0])
    assert evaluate(ConstantDirection(2.0), d, [True, False, True]).tolist() == [2.0, 0.0, 2.0]
    lin = LinearDirection(1.0, np.array([1.0]), ["x1"])
    assert lin.evaluate(_x([0.0, 2.0])).tolist() == [1.0, 3.0]
    other = make_data(np.zeros((2, 1)), None, np.zeros(2), cont_names=("x9",))
    with pytest.raises(DataError):
        lin.evaluate(other)
