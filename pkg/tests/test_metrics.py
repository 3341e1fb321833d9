import json

import numpy as np
import pytest

from mcboost.metrics import (cell_calibration_error, cell_family, coverage, evaluate, excess_convex_risk,
                             groupwise_bias, groupwise_mse, sup_violation)
from mcboost.errors import DataError
from mcboost.partitions import BucketSpec
from mcboost.scores import ScoreKind
from mcboost.simgen import SimConfig, generate, true_quantile_of

SQ = ScoreKind()


def test_bias_examples():
    y = np.array([1.0, 2.0, 3.0])
    per, mab = groupwise_bias(y, y)
    assert per == {0: 0.0} and mab == 0.0
    assert groupwise_bias([1.0, -1.0], [0.0, 0.0])[1] == 0.0
    assert groupwise_bias([1.0, -1.0], [0.0, 0.0], [0, 1])[1] == 1.0


def test_size_weighted_flag():
    per, mab = groupwise_bias([1.0, 1.0, 1.0, -3.0], np.zeros(4), [0, 0, 0, 1], size_weighted=True)
    assert mab == pytest.approx((3 * 1 + 1 * 3) / 4)


def test_cell_error_examples():
    rng = np.random.default_rng(0)
    f = rng.normal(size=200)
    g = rng.integers(0, 2, 200)
    assert all(e == 0.0 for e, _ in cell_calibration_error(f, f, g, BucketSpec(L=3)).values())
    errs = cell_calibration_error(f + 0.7, f, g, BucketSpec(L=3))
    assert all(e == pytest.approx(0.7) for e, _ in errs.values())
    y = f + rng.normal(size=200)
    assert cell_calibration_error(y, f)[(0, 0)][0] == np.sum(y - f) / 200


def test_coverage_examples():
    assert coverage([0.0, 1.0], [5.0, 5.0], tau=0.9)[0][0] == 1.0
    assert coverage([9.0, 8.0], [5.0, 5.0], tau=0.9)[0][0] == 0.0
    assert coverage([5.0], [5.0], tau=0.9)[0][0] == 1.0


def test_excess_risk_examples():
    rng = np.random.default_rng(1)
    fs = rng.normal(size=50)
    assert excess_convex_risk(fs, fs, fs, SQ) == 0.0
    assert excess_convex_risk(fs, fs + 0.3, fs, SQ) == pytest.approx(0.045, abs=1e-15)


def test_pinball_excess_nonnegative_monte_carlo():
    d = generate(SimConfig(n=100_000, seed=2))[0]
    kind = ScoreKind.pinball(0.9)
    q = true_quantile_of(d, 0.9)
    from mcboost.scores import loss
    for c in (0.1, -0.1, 0.3):
        diff = loss(kind, d.y, q + c) - loss(kind, d.y, q)
        se = diff.std(ddof=1) / np.sqrt(d.n)
        assert excess_convex_risk(d.y, q + c, q, kind) >= -3 * se


def test_sup_violation_examples():
    y = np.array([1.0, -1.0, 2.0, -2.0])
    assert sup_violation(y, np.zeros(4), SQ, [np.ones(4)]) == 0.0
    assert sup_violation(y, np.zeros(4), SQ, []) == 0.0
    rng = np.random.default_rng(3)
    y, f = rng.normal(size=100), rng.normal(size=100)
    m = rng.random(100) < 0.3
    h = m.astype(float)
    mean_res, p = np.mean((f - y)[m]), m.mean()
    assert sup_violation(y, f, SQ, [h]) == pytest.approx(abs(mean_res) * np.sqrt(p), rel=1e-12)


def test_cell_family_covers_nonempty_cells():
    fam = cell_family([0, 0, 1], [0, 1, 1])
    assert len(fam) == 3 and np.array_equal(sum(fam), np.ones(3))


def test_weights_validation():
    with pytest.raises(DataError):
        groupwise_mse([1.0, 2.0], [0.0, 0.0], weights=[0.0, 0.0])
    with pytest.raises(DataError):
        groupwise_mse([1.0, 2.0], [0.0, 0.0], weights=[1.0, -1.0])
    with pytest.raises(DataError):
        evaluate([], [])


def test_report_serialization(tmp_path):
    rng = np.random.default_rng(4)
    y, f = rng.normal(size=40), rng.normal(size=40)
    rep = evaluate(y, f, rng.integers(0, 2, 40), SQ, None, BucketSpec(L=2), f_star=f, tau=0.5)
    d = json.loads(rep.to_json())
    assert set(d) == {"global", "per_group", "per_cell"}
    rep.save(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "scope,group,bucket,metric,value" and len(lines) == len(rep.rows()) + 1
