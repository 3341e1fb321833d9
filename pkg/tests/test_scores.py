import pytest
from hypothesis import given, settings, strategies as st

from mcboost.errors import ConfigError, InvalidLabelError
from mcboost.scores import ScoreKind, default_smoothness, loss, score

SQ = ScoreKind.squared()
PB9 = ScoreKind.pinball(0.9)


def test_loss_examples():
    assert loss(SQ, 1.0, 1.0) == 0.0
    assert loss(PB9, 1.0, 0.0) == pytest.approx(0.9, abs=1e-15)
    assert loss(ScoreKind.pinball(0.5), 0.0, 2.0) == pytest.approx(1.0, abs=1e-15)


def test_score_examples():
    assert score(SQ, 2.0, 2.0) == 0.0
    assert score(PB9, 1.0, 0.0) == pytest.approx(-0.9)
    assert score(PB9, 0.0, 1.0) == pytest.approx(0.1)


def test_smoothness_defaults():
    assert default_smoothness(SQ) == 0.5
    assert default_smoothness(PB9) == 0.5
    assert default_smoothness(SQ, 1.0) == 1.0
    with pytest.raises(ConfigError):
        default_smoothness(SQ, 0.0)


def test_invalid_labels():
    with pytest.raises(InvalidLabelError):
        loss(ScoreKind("logistic"), [0.0, 2.0], [0.1, 0.2])
    with pytest.raises(InvalidLabelError):
        score(ScoreKind("exponential", label_coding="pm1"), [0.0], [0.1])


def test_bad_kinds():
    with pytest.raises(ConfigError):
        ScoreKind("hinge")
    with pytest.raises(ConfigError):
        ScoreKind.pinball(1.0)
    with pytest.raises(ConfigError):
        ScoreKind.parse("pinball:x")


def test_parse_roundtrip():
    for text in ("squared", "pinball:0.9", "logistic", "exponential:pm1"):
        k = ScoreKind.parse(text)
        assert ScoreKind.from_dict(k.to_dict()) == k


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(["squared", "logistic01", "logisticpm1", "exponential01"]),
       st.booleans(), st.floats(-3, 3))
def test_score_is_derivative_of_loss(name, label, u):
    kind = {"squared": SQ, "logistic01": ScoreKind("logistic"),
            "logisticpm1": ScoreKind("logistic", label_coding="pm1"),
            "exponential01": ScoreKind("exponential")}[name]
    if name == "squared":
        y = 1.7 if label else -0.4
    elif kind.label_coding == "pm1":
        y = 1.0 if label else -1.0
    else:
        y = float(label)
    h = 1e-6
    num = (loss(kind, y, u + h) - loss(kind, y, u - h)) / (2 * h)
    assert score(kind, y, u) == pytest.approx(num, rel=1e-5, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-5, 5), st.floats(-5, 5))
def test_pinball_subgradient_and_nonnegative(tau, y, u):
    kind = ScoreKind.pinball(tau)
    assert loss(kind, y, u) >= 0
    # convexity: L(v) >= L(u) + s (v - u) for any v
    for v in (u - 1.0, u + 0.5, y):
        assert loss(kind, y, v) >= loss(kind, y, u) + score(kind, y, u) * (v - u) - 1e-12
