"""Losses and score functions.

A score is the (sub)gradient of the loss in its prediction argument. All
functions are vectorized over numpy arrays and accept scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidLabelError

KINDS = ("squared", "pinball", "logistic", "exponential")
CODINGS = ("01", "pm1")

DEFAULT_SMOOTHNESS = 0.5


@dataclass(frozen=True)
class ScoreKind:
    kind: str = "squared"
    tau: float | None = None
    label_coding: str = "01"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown score kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "pinball":
            if self.tau is None or not (0.0 < self.tau < 1.0):
                raise ConfigError(f"pinball tau must lie strictly inside (0, 1), got {self.tau}")
        if self.kind in ("logistic", "exponential") and self.label_coding not in CODINGS:
            raise ConfigError(f"label_coding must be one of {CODINGS}")

    @classmethod
    def squared(cls) -> "ScoreKind":
        return cls("squared")

    @classmethod
    def pinball(cls, tau: float) -> "ScoreKind":
        return cls("pinball", tau=float(tau))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "pinball":
            d["tau"] = self.tau
        if self.kind in ("logistic", "exponential"):
            d["label_coding"] = self.label_coding
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreKind":
        return cls(d["kind"], tau=d.get("tau"), label_coding=d.get("label_coding", "01"))

    @classmethod
    def parse(cls, text: str) -> "ScoreKind":
        """Parse CLI shorthand: ``squared``, ``pinball:0.9``, ``logistic:pm1``."""
        name, _, arg = text.partition(":")
        if name == "pinball":
            try:
                return cls.pinball(float(arg))
            except ValueError:
                raise ConfigError(f"pinball needs a level, e.g. pinball:0.9 (got {text!r})")
        if name in ("logistic", "exponential"):
            return cls(name, label_coding=arg or "01")
        return cls(name)


def _signed_labels(kind: ScoreKind, y: np.ndarray) -> np.ndarray:
    allowed = (0.0, 1.0) if kind.label_coding == "01" else (-1.0, 1.0)
    if not np.all((y == allowed[0]) | (y == allowed[1])):
        raise InvalidLabelError(
            f"{kind.kind} loss with coding {kind.label_coding} expects labels in {allowed}"
        )
    return 2.0 * y - 1.0 if kind.label_coding == "01" else y


def loss(kind: ScoreKind, y, u):
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if kind.kind == "squared":
        return 0.5 * (y - u) ** 2
    if kind.kind == "pinball":
        return (y - u) * (kind.tau - (y <= u))
    t = _signed_labels(kind, y)
    if kind.kind == "logistic":
        return np.logaddexp(0.0, -u * t)
    return np.exp(-u * t)


def score(kind: ScoreKind, y, u):
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if kind.kind == "squared":
        return u - y
    if kind.kind == "pinball":
        # representative subgradient at ties: 1{y <= u} - tau
        return (y <= u).astype(float) - kind.tau
    t = _signed_labels(kind, y)
    if kind.kind == "logistic":
        # -t / (1 + exp(u t)), written via expit for overflow safety
        return -t * expit(-u * t)
    return -t * np.exp(-u * t)


def default_smoothness(kind: ScoreKind, override: float | None = None) -> float:
    """Smoothness constant c_L used to damp the adaptive step.

    Squared loss has c_L = 1/2 exactly; the other kinds use the same value
    as a working default.
    """
    if override is not None:
        if not override > 0:
            raise ConfigError(f"smoothness constant must be positive, got {override}")
        return float(override)
    return DEFAULT_SMOOTHNESS
