"""Stopping rules: alpha threshold, step budget, cross-validated budget, patience."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError

if TYPE_CHECKING:
    from .boost import BoostConfig, BoostTrace
    from .dataset import Dataset

RULES = ("alpha", "budget", "cv", "patience")


@dataclass(frozen=True)
class StoppingRule:
    kind: str = "alpha"
    rho: float | None = None
    total: float | None = None  # absolute budget; overrides rho
    k_folds: int = 3
    grid: tuple[float, ...] | None = None  # None means Auto
    patience: int = 5
    min_delta: float = 0.0

    def __post_init__(self):
        if self.kind not in RULES:
            raise ConfigError(f"unknown stopping rule {self.kind!r}; expected one of {RULES}")
        if self.kind == "budget":
            if self.total is None and (self.rho is None or not 0.0 < self.rho < 1.0):
                raise ConfigError("budget rule needs rho in (0, 1) or an absolute total")
            if self.total is not None and not self.total > 0:
                raise ConfigError("budget total must be positive")
        if self.kind == "cv" and self.k_folds < 2:
            raise ConfigError("cross-validation needs k_folds >= 2")
        if self.kind == "patience" and (self.patience < 1 or self.min_delta < 0):
            raise ConfigError("patience needs p >= 1 and min_delta >= 0")

    @classmethod
    def parse(cls, text: str) -> "StoppingRule":
        """``alpha``, ``budget:0.25``, ``budget:total=5``, ``cv:3``, ``patience:5``."""
        name, _, arg = text.partition(":")
        try:
            if name == "alpha":
                return cls("alpha")
            if name == "budget":
                if arg.startswith("total="):
                    return cls("budget", total=float(arg[6:]))
                return cls("budget", rho=_fraction(arg))
            if name == "cv":
                return cls("cv", k_folds=int(arg or 3))
            if name == "patience":
                return cls("patience", patience=int(arg or 5))
        except ValueError:
            pass
        raise ConfigError(f"bad --stop value {text!r}; use alpha|budget:RHO|cv:K|patience:P")

    def threshold(self, n_calib: int) -> float:
        return self.total if self.total is not None else float(n_calib) ** self.rho

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "budget":
            d.update(rho=self.rho, total=self.total)
        elif self.kind == "cv":
            d.update(k_folds=self.k_folds, grid=None if self.grid is None else list(self.grid))
        elif self.kind == "patience":
            d.update(patience=self.patience, min_delta=self.min_delta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StoppingRule":
        grid = d.get("grid")
        return cls(d.get("kind", "alpha"), d.get("rho"), d.get("total"), int(d.get("k_folds", 3)),
                   None if grid is None else tuple(grid), int(d.get("patience", 5)),
                   float(d.get("min_delta", 0.0)))


def _fraction(text: str) -> float:
    if "/" in text:
        a, b = text.split("/")
        return float(a) / float(b)
    return float(text)


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str = ""
    rollback_to: int | None = None  # number of updates to keep


def patience_decision(valid_losses: Sequence[float], p: int, min_delta: float = 0.0,
                      initial: float | None = None) -> StopDecision:
    """Stop once validation loss has not improved by more than min_delta for p iterations.

    ``valid_losses[i]`` is the loss after update i+1; ``initial`` is the loss of
    the starting predictor, if it should compete for the best iterate.
    """
    losses = list(valid_losses)
    if initial is not None:
        losses = [initial] + losses
        offset = 0
    else:
        offset = 1
    if not losses:
        return StopDecision(False)
    best, best_i, stale = losses[0], 0, 0
    for i, v in enumerate(losses[1:], start=1):
        if v < best - min_delta:
            best, best_i, stale = v, i, 0
        else:
            stale += 1
        if stale >= p:
            return StopDecision(True, "patience", best_i + offset)
    return StopDecision(False)


def should_stop(rule: StoppingRule, trace: "BoostTrace", n_calib: int) -> StopDecision:
    if rule.kind == "budget":
        if trace.records and trace.records[-1].cum_budget >= rule.threshold(n_calib):
            return StopDecision(True, "budget")
        return StopDecision(False)
    if rule.kind == "patience":
        losses = [r.monitor_loss if r.monitor_loss is not None else r.valid_loss for r in trace.records]
        return patience_decision(losses, rule.patience, rule.min_delta, trace.initial_monitor_loss)
    # alpha defers to the loop's own check; cv is resolved before the run
    return StopDecision(False)


def auto_grid(n: int, size: int = 12) -> tuple[float, ...]:
    """Log-spaced budgets from 0.1 to 2 n^(1/4)."""
    hi = 2.0 * n ** 0.25
    if hi <= 0.1:
        return (0.1,)
    return tuple(float(v) for v in np.geomspace(0.1, hi, size))


def loss_at_budgets(trace: "BoostTrace", grid: Sequence[float], which: str = "holdout") -> np.ndarray:
    """Loss of the first iterate whose cumulative budget reaches each grid value.

    Grid values beyond the last iterate's budget take the final iterate.
    """
    budgets = np.array([r.cum_budget for r in trace.records])
    losses = np.array([getattr(r, f"{which}_loss") for r in trace.records], dtype=float)
    init = getattr(trace, f"initial_{which}_loss")
    out = np.empty(len(grid))
    for j, g in enumerate(grid):
        reached = np.nonzero(budgets >= g)[0]
        if g <= 0 or not len(budgets):
            out[j] = init if g <= 0 or not len(budgets) else losses[-1]
        elif reached.size:
            out[j] = losses[reached[0]]
        else:
            out[j] = losses[-1]
    return out


def fold_ids(n: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    ids = np.arange(n) % k
    return ids[rng.permutation(n)]


def cv_select(data: "Dataset", f0: np.ndarray, config: "BoostConfig", k: int = 3,
              grid: Sequence[float] | None = None, seed: int = 0) -> tuple[float, np.ndarray]:
    """Pick the step budget minimizing mean held-out-fold loss.

    Each fold run boosts on the other k-1 folds (used as both calibration and
    validation data) up to the largest grid budget. Ties go to the smaller
    budget. Returns (selected budget, mean held-fold loss per grid value).
    """
    from .boost import run
    from .dataset import canonical_order

    if k < 2:
        raise ConfigError("cross-validation needs k >= 2")
    grid = tuple(sorted(auto_grid(data.n) if grid is None else grid))
    if not grid:
        raise ConfigError("cross-validation budget grid is empty")
    if len(grid) == 1:
        return grid[0], np.zeros(1)
    # folds assigned in content order so results do not depend on row order
    order = canonical_order(data)
    ids = np.empty(data.n, dtype=np.int64)
    ids[order] = fold_ids(data.n, k, seed)
    inner = replace(config, stopping=StoppingRule("budget", total=max(grid)))
    curves = []
    for fold in range(k):
        tr = np.nonzero(ids != fold)[0]
        te = np.nonzero(ids == fold)[0]
        if tr.size == 0 or te.size == 0:
            raise ConfigError(f"fold {fold} is empty; use fewer folds or more data")
        train = data.subset(tr)
        _, trace = run(train, train, inner, f0[tr], f0[tr], holdout=data.subset(te), f0_holdout=f0[te])
        curves.append(loss_at_budgets(trace, grid, "holdout"))
    mean = np.mean(curves, axis=0)
    best = int(np.argmin(mean))  # first minimum is the smallest budget
    return grid[best], mean

