"""Quantile calibration specializations: one-shot group shifts and grid-snapped MultiMVP."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .auditors import ConstantDirection
from .baselines import InitialModel, lower_quantile
from .boost import BoostRecord, BoostTrace, CalibratedModel, Update, apply_update
from .dataset import Dataset
from .errors import ConfigError, DataError
from .partitions import BucketSpec, CellIndex, GroupSpec, assign_groups, snap_index, snap_to_grid
from .scores import ScoreKind, loss


def batch_gcp(data: Dataset, initial_quantiles, tau: float, groups: GroupSpec,
              initial: InitialModel | None = None) -> CalibratedModel:
    """Shift each group by the lower tau-quantile of its residuals y - q0.

    One update per nonempty group with h = beta_G on the group and eta = -1,
    so predictions become q0 + beta_G. Empty groups are left untouched.
    """
    kind = ScoreKind.pinball(tau)
    q0 = np.asarray(initial_quantiles, dtype=float)
    if q0.shape != (data.n,):
        raise DataError(f"expected {data.n} initial quantiles, got {q0.shape}")
    sizes = groups.sizes(data)
    gids = assign_groups(data, groups, sizes)
    resid = data.y - q0
    model = CalibratedModel(kind, groups, sizes, BucketSpec(L=1, anchor="static"), "local",
                            initial=initial, terminated_by="one_shot")
    shifts = {}
    for g in range(groups.n_groups(data)):
        r = resid[gids == g]
        if r.size == 0:
            continue
        beta = lower_quantile(r, tau)
        shifts[g] = beta
        model.updates.append(Update(-1.0, ConstantDirection(beta), CellIndex(g, 0), (0.0, 1.0)))
    model.meta = {"tau": tau, "shifts": {str(g): b for g, b in shifts.items()}}
    return model


@dataclass(frozen=True)
class MvpConfig:
    tau: float = 0.9
    L: int = 10
    groups: GroupSpec = field(default_factory=GroupSpec.none)
    alpha: float = 0.01
    max_iters: int = 200
    step: float = 1.0  # multiplier on the chosen grid shift

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.L < 1:
            raise ConfigError("grid resolution L must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if not self.step > 0:
            raise ConfigError("step multiplier must be positive")

    def to_dict(self) -> dict:
        return {"tau": self.tau, "L": self.L, "groups": self.groups.to_dict(), "alpha": self.alpha,
                "max_iters": self.max_iters, "step": self.step}


@dataclass
class GridCell:
    cell: CellIndex
    n: int
    coverage: float
    mass: float

    def gap(self, tau: float) -> float:
        return self.coverage - tau

    def objective(self, tau: float) -> float:
        return self.mass * (self.coverage - tau) ** 2

    def normalized(self, tau: float) -> float:
        # |sum over the cell of (1{y <= q} - tau)| / n divided by sqrt(mass)
        return abs(self.coverage - tau) * math.sqrt(self.mass)


def grid_cells(y: np.ndarray, idx: np.ndarray, gids: np.ndarray, n_groups: int, L: int) -> list[GridCell]:
    """Coverage per nonempty (group, grid index) cell, ordered by cell."""
    n = y.shape[0]
    covered = y <= idx / L
    key = gids * (L + 1) + idx
    counts = np.bincount(key, minlength=n_groups * (L + 1))
    hits = np.bincount(key, weights=covered, minlength=n_groups * (L + 1))
    out = []
    for k in np.nonzero(counts)[0]:
        g, l = divmod(int(k), L + 1)
        out.append(GridCell(CellIndex(g, l), int(counts[k]), float(hits[k] / counts[k]), float(counts[k] / n)))
    return out


def best_shift(y_cell: np.ndarray, l: int, L: int, tau: float) -> int:
    """Grid offset d minimizing |P(y <= (l + d)/L) - tau| with 0 <= l + d <= L.

    Ties go to the smaller |d|, then to the negative offset.
    """
    ys = np.sort(y_cell)
    best, best_key = 0, None
    for d in range(-l, L - l + 1):
        cov = np.searchsorted(ys, (l + d) / L, side="right") / ys.shape[0]
        key = (abs(cov - tau), abs(d), d > 0)
        if best_key is None or key < best_key:
            best, best_key = d, key
    return best


def multi_mvp(data: Dataset, initial_quantiles, config: MvpConfig,
              initial: InitialModel | None = None) -> tuple[CalibratedModel, BoostTrace]:
    """Iterative grid-snapped quantile calibration over (group, grid value) cells.

    Outcomes are assumed to lie in [0, 1]. Each round picks the cell with the
    largest mass-weighted squared coverage gap and moves it by the grid shift
    that best restores coverage; predictions are re-snapped after every move.
    """
    tau, L = config.tau, config.L
    kind = ScoreKind.pinball(tau)
    y = data.y
    q0 = np.asarray(initial_quantiles, dtype=float)
    if q0.shape != (data.n,):
        raise DataError(f"expected {data.n} initial quantiles, got {q0.shape}")
    if data.n == 0:
        raise DataError("empty dataset")
    sizes = config.groups.sizes(data)
    n_groups = config.groups.n_groups(data)
    gids = assign_groups(data, config.groups, sizes)
    f = snap_to_grid(q0, L)
    model = CalibratedModel(kind, config.groups, sizes, BucketSpec(L=1), "local", initial=initial,
                            cell_kind="grid", snap_L=L)
    trace = BoostTrace(n_calib=data.n)
    trace.initial_calib_loss = trace.initial_valid_loss = float(np.mean(loss(kind, y, f)))
    cum = 0.0
    terminated = "max_iters"
    for b in range(config.max_iters + 1):
        idx = snap_index(f, L)
        cells = grid_cells(y, idx, gids, n_groups, L)
        if not cells:
            terminated = "converged"
            break
        worst = max(cells, key=lambda c: c.objective(tau))  # first maximum is the lowest cell
        trace.final_delta = trace.final_max_normalized = worst.normalized(tau)
        trace.final_raw = worst.mass * abs(worst.gap(tau))
        trace.final_candidates = len(cells)
        if worst.normalized(tau) <= config.alpha:
            terminated = "alpha"
            break
        if b == config.max_iters:
            break
        g, l = worst.cell.group_id, worst.cell.bucket_id
        mask = (gids == g) & (idx == l)
        d = best_shift(y[mask], l, L, tau)
        d = int(round(d * config.step))
        d = min(max(d, -l), L - l)
        if d == 0:
            terminated = "stalled"
            break
        upd = Update(-1.0, ConstantDirection(d / L), worst.cell, (0.0, 1.0))
        f = snap_to_grid(apply_update(f, upd.eta, np.where(mask, d / L, 0.0)), L)
        model.updates.append(upd)
        cum += abs(d) / L
        cur = float(np.mean(loss(kind, y, f)))
        trace.records.append(BoostRecord(b + 1, g, l, trace.final_raw, worst.normalized(tau), d / L, cum,
                                         cur, cur, max_normalized=worst.normalized(tau)))
    model.terminated_by = trace.terminated_by = terminated
    model.meta = {"config": config.to_dict(), "iterations": len(trace.records)}
    trace.final = {"calib": f}
    return model, trace


def minmax_scaler(y: np.ndarray) -> tuple[float, float]:
    """Range used to map outcomes into [0, 1]; the inverse is lo + v (hi - lo)."""
    lo, hi = float(np.min(y)), float(np.max(y))
    if not hi > lo:
        raise DataError("cannot scale a constant outcome into [0, 1]")
    return lo, hi
