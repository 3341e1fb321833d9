"""Evaluation: groupwise bias and MSE, per-cell calibration error, coverage, excess risk.

Every mean accepts optional nonnegative weights and is computed as
sum(w x) / sum(w). With ``weights=None`` the plain sum(x) / n is used, which
is bit-identical to unit weights.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import _fmt, atomic_write_text
from .errors import DataError
from .partitions import BucketSpec, auto_range, bucketize
from .scores import ScoreKind, loss, score


def _weights(weights, n: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise DataError(f"expected {n} weights, got {w.shape}")
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise DataError("weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise DataError("weights sum to zero")
    return w


def wmean(x, w=None) -> float:
    x = np.asarray(x, dtype=float)
    if w is None:
        return float(np.sum(x) / x.shape[0])
    return float(np.sum(w * x) / np.sum(w))


def _groups_of(group_ids, n: int) -> np.ndarray:
    return np.zeros(n, dtype=np.int64) if group_ids is None else np.asarray(group_ids, dtype=np.int64)


def _sub(w, m):
    return None if w is None else w[m]


def _present(gids, w):
    """Groups with at least one row and, when weighted, positive weight."""
    out = []
    for g in np.unique(gids):
        m = gids == g
        if w is None or w[m].sum() > 0:
            out.append(int(g))
    return out


def groupwise_bias(y, f, group_ids=None, weights=None, size_weighted: bool = False):
    """Per-group mean(y - f) and the mean absolute bias across nonempty groups."""
    y, f = np.asarray(y, float), np.asarray(f, float)
    w = _weights(weights, y.shape[0])
    gids = _groups_of(group_ids, y.shape[0])
    r = y - f
    per = {}
    mass = {}
    for g in _present(gids, w):
        m = gids == g
        per[g] = wmean(r[m], _sub(w, m))
        mass[g] = float(m.sum()) if w is None else float(w[m].sum())
    if not per:
        return per, 0.0
    vals = np.array([abs(v) for v in per.values()])
    if size_weighted:
        ms = np.array(list(mass.values()))
        return per, float(np.sum(ms * vals) / np.sum(ms))
    return per, float(np.sum(vals) / vals.shape[0])


def groupwise_mse(y, f, group_ids=None, weights=None):
    y, f = np.asarray(y, float), np.asarray(f, float)
    w = _weights(weights, y.shape[0])
    gids = _groups_of(group_ids, y.shape[0])
    sq = (y - f) ** 2
    per = {g: wmean(sq[gids == g], _sub(w, gids == g)) for g in _present(gids, w)}
    return per, wmean(sq, w)


def cell_calibration_error(y, f, group_ids=None, buckets: BucketSpec | None = None, weights=None,
                           bucket_range: tuple[float, float] | None = None):
    """Mean(y - f) per nonempty (group, bucket of f) cell: {(g, l): (error, n)}."""
    y, f = np.asarray(y, float), np.asarray(f, float)
    w = _weights(weights, y.shape[0])
    gids = _groups_of(group_ids, y.shape[0])
    buckets = buckets or BucketSpec(L=1)
    lo, hi = bucket_range or buckets.range or auto_range(f)
    bids = bucketize(f, buckets.L, lo, hi)
    r = y - f
    out = {}
    for g in _present(gids, w):
        for l in range(buckets.L):
            m = (gids == g) & (bids == l)
            if not m.any() or (w is not None and not w[m].sum() > 0):
                continue
            out[(g, l)] = (wmean(r[m], _sub(w, m)), int(m.sum()))
    return out


def coverage(y, q, group_ids=None, tau: float = 0.5, weights=None):
    """Per-group P(y <= q) and its deviation from tau; ties count as covered."""
    y, q = np.asarray(y, float), np.asarray(q, float)
    w = _weights(weights, y.shape[0])
    gids = _groups_of(group_ids, y.shape[0])
    hit = (y <= q).astype(float)
    out = {}
    for g in _present(gids, w):
        m = gids == g
        c = wmean(hit[m], _sub(w, m))
        out[g] = (c, c - tau)
    return out


def excess_convex_risk(y, f, f_star, kind: ScoreKind, weights=None) -> float:
    """mean loss(y, f) - mean loss(y, f_star)."""
    w = _weights(weights, np.asarray(y).shape[0])
    return wmean(loss(kind, y, f), w) - wmean(loss(kind, y, f_star), w)


def normalized_violation(h, s, weights=None) -> float:
    h, s = np.asarray(h, float), np.asarray(s, float)
    w = _weights(weights, h.shape[0])
    sq = wmean(h * h, w)
    if sq == 0.0:
        return 0.0
    return abs(wmean(h * s, w)) / math.sqrt(sq)


def sup_violation(y, f, kind: ScoreKind, family: Sequence, weights=None) -> float:
    """Largest normalized violation over a finite family of direction value vectors."""
    if not len(family):
        return 0.0
    s = score(kind, y, f)
    return max(normalized_violation(h, s, weights) for h in family)


def cell_family(group_ids, bucket_ids=None) -> list[np.ndarray]:
    """Indicator directions of every nonempty (group, bucket) cell."""
    gids = np.asarray(group_ids)
    bids = np.zeros_like(gids) if bucket_ids is None else np.asarray(bucket_ids)
    fam = []
    for g in np.unique(gids):
        for l in np.unique(bids[gids == g]):
            fam.append(((gids == g) & (bids == l)).astype(float))
    return fam


@dataclass
class GroupStat:
    bias: float
    mse: float
    n: int
    mass: float
    coverage: float | None = None


@dataclass
class EvalReport:
    per_group: dict[int, GroupStat] = field(default_factory=dict)
    per_cell: dict[tuple[int, int], tuple[float, int]] = field(default_factory=dict)
    mse: float = 0.0
    bias: float = 0.0
    mean_abs_group_bias: float = 0.0
    mean_loss: float = 0.0
    excess_risk: float | None = None
    sup_violation: float | None = None
    coverage: float | None = None
    n: int = 0

    def to_dict(self) -> dict:
        return {"global": {"n": self.n, "mse": self.mse, "bias": self.bias,
                           "mean_abs_group_bias": self.mean_abs_group_bias, "mean_loss": self.mean_loss,
                           "excess_risk": self.excess_risk, "sup_violation": self.sup_violation,
                           "coverage": self.coverage},
                "per_group": {str(g): vars(s) for g, s in self.per_group.items()},
                "per_cell": [{"group": g, "bucket": l, "calibration_error": e, "n": n}
                             for (g, l), (e, n) in self.per_cell.items()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def rows(self) -> list[tuple[str, str, str, str, float]]:
        """Flat (scope, group, bucket, metric, value) rows."""
        out = []
        for k, v in self.to_dict()["global"].items():
            if v is not None:
                out.append(("global", "", "", k, float(v)))
        for g, s in self.per_group.items():
            for k, v in vars(s).items():
                if v is not None:
                    out.append(("group", str(g), "", k, float(v)))
        for (g, l), (e, n) in self.per_cell.items():
            out.append(("cell", str(g), str(l), "calibration_error", e))
            out.append(("cell", str(g), str(l), "n", float(n)))
        return out

    def to_csv_text(self) -> str:
        lines = ["scope,group,bucket,metric,value"]
        lines += [f"{a},{b},{c},{d},{_fmt(v)}" for a, b, c, d, v in self.rows()]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        path = str(path)
        atomic_write_text(path, self.to_csv_text() if path.endswith(".csv") else self.to_json())


def evaluate(y, f, group_ids=None, kind: ScoreKind | None = None, weights=None,
             buckets: BucketSpec | None = None, f_star=None, tau: float | None = None,
             family: Sequence | None = None, size_weighted: bool = False) -> EvalReport:
    """All metrics in one report. ``tau`` adds coverage; ``f_star`` adds excess risk."""
    y, f = np.asarray(y, float), np.asarray(f, float)
    if y.shape != f.shape or y.ndim != 1:
        raise DataError(f"outcome and prediction shapes differ: {y.shape} vs {f.shape}")
    if y.shape[0] == 0:
        raise DataError("cannot evaluate on an empty dataset")
    kind = kind or ScoreKind()
    w = _weights(weights, y.shape[0])
    gids = _groups_of(group_ids, y.shape[0])
    bias_g, mab = groupwise_bias(y, f, gids, w, size_weighted)
    mse_g, mse = groupwise_mse(y, f, gids, w)
    cov_g = coverage(y, f, gids, tau, w) if tau is not None else {}
    rep = EvalReport(n=int(y.shape[0]), mse=mse, bias=wmean(y - f, w), mean_abs_group_bias=mab,
                     mean_loss=wmean(loss(kind, y, f), w))
    for g in bias_g:
        m = gids == g
        rep.per_group[g] = GroupStat(bias_g[g], mse_g[g], int(m.sum()),
                                     float(m.sum()) if w is None else float(w[m].sum()),
                                     cov_g[g][0] if g in cov_g else None)
    rep.per_cell = cell_calibration_error(y, f, gids, buckets, w)
    if tau is not None:
        rep.coverage = wmean((y <= f).astype(float), w)
    if f_star is not None:
        rep.excess_risk = excess_convex_risk(y, f, f_star, kind, w)
    if family is not None:
        rep.sup_violation = sup_violation(y, f, kind, family, w)
    return rep
