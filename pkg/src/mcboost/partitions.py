"""Group structure, prediction buckets and the group x bucket cell grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class GroupSpec:
    """Groups as the cross product of categorical columns (row-major ids)."""

    columns: tuple[str, ...] = ()
    mode: str = "cross"

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.mode not in ("none", "cross"):
            raise ConfigError(f"group mode must be 'none' or 'cross', got {self.mode!r}")
        if self.mode == "cross" and not self.columns:
            object.__setattr__(self, "mode", "none")

    @classmethod
    def none(cls) -> "GroupSpec":
        return cls((), "none")

    def sizes(self, data: Dataset) -> tuple[int, ...]:
        if self.mode == "none":
            return ()
        return tuple(data.n_levels[data.cat_index(c)] for c in self.columns)

    def n_groups(self, data: Dataset) -> int:
        return int(np.prod(self.sizes(data), dtype=np.int64)) if self.mode == "cross" else 1

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSpec":
        return cls(tuple(d.get("columns", ())), d.get("mode", "cross"))


def assign_groups(data: Dataset, spec: GroupSpec, sizes: tuple[int, ...] | None = None) -> np.ndarray:
    """Group id per row; the first listed column varies slowest."""
    if spec.mode == "none":
        return np.zeros(data.n, dtype=np.int64)
    sizes = spec.sizes(data) if sizes is None else tuple(sizes)
    gid = np.zeros(data.n, dtype=np.int64)
    for col, k in zip(spec.columns, sizes):
        codes = data.x_cat[:, data.cat_index(col)]
        if codes.size and codes.max() >= k:
            raise DataError(f"column {col!r} has more levels than the recorded {k}")
        gid = gid * k + codes
    return gid


@dataclass(frozen=True)
class BucketSpec:
    L: int = 1
    range: tuple[float, float] | None = None  # None means Auto
    anchor: str = "dynamic"
    directional: bool = False

    def __post_init__(self):
        if int(self.L) < 1:
            raise ConfigError("number of buckets L must be >= 1")
        if self.anchor not in ("dynamic", "static"):
            raise ConfigError(f"bucket anchor must be 'dynamic' or 'static', got {self.anchor!r}")
        if self.range is not None:
            lo, hi = self.range
            if not lo < hi:
                raise ConfigError(f"bucket range needs C1 < C2, got {self.range}")
            object.__setattr__(self, "range", (float(lo), float(hi)))

    @property
    def n_buckets(self) -> int:
        return 2 * self.L if self.directional else self.L

    def to_dict(self) -> dict:
        return {"L": self.L, "range": None if self.range is None else list(self.range),
                "anchor": self.anchor, "directional": self.directional}

    @classmethod
    def from_dict(cls, d: dict) -> "BucketSpec":
        rng = d.get("range")
        return cls(int(d.get("L", 1)), None if rng is None else tuple(rng),
                   d.get("anchor", "dynamic"), bool(d.get("directional", False)))


def auto_range(*arrays: np.ndarray) -> tuple[float, float]:
    vals = [np.asarray(a) for a in arrays if np.asarray(a).size]
    if not vals:
        raise DataError("cannot derive a bucket range from no predictions")
    lo = min(float(v.min()) for v in vals)
    hi = max(float(v.max()) for v in vals)
    return lo, hi


def bucket_edges(lo: float, hi: float, L: int) -> np.ndarray:
    """Interior edges C1 + l (C2 - C1) / L for l = 1..L-1."""
    return np.array([lo + l * (hi - lo) / L for l in range(1, L)], dtype=float)


def _check_finite(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    if np.isnan(pred).any():
        raise DataError("NaN prediction cannot be bucketized")
    return pred


def bucketize(predictions, L: int, lo: float, hi: float) -> np.ndarray:
    """Bucket index per prediction.

    Buckets are right-closed, the first one also left-closed; values outside
    [lo, hi] clamp into the boundary buckets.
    """
    pred = _check_finite(predictions)
    if L == 1 or not hi > lo:
        return np.zeros(pred.shape[0], dtype=np.int64)
    # count of interior edges strictly below f
    return np.searchsorted(bucket_edges(lo, hi, L), pred, side="left").astype(np.int64)


def directional_buckets(predictions, L: int, lo: float, hi: float) -> list[tuple[int, np.ndarray]]:
    """Nested quantile buckets: ids 0..L-1 are {f <= t_l}, ids L..2L-1 are {f >= t_l}."""
    pred = _check_finite(predictions)
    thresholds = [lo + l * (hi - lo) / L for l in range(1, L + 1)]
    out = [(l, pred <= t) for l, t in enumerate(thresholds)]
    out += [(L + l, pred >= t) for l, t in enumerate(thresholds)]
    return out


def directional_mask(predictions, bucket_id: int, L: int, lo: float, hi: float) -> np.ndarray:
    pred = _check_finite(predictions)
    l = bucket_id % L
    t = lo + (l + 1) * (hi - lo) / L
    return pred <= t if bucket_id < L else pred >= t


def snap_index(v, L: int) -> np.ndarray:
    """Index k of the nearest grid point k/L in [0, 1]; midpoints round down."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    scaled = v * L
    k = np.floor(scaled)
    k = np.where(scaled - k > 0.5, k + 1, k)
    return np.clip(k, 0, L).astype(np.int64)


def snap_to_grid(v, L: int):
    if L < 1:
        raise ConfigError("grid resolution L must be >= 1")
    out = snap_index(v, L) / L
    return float(out) if np.ndim(v) == 0 else out


@dataclass(frozen=True, order=True)
class CellIndex:
    group_id: int
    bucket_id: int


@dataclass
class CellGrid:
    """Membership of every (group, bucket) cell on one row set."""

    n_groups: int
    n_buckets: int
    group_ids: np.ndarray
    bucket_ids: np.ndarray | None = None  # partition buckets
    directional: list[tuple[int, np.ndarray]] | None = None
    _group_masks: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def group_mask(self, g: int) -> np.ndarray:
        m = self._group_masks.get(g)
        if m is None:
            m = self._group_masks[g] = self.group_ids == g
        return m

    def mask(self, cell: CellIndex) -> np.ndarray:
        gm = self.group_mask(cell.group_id)
        if self.directional is not None:
            return gm & self.directional[cell.bucket_id][1]
        if self.n_buckets == 1:
            return gm
        return gm & (self.bucket_ids == cell.bucket_id)

    def cells(self) -> Iterator[CellIndex]:
        for g in range(self.n_groups):
            for l in range(self.n_buckets):
                yield CellIndex(g, l)


def build_grid(group_ids: np.ndarray, n_groups: int, anchor_values: np.ndarray,
               spec: BucketSpec, lo: float, hi: float) -> CellGrid:
    if spec.directional:
        return CellGrid(n_groups, 2 * spec.L, group_ids,
                        directional=directional_buckets(anchor_values, spec.L, lo, hi))
    return CellGrid(n_groups, spec.L, group_ids, bucket_ids=bucketize(anchor_values, spec.L, lo, hi))
