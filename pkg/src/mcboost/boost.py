"""Multicalibration boosting: audit cells, pick the worst violation, step, repeat.

The loop state is the current prediction vector on every split. Each round
partitions the calibration and validation rows into (group, bucket) cells,
fits one direction per nonempty calibration cell, scores the candidates on the
validation rows and either stops or applies one update. Every update records
what is needed to replay it on new rows, so ``predict`` is a pure function of
the serialized model.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .auditors import AuditorKind, Direction, direction_from_dict, fit_direction
from .baselines import InitialModel, model_from_dict
from .dataset import Dataset, atomic_write_text, _fmt
from .errors import ConfigError, DataError
from .partitions import (BucketSpec, CellIndex, GroupSpec, assign_groups, auto_range, bucketize,
                         build_grid, directional_mask, snap_index, snap_to_grid)
from .scores import ScoreKind, default_smoothness, loss, score
from .stopping import StoppingRule, cv_select, should_stop

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRACE_COLUMNS = ("iter", "cell_g", "cell_l", "raw_violation", "delta", "eta", "cum_budget",
                 "calib_loss", "valid_loss", "holdout_loss")


@dataclass(frozen=True)
class StepRule:
    kind: str = "adaptive"
    c_L: float | None = None  # None means the score's default
    eta: float = 0.1

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed"):
            raise ConfigError(f"step rule must be 'adaptive' or 'fixed', got {self.kind!r}")
        if self.kind == "fixed" and not self.eta > 0:
            raise ConfigError("fixed step eta must be positive")
        if self.c_L is not None and not self.c_L > 0:
            raise ConfigError("c_L must be positive")

    @classmethod
    def parse(cls, text: str) -> "StepRule":
        """``adaptive``, ``adaptive:1.0`` (c_L) or ``fixed:0.05``."""
        name, _, arg = text.partition(":")
        try:
            if name == "adaptive":
                return cls("adaptive", c_L=float(arg) if arg else None)
            if name == "fixed":
                return cls("fixed", eta=float(arg) if arg else 0.1)
        except ValueError:
            pass
        raise ConfigError(f"bad step rule {text!r}; use adaptive[:C_L] or fixed:ETA")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c_L": self.c_L, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict) -> "StepRule":
        return cls(d.get("kind", "adaptive"), d.get("c_L"), float(d.get("eta", 0.1)))


@dataclass(frozen=True)
class BoostConfig:
    score: ScoreKind = field(default_factory=ScoreKind)
    auditor: AuditorKind = field(default_factory=AuditorKind)
    groups: GroupSpec = field(default_factory=GroupSpec.none)
    buckets: BucketSpec = field(default_factory=BucketSpec)
    alpha: float = 0.01
    step: StepRule = field(default_factory=StepRule)
    max_iters: int = 100
    projection: tuple[float, float] | None = None
    update_scope: str = "local"
    stopping: StoppingRule = field(default_factory=StoppingRule)
    # stop on alpha only once every candidate, not just the selected one, is within alpha
    certify_all: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.update_scope not in ("local", "global"):
            raise ConfigError(f"update_scope must be 'local' or 'global', got {self.update_scope!r}")
        if self.projection is not None:
            lo, hi = self.projection
            if not lo < hi:
                raise ConfigError(f"projection needs lo < hi, got {self.projection}")
            object.__setattr__(self, "projection", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        return {"score": self.score.to_dict(), "auditor": self.auditor.to_dict(),
                "groups": self.groups.to_dict(), "buckets": self.buckets.to_dict(),
                "alpha": self.alpha, "step": self.step.to_dict(), "max_iters": self.max_iters,
                "projection": None if self.projection is None else list(self.projection),
                "update_scope": self.update_scope, "stopping": self.stopping.to_dict(),
                "certify_all": self.certify_all, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "BoostConfig":
        proj = d.get("projection")
        return cls(score=ScoreKind.from_dict(d.get("score", {"kind": "squared"})),
                   auditor=AuditorKind.from_dict(d.get("auditor", {"kind": "tree"})),
                   groups=GroupSpec.from_dict(d.get("groups", {"mode": "none"})),
                   buckets=BucketSpec.from_dict(d.get("buckets", {})),
                   alpha=float(d.get("alpha", 0.01)),
                   step=StepRule.from_dict(d.get("step", {})),
                   max_iters=int(d.get("max_iters", 100)),
                   projection=None if proj is None else tuple(proj),
                   update_scope=d.get("update_scope", "local"),
                   stopping=StoppingRule.from_dict(d.get("stopping", {"kind": "alpha"})),
                   certify_all=bool(d.get("certify_all", True)), seed=int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# the per-round primitives


def violation(h, s) -> tuple[float, float]:
    """(|sum h s| / n, that divided by sqrt(sum h^2 / n)); zero norm gives (0, 0)."""
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    if h.shape != s.shape:
        raise DataError(f"length mismatch: h has {h.shape}, scores have {s.shape}")
    n = h.shape[0]
    if n == 0:
        return 0.0, 0.0
    sq = float(np.dot(h, h))
    if sq == 0.0:
        return 0.0, 0.0
    raw = abs(float(np.dot(h, s))) / n
    return raw, raw / math.sqrt(sq / n)


def adaptive_step(h, s, c_L: float) -> float:
    """eta = (sum h s / n) / (2 c_L sum h^2 / n); f - eta h then descends."""
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    den = float(np.dot(h, h))
    if den == 0.0:
        raise DataError("adaptive step undefined for a zero direction")
    n = h.shape[0]
    return (float(np.dot(h, s)) / n) / (2.0 * c_L * den / n)


def apply_update(f, eta: float, h, projection: tuple[float, float] | None = None) -> np.ndarray:
    out = np.asarray(f, dtype=float) - eta * np.asarray(h, dtype=float)
    if projection is not None:
        out = np.clip(out, projection[0], projection[1])
    return out


@dataclass
class Candidate:
    cell: CellIndex
    direction: Direction
    h_calib: np.ndarray  # effective direction on the calibration rows
    h_valid: np.ndarray
    raw: float
    normalized: float


def select_worst(candidates: list[Candidate]) -> Candidate | None:
    """Largest raw violation; ties go to the lowest (group, bucket)."""
    best = None
    for c in sorted(candidates, key=lambda c: c.cell):
        if best is None or c.raw > best.raw:
            best = c
    return best


# ---------------------------------------------------------------------------
# model


@dataclass
class Update:
    eta: float
    direction: Direction
    cell: CellIndex
    bucket_range: tuple[float, float] = (0.0, 1.0)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "cell": [self.cell.group_id, self.cell.bucket_id],
                "bucket_range": list(self.bucket_range), "direction": self.direction.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Update":
        g, l = d["cell"]
        return cls(float(d["eta"]), direction_from_dict(d["direction"]), CellIndex(int(g), int(l)),
                   tuple(d.get("bucket_range", (0.0, 1.0))))


@dataclass
class CalibratedModel:
    """Initial predictor plus an ordered list of updates.

    ``cell_kind`` is ``bucket`` for (group, prediction bucket) cells and
    ``grid`` for (group, grid point) cells, where predictions are snapped to
    the grid {0, 1/snap_L, ..., 1} before and after every update.
    """

    score: ScoreKind
    groups: GroupSpec
    group_sizes: tuple[int, ...]
    buckets: BucketSpec
    update_scope: str = "local"
    projection: tuple[float, float] | None = None
    updates: list[Update] = field(default_factory=list)
    initial: InitialModel | None = None
    cell_kind: str = "bucket"
    snap_L: int | None = None
    terminated_by: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_updates(self) -> int:
        return len(self.updates)

    def group_ids(self, data: Dataset) -> np.ndarray:
        return assign_groups(data, self.groups, self.group_sizes)

    def cell_mask(self, update: Update, group_ids: np.ndarray, f0: np.ndarray, f: np.ndarray) -> np.ndarray:
        g, l = update.cell.group_id, update.cell.bucket_id
        in_group = group_ids == g
        if self.cell_kind == "grid":
            return in_group & (snap_index(f, self.snap_L) == l)
        anchor = f0 if self.buckets.anchor == "static" else f
        lo, hi = update.bucket_range
        if self.buckets.directional:
            return in_group & directional_mask(anchor, l, self.buckets.L, lo, hi)
        if self.buckets.L == 1:
            return in_group
        return in_group & (bucketize(anchor, self.buckets.L, lo, hi) == l)

    def initial_predictions(self, data: Dataset, initial_predictions=None) -> np.ndarray:
        if initial_predictions is None:
            if self.initial is None:
                raise ConfigError("model has no embedded initial predictor; supply initial predictions")
            f0 = self.initial.predict(data)
        else:
            f0 = np.asarray(initial_predictions, dtype=float)
            if f0.shape != (data.n,):
                raise DataError(f"expected {data.n} initial predictions, got {f0.shape}")
        if self.projection is not None:
            f0 = np.clip(f0, *self.projection)
        if self.snap_L is not None:
            f0 = snap_to_grid(f0, self.snap_L)
        return f0

    def predict(self, data: Dataset, initial_predictions=None, n_updates: int | None = None) -> np.ndarray:
        f0 = self.initial_predictions(data, initial_predictions)
        f = f0.copy()
        gids = self.group_ids(data)
        for u in self.updates[:n_updates]:
            h = u.direction.evaluate(data)
            if self.update_scope == "local":
                h = np.where(self.cell_mask(u, gids, f0, f), h, 0.0)
            f = apply_update(f, u.eta, h, self.projection)
            if self.snap_L is not None:
                f = snap_to_grid(f, self.snap_L)
        return f

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "score": self.score.to_dict(),
                "groups": dict(self.groups.to_dict(), sizes=list(self.group_sizes)),
                "buckets": self.buckets.to_dict(), "update_scope": self.update_scope,
                "projection": None if self.projection is None else list(self.projection),
                "cell_kind": self.cell_kind, "snap_L": self.snap_L,
                "terminated_by": self.terminated_by, "meta": self.meta,
                "initial": None if self.initial is None else self.initial.to_dict(),
                "updates": [u.to_dict() for u in self.updates]}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {version!r}")
        proj = d.get("projection")
        return cls(score=ScoreKind.from_dict(d["score"]), groups=GroupSpec.from_dict(d["groups"]),
                   group_sizes=tuple(d["groups"].get("sizes", ())),
                   buckets=BucketSpec.from_dict(d["buckets"]), update_scope=d.get("update_scope", "local"),
                   projection=None if proj is None else tuple(proj),
                   updates=[Update.from_dict(u) for u in d.get("updates", [])],
                   initial=None if d.get("initial") is None else model_from_dict(d["initial"]),
                   cell_kind=d.get("cell_kind", "bucket"), snap_L=d.get("snap_L"),
                   terminated_by=d.get("terminated_by", ""), meta=d.get("meta", {}))

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "CalibratedModel":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: not a JSON model file ({e})") from None
        if isinstance(d, dict) and "updates" not in d and "kind" in d:
            # a bare initial-model file: a calibrated model with no updates
            return cls(ScoreKind(), GroupSpec.none(), (), BucketSpec(), initial=model_from_dict(d))
        return cls.from_dict(d)


# ---------------------------------------------------------------------------
# trace


@dataclass
class BoostRecord:
    iter: int
    cell_g: int
    cell_l: int
    raw_violation: float
    delta: float
    eta: float
    cum_budget: float
    calib_loss: float
    valid_loss: float
    holdout_loss: float | None = None
    monitor_loss: float | None = None
    max_normalized: float = 0.0


@dataclass
class BoostTrace:
    records: list[BoostRecord] = field(default_factory=list)
    initial_calib_loss: float = 0.0
    initial_valid_loss: float = 0.0
    initial_holdout_loss: float | None = None
    initial_monitor_loss: float | None = None
    terminated_by: str = ""
    final_delta: float = 0.0
    final_raw: float = 0.0
    final_max_normalized: float = 0.0
    final_candidates: int = 0
    n_calib: int = 0
    cv_budget: float | None = None
    final: dict = field(default_factory=dict, repr=False)  # split name -> final predictions

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv_text(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for r in self.records:
            vals = [getattr(r, c) for c in TRACE_COLUMNS]
            lines.append(",".join("" if v is None else (str(v) if isinstance(v, int) else _fmt(v))
                                  for v in vals))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    def summary(self) -> dict:
        return {"iterations": len(self.records), "terminated_by": self.terminated_by,
                "final_delta": self.final_delta, "final_max_normalized": self.final_max_normalized,
                "initial_calib_loss": self.initial_calib_loss, "initial_valid_loss": self.initial_valid_loss,
                "final_calib_loss": self.records[-1].calib_loss if self.records else self.initial_calib_loss,
                "final_valid_loss": self.records[-1].valid_loss if self.records else self.initial_valid_loss,
                "cum_budget": self.records[-1].cum_budget if self.records else 0.0,
                "cv_budget": self.cv_budget}


# ---------------------------------------------------------------------------
# the loop


@dataclass
class _Split:
    data: Dataset
    f0: np.ndarray
    f: np.ndarray
    gids: np.ndarray


@dataclass
class _Fit:
    members: np.ndarray
    round: int
    direction: Direction
    h_calib: np.ndarray
    h_valid: np.ndarray


class _Auditor:
    """Candidate generation with reuse of fits whose cell rows and scores are unchanged."""

    def __init__(self, config: BoostConfig, calib: _Split, valid: _Split, shared: bool, n_groups: int):
        self.config = config
        self.calib = calib
        self.valid = valid
        self.shared = shared
        self.n_groups = n_groups
        self.cache: dict[CellIndex, _Fit] = {}
        self.last_changed = np.full(calib.data.n, -1, dtype=np.int64)

    def bucket_range(self) -> tuple[float, float]:
        b = self.config.buckets
        if b.range is not None:
            return b.range
        if b.anchor == "static":
            return auto_range(self.calib.f0, self.valid.f0)
        return auto_range(self.calib.f, self.valid.f)

    def anchors(self):
        if self.config.buckets.anchor == "static":
            return self.calib.f0, self.valid.f0
        return self.calib.f, self.valid.f

    def candidates(self, rnd: int, s_cal: np.ndarray, s_val: np.ndarray):
        cfg = self.config
        lo, hi = self.bucket_range()
        a_cal, a_val = self.anchors()
        grid_cal = build_grid(self.calib.gids, self.n_groups, a_cal, cfg.buckets, lo, hi)
        grid_val = grid_cal if self.shared else build_grid(self.valid.gids, self.n_groups, a_val,
                                                           cfg.buckets, lo, hi)
        local = cfg.update_scope == "local"
        out = []
        for cell in grid_cal.cells():
            m_cal = grid_cal.mask(cell)
            members = np.nonzero(m_cal)[0]
            if members.size == 0:
                self.cache.pop(cell, None)
                continue
            fit = self.cache.get(cell)
            if (fit is None or not np.array_equal(fit.members, members)
                    or self.last_changed[members].max() >= fit.round):
                direction = fit_direction(cfg.auditor, self.calib.data, s_cal, members)
                h_cal = direction.evaluate(self.calib.data)
                h_val = h_cal if self.shared else direction.evaluate(self.valid.data)
                fit = self.cache[cell] = _Fit(members, rnd, direction, h_cal, h_val)
            if local:
                h_cal = np.where(m_cal, fit.h_calib, 0.0)
                h_val = h_cal if self.shared else np.where(grid_val.mask(cell), fit.h_valid, 0.0)
            else:
                h_cal, h_val = fit.h_calib, fit.h_valid
            raw, norm = violation(h_val, s_val)
            out.append(Candidate(cell, fit.direction, h_cal, h_val, raw, norm))
        return out, (lo, hi)


def _mean_loss(kind: ScoreKind, y, f) -> float:
    return float(np.mean(loss(kind, y, f)))


def audit(calib: Dataset, valid: Dataset, f_calib, f_valid, config: BoostConfig,
          f0_calib=None, f0_valid=None, group_sizes: tuple[int, ...] | None = None) -> list[Candidate]:
    """One audit round from scratch at the given predictions (no updates)."""
    shared = valid is calib
    sizes = config.groups.sizes(calib) if group_sizes is None else tuple(group_sizes)
    f_calib = np.asarray(f_calib, float)
    f_valid = f_calib if shared else np.asarray(f_valid, float)
    f0_calib = f_calib if f0_calib is None else np.asarray(f0_calib, float)
    f0_valid = f0_calib if shared else (f_valid if f0_valid is None else np.asarray(f0_valid, float))
    gc = assign_groups(calib, config.groups, sizes)
    cs = _Split(calib, f0_calib, f_calib, gc)
    vs = cs if shared else _Split(valid, f0_valid, f_valid, assign_groups(valid, config.groups, sizes))
    n_groups = int(np.prod(sizes, dtype=np.int64)) if config.groups.mode == "cross" else 1
    s_cal = score(config.score, calib.y, f_calib)
    s_val = s_cal if shared else score(config.score, valid.y, f_valid)
    cands, _ = _Auditor(config, cs, vs, shared, n_groups).candidates(0, s_cal, s_val)
    return cands


def run(calib: Dataset, valid: Dataset, config: BoostConfig, f0_calib, f0_valid=None, *,
        holdout: Dataset | None = None, f0_holdout=None, monitor: Dataset | None = None,
        f0_monitor=None, initial: InitialModel | None = None) -> tuple[CalibratedModel, BoostTrace]:
    """Boost initial predictions on calibration data, auditing on validation data.

    Pass the same Dataset object as ``calib`` and ``valid`` to audit on the
    calibration rows themselves. ``holdout`` only receives loss tracking;
    ``monitor`` replaces the validation loss for the patience rule.
    """
    if calib.n == 0 or valid.n == 0:
        raise DataError("calibration and validation sets must be nonempty")
    shared = valid is calib
    kind = config.score
    f0_calib = np.asarray(f0_calib, dtype=float)
    f0_valid = f0_calib if shared or f0_valid is None else np.asarray(f0_valid, dtype=float)
    if f0_calib.shape != (calib.n,) or f0_valid.shape != (valid.n,):
        raise DataError("initial prediction length does not match its split")
    for name, f in (("calibration", f0_calib), ("validation", f0_valid)):
        if not np.all(np.isfinite(f)):
            raise DataError(f"non-finite initial predictions on the {name} split")

    stopping = config.stopping
    cv_budget = None
    if stopping.kind == "cv":
        cv_budget, _ = cv_select(calib, f0_calib, config, stopping.k_folds, stopping.grid, config.seed)
        stopping = StoppingRule("budget", total=cv_budget)
        log.info("cross-validated step budget %.6g", cv_budget)

    sizes = config.groups.sizes(calib)
    n_groups = config.groups.n_groups(calib)
    if config.projection is not None:
        f0_calib = np.clip(f0_calib, *config.projection)
        f0_valid = f0_calib if shared else np.clip(f0_valid, *config.projection)
    if f0_calib is f0_valid and not shared:
        raise DataError("validation initial predictions are required when validation is a separate split")

    def make_split(ds, f0):
        f0 = np.asarray(f0, dtype=float)
        if config.projection is not None:
            f0 = np.clip(f0, *config.projection)
        return _Split(ds, f0, f0.copy(), assign_groups(ds, config.groups, sizes))

    cs = _Split(calib, f0_calib, f0_calib.copy(), assign_groups(calib, config.groups, sizes))
    vs = cs if shared else _Split(valid, f0_valid, f0_valid.copy(), assign_groups(valid, config.groups, sizes))
    extra = {}
    if holdout is not None:
        extra["holdout"] = make_split(holdout, f0_holdout)
    if monitor is not None:
        extra["monitor"] = make_split(monitor, f0_monitor)

    model = CalibratedModel(kind, config.groups, sizes, config.buckets, config.update_scope,
                            config.projection, initial=initial)
    trace = BoostTrace(n_calib=calib.n, cv_budget=cv_budget)
    trace.initial_calib_loss = _mean_loss(kind, calib.y, cs.f)
    trace.initial_valid_loss = _mean_loss(kind, valid.y, vs.f)
    if "holdout" in extra:
        trace.initial_holdout_loss = _mean_loss(kind, holdout.y, extra["holdout"].f)
    trace.initial_monitor_loss = (_mean_loss(kind, monitor.y, extra["monitor"].f) if "monitor" in extra
                                  else trace.initial_valid_loss)

    c_L = default_smoothness(kind, config.step.c_L)
    auditor = _Auditor(config, cs, vs, shared, n_groups)
    all_splits = {"calib": cs, "valid": vs, **extra}
    snapshots: dict[int, dict[str, np.ndarray]] = {}
    best_monitor, best_k = trace.initial_monitor_loss, 0
    if stopping.kind == "patience":
        snapshots[0] = {k: sp.f.copy() for k, sp in all_splits.items()}
    cum = 0.0
    terminated = "max_iters"

    for b in range(config.max_iters + 1):
        s_cal = score(kind, calib.y, cs.f)
        s_val = s_cal if shared else score(kind, valid.y, vs.f)
        cands, (lo, hi) = auditor.candidates(b, s_cal, s_val)
        if not cands:
            trace.final_delta = trace.final_raw = trace.final_max_normalized = 0.0
            terminated = "converged"
            break
        chosen = select_worst(cands)
        max_norm = max(c.normalized for c in cands)
        trace.final_delta, trace.final_raw = chosen.normalized, chosen.raw
        trace.final_max_normalized, trace.final_candidates = max_norm, len(cands)
        if chosen.normalized <= config.alpha:
            if not config.certify_all or max_norm <= config.alpha:
                terminated = "alpha"
                break
            # the selected cell passes but another does not: work on the worst normalized one
            chosen = max(sorted(cands, key=lambda c: c.cell), key=lambda c: c.normalized)
        if b == config.max_iters:
            break
        h_cal = chosen.h_calib
        den = float(np.dot(h_cal, h_cal))
        if den == 0.0:
            terminated = "degenerate"
            break
        if config.step.kind == "adaptive":
            eta = adaptive_step(h_cal, s_cal, c_L)
        else:
            eta = config.step.eta * float(np.sign(np.dot(h_cal, s_cal)))
        if eta == 0.0 or not math.isfinite(eta):
            terminated = "stalled"
            break

        upd = Update(float(eta), chosen.direction, chosen.cell, (float(lo), float(hi)))
        for name, sp in all_splits.items():
            if name == "valid" and shared:
                continue
            if sp is cs:
                h = h_cal
            elif sp is vs:
                h = chosen.h_valid
            else:
                h = chosen.direction.evaluate(sp.data)
                if config.update_scope == "local":
                    h = np.where(model.cell_mask(upd, sp.gids, sp.f0, sp.f), h, 0.0)
            new = apply_update(sp.f, eta, h, config.projection)
            if sp is cs:
                auditor.last_changed[new != sp.f] = b
            sp.f = new
        model.updates.append(upd)
        cum += abs(eta)
        rec = BoostRecord(b + 1, chosen.cell.group_id, chosen.cell.bucket_id, chosen.raw, chosen.normalized,
                          float(eta), cum, _mean_loss(kind, calib.y, cs.f), _mean_loss(kind, valid.y, vs.f),
                          max_normalized=max_norm)
        if "holdout" in extra:
            rec.holdout_loss = _mean_loss(kind, holdout.y, extra["holdout"].f)
        if "monitor" in extra:
            rec.monitor_loss = _mean_loss(kind, monitor.y, extra["monitor"].f)
        trace.records.append(rec)
        log.debug("iter %d cell (%d,%d) delta %.4g eta %.4g calib loss %.6g", rec.iter, rec.cell_g,
                  rec.cell_l, rec.delta, eta, rec.calib_loss)

        if stopping.kind == "patience":
            cur = rec.monitor_loss if rec.monitor_loss is not None else rec.valid_loss
            if cur < best_monitor - stopping.min_delta:
                best_monitor, best_k = cur, b + 1
                snapshots = {best_k: {k: sp.f.copy() for k, sp in all_splits.items()}}
        decision = should_stop(stopping, trace, calib.n)
        if decision.stop:
            terminated = decision.reason
            if decision.rollback_to is not None:
                k = decision.rollback_to
                snap = snapshots[k]
                for name, sp in all_splits.items():
                    sp.f = snap[name]
                del model.updates[k:]
            break

    model.terminated_by = trace.terminated_by = terminated
    model.meta = {"alpha": config.alpha, "iterations": len(trace.records), "cv_budget": cv_budget,
                  "config": config.to_dict()}
    trace.final = {name: sp.f for name, sp in all_splits.items()}
    return model, trace


def calibrate(calib: Dataset, valid: Dataset, config: BoostConfig, initial: InitialModel,
              holdout: Dataset | None = None, embed_initial: bool = True):
    """Convenience wrapper: predict with ``initial`` on every split, then run."""
    f0_v = None if valid is calib else initial.predict(valid)
    return run(calib, valid, config, initial.predict(calib), f0_v, holdout=holdout,
               f0_holdout=None if holdout is None else initial.predict(holdout),
               initial=initial if embed_initial else None)
