"""Tabular data model, CSV ingestion and calibration/validation splitting."""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

ROLES = ("cont", "cat", "y", "weight", "extra")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-typed table.

    ``x_cat`` holds dense integer codes; ``cat_levels[j]`` maps code k back to
    the original value of categorical column j. ``extras`` carries passthrough
    columns (simulation truth, stored initial predictions, ...).
    """

    x_cont: np.ndarray
    x_cat: np.ndarray
    y: np.ndarray
    cont_names: tuple[str, ...] = ()
    cat_names: tuple[str, ...] = ()
    cat_levels: tuple[tuple[float, ...], ...] = ()
    weights: np.ndarray | None = None
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = y.shape[0]
        x_cont = np.asarray(self.x_cont, dtype=float).reshape(n, -1)
        x_cat = np.asarray(self.x_cat, dtype=np.int64).reshape(n, -1)
        cont_names = tuple(self.cont_names) or tuple(f"c{j}" for j in range(x_cont.shape[1]))
        cat_names = tuple(self.cat_names) or tuple(f"d{j}" for j in range(x_cat.shape[1]))
        if len(cont_names) != x_cont.shape[1] or len(cat_names) != x_cat.shape[1]:
            raise DataError("feature name count does not match column count")
        levels = tuple(tuple(lv) for lv in self.cat_levels)
        if not levels:
            levels = tuple(
                tuple(float(k) for k in range(int(x_cat[:, j].max(initial=-1)) + 1))
                for j in range(x_cat.shape[1])
            )
        if len(levels) != x_cat.shape[1]:
            raise DataError("cat_levels must have one entry per categorical column")
        for j, lv in enumerate(levels):
            col = x_cat[:, j]
            if col.size and (col.min() < 0 or col.max() >= len(lv)):
                raise DataError(f"categorical column {cat_names[j]!r} has codes outside [0, {len(lv)})")
        weights = None
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if weights.shape[0] != n:
                raise DataError("weights length does not match n")
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise DataError("weights must be finite and nonnegative")
        extras = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.extras.items()}
        for k, v in extras.items():
            if v.shape[0] != n:
                raise DataError(f"extra column {k!r} length does not match n")
        for arr in (y, x_cont, x_cat, weights, *extras.values()):
            if arr is not None:
                arr.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "y", y)
        set_(self, "x_cont", x_cont)
        set_(self, "x_cat", x_cat)
        set_(self, "cont_names", cont_names)
        set_(self, "cat_names", cat_names)
        set_(self, "cat_levels", levels)
        set_(self, "weights", weights)
        set_(self, "extras", extras)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_levels(self) -> tuple[int, ...]:
        return tuple(len(lv) for lv in self.cat_levels)

    @property
    def feature_names(self) -> list[str]:
        return list(self.cont_names) + list(self.cat_names)

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            x_cont=self.x_cont[idx],
            x_cat=self.x_cat[idx],
            y=self.y[idx],
            cont_names=self.cont_names,
            cat_names=self.cat_names,
            cat_levels=self.cat_levels,
            weights=None if self.weights is None else self.weights[idx],
            extras={k: v[idx] for k, v in self.extras.items()},
        )

    def with_extras(self, **cols) -> "Dataset":
        extras = dict(self.extras)
        extras.update(cols)
        return Dataset(self.x_cont, self.x_cat, self.y, self.cont_names, self.cat_names,
                       self.cat_levels, self.weights, extras)

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.x_cont, self.x_cat, self.y, self.cont_names, self.cat_names,
                       self.cat_levels, weights, self.extras)

    def cat_index(self, name: str) -> int:
        try:
            return self.cat_names.index(name)
        except ValueError:
            if name in self.cont_names:
                raise ConfigError(f"column {name!r} is continuous; groups need categorical columns")
            raise ConfigError(f"unknown categorical column {name!r}")

    def column(self, name: str) -> np.ndarray:
        if name in self.cont_names:
            return self.x_cont[:, self.cont_names.index(name)]
        if name in self.cat_names:
            return self.x_cat[:, self.cat_names.index(name)].astype(float)
        if name in self.extras:
            return self.extras[name]
        if name == "y":
            return self.y
        raise DataError(f"no column named {name!r}")


def concat(parts: list[Dataset]) -> Dataset:
    first = parts[0]
    weights = None
    if all(p.weights is not None for p in parts):
        weights = np.concatenate([p.weights for p in parts])
    keys = set(first.extras)
    for p in parts[1:]:
        keys &= set(p.extras)
    return Dataset(
        x_cont=np.concatenate([p.x_cont for p in parts]),
        x_cat=np.concatenate([p.x_cat for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        cont_names=first.cont_names,
        cat_names=first.cat_names,
        cat_levels=first.cat_levels,
        weights=weights,
        extras={k: np.concatenate([p.extras[k] for p in parts]) for k in sorted(keys)},
    )


# ---------------------------------------------------------------------------
# CSV


def parse_schema(text: str) -> dict[str, str]:
    """``"cont:x1,cont:x2,cat:x6,y:y,weight:w"`` -> ``{"x1": "cont", ...}``."""
    schema: dict[str, str] = {}
    for item in filter(None, (t.strip() for t in text.split(","))):
        role, sep, name = item.partition(":")
        if not sep or role not in ROLES or not name:
            raise ConfigError(f"bad schema entry {item!r}; use role:column with role in {ROLES}")
        schema[name] = role
    return schema


def infer_schema(header: list[str], rows: list[list[str]]) -> dict[str, str]:
    """Guess column roles when none are given.

    ``y`` is the outcome, ``weight`` the weight column, ``truth`` and columns
    starting with ``f0``/``q0`` are extras; integer-valued columns with at most
    10 distinct values are categorical and everything else is continuous.
    """
    schema = {}
    for j, name in enumerate(header):
        if name == "y":
            schema[name] = "y"
        elif name == "weight":
            schema[name] = "weight"
        elif name == "truth" or name.startswith(("f0", "q0", "pred")):
            schema[name] = "extra"
        else:
            try:
                vals = {float(r[j]) for r in rows}
            except ValueError:
                schema[name] = "cont"
                continue
            small_int = len(vals) <= 10 and all(float(v).is_integer() for v in vals)
            schema[name] = "cat" if small_int else "cont"
    return schema


def load_csv(path, schema: dict[str, str] | str | None = None,
             cat_levels: dict[str, tuple[float, ...]] | None = None) -> Dataset:
    """Read a CSV with a header row into a Dataset.

    ``cat_levels`` pins the code mapping of categorical columns (e.g. to match
    a training file); unseen values then raise DataError.
    """
    if isinstance(schema, str):
        schema = parse_schema(schema)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except FileNotFoundError:
        raise DataError(f"{path}: no such file")
    if header is None:
        raise DataError(f"{path}: empty file")
    if not rows:
        raise DataError(f"{path}: empty dataset")
    header = [h.strip() for h in header]
    if schema is None:
        schema = infer_schema(header, rows)
    col_of = {name: j for j, name in enumerate(header)}
    for name in schema:
        if name not in col_of:
            raise DataError(f"{path}: missing column {name!r}")
    ys = [c for c, r in schema.items() if r == "y"]
    if len(ys) != 1:
        raise ConfigError("schema must name exactly one outcome column (y:...)")
    ws = [c for c, r in schema.items() if r == "weight"]
    if len(ws) > 1:
        raise ConfigError("schema may name at most one weight column")

    def numeric(name: str) -> np.ndarray:
        j = col_of[name]
        out = np.empty(len(rows))
        for i, r in enumerate(rows):
            try:
                out[i] = float(r[j])
            except (ValueError, IndexError):
                cell = r[j] if j < len(r) else "<missing>"
                raise DataError(f"{path}: row {i + 2}, column {name!r}: non-numeric value {cell!r}")
            if not math.isfinite(out[i]):
                raise DataError(f"{path}: row {i + 2}, column {name!r}: non-finite value")
        return out

    cont = [c for c in header if schema.get(c) == "cont"]
    cats = [c for c in header if schema.get(c) == "cat"]
    extras = [c for c in header if schema.get(c) == "extra"]
    n = len(rows)
    x_cont = np.column_stack([numeric(c) for c in cont]) if cont else np.empty((n, 0))
    codes, levels = [], []
    for c in cats:
        raw = numeric(c)
        if cat_levels and c in cat_levels:
            lv = np.asarray(cat_levels[c], dtype=float)
            pos = np.searchsorted(lv, raw)
            pos_c = np.clip(pos, 0, len(lv) - 1)
            bad = lv[pos_c] != raw
            if bad.any():
                i = int(np.argmax(bad))
                raise DataError(f"{path}: row {i + 2}, column {c!r}: unseen category {raw[i]!r}")
            codes.append(pos_c)
        else:
            lv, inv = np.unique(raw, return_inverse=True)
            codes.append(inv)
        levels.append(tuple(float(v) for v in lv))
    x_cat = np.column_stack(codes).astype(np.int64) if cats else np.empty((n, 0), dtype=np.int64)
    return Dataset(
        x_cont=x_cont,
        x_cat=x_cat,
        y=numeric(ys[0]),
        cont_names=tuple(cont),
        cat_names=tuple(cats),
        cat_levels=tuple(levels),
        weights=numeric(ws[0]) if ws else None,
        extras={c: numeric(c) for c in extras},
    )


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv_text(data: Dataset) -> str:
    header = list(data.cont_names) + list(data.cat_names) + ["y"]
    cols = [data.x_cont[:, j] for j in range(data.x_cont.shape[1])]
    cols += [np.asarray(data.cat_levels[j])[data.x_cat[:, j]] for j in range(data.x_cat.shape[1])]
    cols.append(data.y)
    if data.weights is not None:
        header.append("weight")
        cols.append(data.weights)
    for k, v in data.extras.items():
        header.append(k)
        cols.append(v)
    lines = [",".join(header)]
    # repr() gives the shortest string that round-trips a float64 exactly
    for i in range(data.n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def write_csv(data: Dataset, path) -> None:
    atomic_write_text(path, to_csv_text(data))


def schema_of(data: Dataset) -> dict[str, str]:
    schema = {c: "cont" for c in data.cont_names}
    schema.update({c: "cat" for c in data.cat_names})
    schema["y"] = "y"
    if data.weights is not None:
        schema["weight"] = "weight"
    schema.update({k: "extra" for k in data.extras})
    return schema


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    calib_fraction: float = 0.5
    valid_fraction: float = 0.25
    share_calib_valid: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.calib_fraction <= 1.0:
            raise ConfigError("calib_fraction must lie in (0, 1]")
        if not 0.0 <= self.valid_fraction < 1.0:
            raise ConfigError("valid_fraction must lie in [0, 1)")
        if not self.share_calib_valid and self.calib_fraction + self.valid_fraction > 1.0 + 1e-12:
            raise ConfigError("calib_fraction + valid_fraction must not exceed 1")

    def to_dict(self) -> dict:
        return {"calib_fraction": self.calib_fraction, "valid_fraction": self.valid_fraction,
                "share_calib_valid": self.share_calib_valid, "seed": self.seed}


def canonical_order(data: Dataset) -> np.ndarray:
    """Row order that depends only on row contents, not on input order."""
    keys = [data.y]
    keys += [data.x_cont[:, j] for j in range(data.x_cont.shape[1])]
    keys += [data.x_cat[:, j] for j in range(data.x_cat.shape[1])]
    if data.weights is not None:
        keys.append(data.weights)
    # np.lexsort sorts by the last key first
    return np.lexsort(keys[::-1])


def split_indices(data: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = data.n
    if n < 2:
        raise ConfigError("need at least 2 rows to split")
    order = canonical_order(data)
    perm = order[np.random.Generator(np.random.Philox(spec.seed)).permutation(n)]
    n_cal = int(round(spec.calib_fraction * n))
    if spec.share_calib_valid:
        n_val = 0
    else:
        n_val = int(round(spec.valid_fraction * n))
        n_val = min(n_val, n - n_cal)
    if n_cal == 0:
        raise ConfigError(f"calib_fraction={spec.calib_fraction} leaves the calibration split empty")
    if not spec.share_calib_valid and spec.valid_fraction > 0 and n_val == 0:
        raise ConfigError(f"valid_fraction={spec.valid_fraction} leaves the validation split empty")
    cal = perm[:n_cal]
    val = cal if spec.share_calib_valid else perm[n_cal:n_cal + n_val]
    hold = perm[n_cal + n_val:]
    return cal, val, hold


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded calibration / validation / holdout split.

    With ``share_calib_valid`` the validation split is the calibration split
    itself (same object). Rows are placed in a content-determined order before
    shuffling, so permuting the input rows does not change which rows land
    in which split.
    """
    cal, val, hold = split_indices(data, spec)
    calib = data.subset(cal)
    valid = calib if spec.share_calib_valid else data.subset(val)
    return calib, valid, data.subset(hold)
