"""Weak learners fit to scores within a cell.

Each fit returns a Direction: an evaluable function of the covariates that
serializes to plain JSON. Cell restriction for local updates is applied by
the boosting engine, which knows how to recompute cell membership.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import Dataset
from .errors import ConfigError, DataError, EmptyCellError

AUDITOR_KINDS = ("constant", "linear", "tree")


@dataclass(frozen=True)
class AuditorKind:
    kind: str = "tree"
    ridge_lambda: float = 1e-6
    max_depth: int = 3
    min_leaf: int = 5
    include_categorical: bool = True

    def __post_init__(self):
        if self.kind not in AUDITOR_KINDS:
            raise ConfigError(f"unknown auditor {self.kind!r}; expected one of {AUDITOR_KINDS}")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be >= 0")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ConfigError("tree max_depth and min_leaf must be >= 1")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "include_categorical": self.include_categorical}
        if self.kind == "linear":
            d["ridge_lambda"] = self.ridge_lambda
        if self.kind == "tree":
            d.update(max_depth=self.max_depth, min_leaf=self.min_leaf)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AuditorKind":
        return cls(d["kind"], float(d.get("ridge_lambda", 1e-6)), int(d.get("max_depth", 3)),
                   int(d.get("min_leaf", 5)), bool(d.get("include_categorical", True)))


# ---------------------------------------------------------------------------
# design matrices


def _cached(data: Dataset, key, build):
    # datasets are immutable, so derived matrices can live on the instance
    cache = data.__dict__.setdefault("_derived", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


def tree_design(data: Dataset, include_categorical: bool):
    """Raw feature matrix for trees; categorical codes kept as-is."""
    return _cached(data, ("tree", include_categorical), lambda: _tree_design(data, include_categorical))


def sorted_orders(data: Dataset, include_categorical: bool) -> list[np.ndarray]:
    """Stable ascending row order of every tree-design column."""
    def build():
        X = tree_design(data, include_categorical)[0]
        return [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    return _cached(data, ("order", include_categorical), build)


def _tree_design(data: Dataset, include_categorical: bool):
    if include_categorical and data.x_cat.shape[1]:
        X = np.hstack([data.x_cont, data.x_cat.astype(float)])
        names = data.feature_names
        is_cat = np.r_[np.zeros(data.x_cont.shape[1], bool), np.ones(data.x_cat.shape[1], bool)]
    else:
        X = data.x_cont
        names = list(data.cont_names)
        is_cat = np.zeros(data.x_cont.shape[1], bool)
    return X, is_cat, names


def linear_design(data: Dataset, include_categorical: bool):
    """Continuous columns plus drop-first one-hot codes of categoricals."""
    return _cached(data, ("linear", include_categorical), lambda: _linear_design(data, include_categorical))


def _linear_design(data: Dataset, include_categorical: bool):
    cols = [data.x_cont[:, j] for j in range(data.x_cont.shape[1])]
    names = list(data.cont_names)
    if include_categorical:
        for j, cname in enumerate(data.cat_names):
            for k in range(1, len(data.cat_levels[j])):
                cols.append((data.x_cat[:, j] == k).astype(float))
                names.append(f"{cname}=={data.cat_levels[j][k]:g}")
    X = np.column_stack(cols) if cols else np.empty((data.n, 0))
    return X, names


def _check_schema(names: list[str], expected: list[str]):
    if names != expected:
        raise DataError(f"schema mismatch: model expects features {expected}, data has {names}")


# ---------------------------------------------------------------------------
# directions


class Direction:
    kind = "base"

    def evaluate(self, data: Dataset) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class ConstantDirection(Direction):
    value: float
    kind = "constant"

    def evaluate(self, data: Dataset) -> np.ndarray:
        return np.full(data.n, self.value)

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass
class LinearDirection(Direction):
    intercept: float
    coef: np.ndarray
    features: list[str]
    include_categorical: bool = True
    kind = "linear"

    def evaluate(self, data: Dataset) -> np.ndarray:
        X, names = linear_design(data, self.include_categorical)
        _check_schema(names, self.features)
        # column-by-column accumulation: per-row results do not depend on
        # which other rows are present, unlike a blocked matrix product
        out = np.full(data.n, self.intercept)
        for j, b in enumerate(self.coef):
            out += b * X[:, j]
        return out

    def to_dict(self) -> dict:
        return {"kind": "linear", "intercept": self.intercept,
                "coef": dict(zip(self.features, map(float, self.coef))),
                "include_categorical": self.include_categorical}


@dataclass
class TreeDirection(Direction):
    """Binary regression tree stored as parallel node arrays.

    ``feature[i] == -1`` marks a leaf. Numeric splits send ``x <= threshold``
    left; categorical splits send ``x == threshold`` left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    is_cat: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray
    features: list[str]
    include_categorical: bool = True
    kind = "tree"

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply_matrix(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(len(self.feature)):
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            nd = node[rows]
            x = X[rows, feat[internal]]
            thr = self.threshold[nd]
            go_left = np.where(self.is_cat[nd], x == thr, x <= thr)
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def apply(self, data: Dataset) -> np.ndarray:
        X, _, names = tree_design(data, self.include_categorical)
        _check_schema(names, self.features)
        return self.apply_matrix(X)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply_matrix(X)]

    def evaluate(self, data: Dataset) -> np.ndarray:
        return self.value[self.apply(data)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                nodes.append({"leaf_value": float(self.value[i]), "n": int(self.n_node[i])})
            else:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "categorical": bool(self.is_cat[i]), "left": int(self.left[i]),
                              "right": int(self.right[i]), "value": float(self.value[i]),
                              "n": int(self.n_node[i])})
        return {"kind": "tree", "features": self.features,
                "include_categorical": self.include_categorical, "nodes": nodes}


def direction_from_dict(d: dict) -> Direction:
    kind = d["kind"]
    if kind == "constant":
        return ConstantDirection(float(d["value"]))
    if kind == "linear":
        feats = list(d["coef"].keys())
        return LinearDirection(float(d["intercept"]), np.array([d["coef"][f] for f in feats], float),
                               feats, bool(d.get("include_categorical", True)))
    if kind == "tree":
        nodes = d["nodes"]
        m = len(nodes)
        feature = np.full(m, -1, np.int64)
        threshold = np.zeros(m)
        is_cat = np.zeros(m, bool)
        left = np.full(m, -1, np.int64)
        right = np.full(m, -1, np.int64)
        value = np.zeros(m)
        n_node = np.zeros(m, np.int64)
        for i, nd in enumerate(nodes):
            n_node[i] = nd.get("n", 0)
            if "leaf_value" in nd:
                value[i] = nd["leaf_value"]
            else:
                feature[i] = nd["feature"]
                threshold[i] = nd["threshold"]
                is_cat[i] = nd["categorical"]
                left[i] = nd["left"]
                right[i] = nd["right"]
                value[i] = nd.get("value", 0.0)
        return TreeDirection(feature, threshold, is_cat, left, right, value, n_node,
                             list(d["features"]), bool(d.get("include_categorical", True)))
    raise DataError(f"unknown direction kind {kind!r}")


# ---------------------------------------------------------------------------
# fitting


def _masked(scores, mask):
    scores = np.asarray(scores, dtype=float)
    if mask is None:
        idx = np.arange(scores.shape[0])
    else:
        mask = np.asarray(mask)
        idx = np.nonzero(mask)[0] if mask.dtype == bool else mask
    if idx.size == 0:
        raise EmptyCellError("cannot fit a direction on an empty cell")
    return idx


def fit_constant(scores, mask=None) -> ConstantDirection:
    idx = _masked(scores, mask)
    return ConstantDirection(float(np.mean(np.asarray(scores, float)[idx])))


def ridge_solve(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, np.ndarray, bool]:
    """Ridge with an unpenalized intercept via Cholesky on centered normal equations.

    Returns (intercept, coef, fell_back). On a failed or numerically singular
    factorization the penalty is raised to max(lam, 1e-8 * trace).
    """
    n, p = X.shape
    ybar = float(y.mean())
    if p == 0:
        return ybar, np.zeros(0), False
    xbar = X.mean(axis=0)
    Xc = X - xbar
    A = Xc.T @ Xc
    rhs = Xc.T @ (y - ybar)
    tr = float(np.trace(A))
    fell_back = False

    def chol(lmb):
        M = A + lmb * np.eye(p)
        Lc = np.linalg.cholesky(M)
        d = np.diag(Lc)
        if not np.all(np.isfinite(d)) or d.min() ** 2 <= 1e-12 * max(np.diag(M).max(), 1e-300):
            raise np.linalg.LinAlgError("numerically singular")
        return Lc

    try:
        Lc = chol(lam)
    except np.linalg.LinAlgError:
        fell_back = True
        lam2 = max(lam, 1e-8 * tr)
        if lam2 <= 0:
            return ybar, np.zeros(p), True
        try:
            Lc = np.linalg.cholesky(A + lam2 * np.eye(p))
        except np.linalg.LinAlgError:
            return ybar, np.zeros(p), True
    z = solve_triangular(Lc, rhs, lower=True)
    beta = solve_triangular(Lc.T, z, lower=False)
    return ybar - float(xbar @ beta), beta, fell_back


def fit_linear(data: Dataset, scores, mask=None, lam: float = 1e-6,
               include_categorical: bool = True) -> LinearDirection:
    idx = _masked(scores, mask)
    X, names = linear_design(data, include_categorical)
    a, beta, _ = ridge_solve(X[idx], np.asarray(scores, float)[idx], lam)
    return LinearDirection(a, beta, names, include_categorical)


def _best_numeric_split(xs, ss, min_leaf):
    """Best threshold on values already sorted ascending (with their scores)."""
    n = xs.shape[0]
    cs = np.cumsum(ss)
    total = cs[-1]
    cs = cs[:-1]
    nl = np.arange(1, n)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
    if not valid.any():
        return None
    gain = cs ** 2 / nl + (total - cs) ** 2 / (n - nl)
    gain = np.where(valid, gain, -np.inf)
    i = int(np.argmax(gain))  # first maximum: smallest threshold
    a, b = xs[i], xs[i + 1]
    thr = a + (b - a) / 2.0
    if not (a <= thr < b):
        thr = a
    return gain[i] - total ** 2 / n, thr


def _best_categorical_split(x, s, min_leaf):
    """Best one-vs-rest split on small nonnegative integer codes."""
    codes = x.astype(np.int64)
    counts = np.bincount(codes)
    sums = np.bincount(codes, weights=s)
    n = x.shape[0]
    total = s.sum()
    best = None
    for code in np.nonzero(counts)[0]:
        nl = int(counts[code])
        if nl < min_leaf or n - nl < min_leaf:
            continue
        sl = sums[code]
        gain = sl ** 2 / nl + (total - sl) ** 2 / (n - nl) - total ** 2 / n
        if best is None or gain > best[0]:
            best = (gain, float(code))
    return best


def grow_tree(X: np.ndarray, is_cat: np.ndarray, s: np.ndarray, max_depth: int, min_leaf: int,
              rng: np.random.Generator | None = None, mtry: int | None = None,
              sample_idx: np.ndarray | None = None, presorted: list[np.ndarray] | None = None):
    """Greedy CART on squared error.

    Ties between equal-gain splits go to the lowest feature index, then the
    smallest threshold. With ``rng`` and ``mtry`` each node considers a random
    subset of mtry features (random forests). Rows are sorted once per
    feature; each split partitions those orders, so nodes never re-sort.
    ``presorted`` gives full-data orders to filter instead (sample_idx must
    then have no repeated rows).
    Returns node arrays plus the training-row indices that reached each leaf.
    """
    p = X.shape[1]
    feature, threshold, cat, left, right, value, counts = [], [], [], [], [], [], []
    leaf_rows: dict[int, np.ndarray] = {}
    idx0 = np.arange(X.shape[0]) if sample_idx is None else np.asarray(sample_idx)
    if presorted is not None:
        member = np.zeros(X.shape[0], dtype=bool)
        member[idx0] = True
        orders0 = [o[member[o]] for o in presorted]
    else:
        orders0 = [idx0[np.argsort(X[idx0, j], kind="stable")] for j in range(p)]
    goes_left = np.zeros(X.shape[0], dtype=bool)
    stack = [(idx0, orders0, 0, -1, False)]
    while stack:
        idx, orders, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        sv = s[idx]
        n = idx.shape[0]
        mean = float(sv.mean())
        feature.append(-1)
        threshold.append(0.0)
        cat.append(False)
        left.append(-1)
        right.append(-1)
        value.append(mean)
        counts.append(n)
        sse = float(((sv - mean) ** 2).sum())
        if depth >= max_depth or n < 2 * min_leaf or sse <= 1e-14 * max(float((sv ** 2).sum()), 1e-300):
            leaf_rows[node] = idx
            continue
        feats = range(p)
        if rng is not None and mtry is not None and mtry < p:
            feats = np.sort(rng.choice(p, size=mtry, replace=False))
        best = None
        for j in feats:
            o = orders[j]
            if is_cat[j]:
                res = _best_categorical_split(X[o, j], s[o], min_leaf)
            else:
                res = _best_numeric_split(X[o, j], s[o], min_leaf)
            if res is not None and (best is None or res[0] > best[0]):
                best = (res[0], int(j), res[1])
        if best is None or best[0] <= 1e-12 * sse:
            leaf_rows[node] = idx
            continue
        _, j, thr = best
        x = X[idx, j]
        go_left = (x == thr) if is_cat[j] else (x <= thr)
        feature[node] = j
        threshold[node] = thr
        cat[node] = bool(is_cat[j])
        goes_left[idx] = go_left
        lo_orders = [o[goes_left[o]] for o in orders]
        hi_orders = [o[~goes_left[o]] for o in orders]
        goes_left[idx] = False
        # push right first so the left child gets the lower node id
        stack.append((idx[~go_left], hi_orders, depth + 1, node, False))
        stack.append((idx[go_left], lo_orders, depth + 1, node, True))
    arrays = (np.array(feature, np.int64), np.array(threshold, float), np.array(cat, bool),
              np.array(left, np.int64), np.array(right, np.int64), np.array(value, float),
              np.array(counts, np.int64))
    return arrays, leaf_rows


def fit_tree(data: Dataset, scores, mask=None, kind: AuditorKind | None = None) -> TreeDirection:
    kind = kind or AuditorKind("tree")
    idx = _masked(scores, mask)
    X, is_cat, names = tree_design(data, kind.include_categorical)
    arrays, _ = grow_tree(X, is_cat, np.asarray(scores, float), kind.max_depth, kind.min_leaf,
                          sample_idx=idx, presorted=sorted_orders(data, kind.include_categorical))
    return TreeDirection(*arrays, features=names, include_categorical=kind.include_categorical)


def fit_direction(kind: AuditorKind, data: Dataset, scores, mask=None) -> Direction:
    if kind.kind == "constant":
        return fit_constant(scores, mask)
    if kind.kind == "linear":
        return fit_linear(data, scores, mask, kind.ridge_lambda, kind.include_categorical)
    return fit_tree(data, scores, mask, kind)


def evaluate(direction: Direction, data: Dataset, cell_mask=None) -> np.ndarray:
    """h(x) per row, zeroed outside ``cell_mask`` when one is given (local update)."""
    h = direction.evaluate(data)
    if cell_mask is not None:
        h = np.where(np.asarray(cell_mask, bool), h, 0.0)
    return h
