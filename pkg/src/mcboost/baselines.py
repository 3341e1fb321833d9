"""Initial predictors: OLS, bagged-tree random forest and quantile forest."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .auditors import TreeDirection, direction_from_dict, grow_tree, linear_design, ridge_solve, tree_design
from .dataset import Dataset
from .errors import ConfigError, DataError


def lower_quantile(values, tau: float) -> float:
    """Lower sample quantile: the ceil(tau * m)-th order statistic (1-based)."""
    v = np.sort(np.asarray(values, dtype=float))
    m = v.shape[0]
    if m == 0:
        raise DataError("quantile of an empty sample")
    k = min(max(math.ceil(tau * m) - 1, 0), m - 1)
    return float(v[k])


class InitialModel:
    kind = "base"

    def predict(self, data: Dataset) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class OLSModel(InitialModel):
    intercept: float
    coef: np.ndarray
    features: list[str]
    include_categorical: bool = True
    ridge_fallback: bool = False
    kind = "ols"

    def predict(self, data: Dataset) -> np.ndarray:
        X, names = linear_design(data, self.include_categorical)
        if names != self.features:
            raise DataError(f"schema mismatch: model expects {self.features}, data has {names}")
        out = np.full(data.n, self.intercept)
        for j, b in enumerate(self.coef):
            out += b * X[:, j]
        return out

    def to_dict(self) -> dict:
        return {"kind": "ols", "intercept": self.intercept,
                "coef": dict(zip(self.features, map(float, self.coef))),
                "include_categorical": self.include_categorical,
                "ridge_fallback": self.ridge_fallback}


def fit_ols(data: Dataset, include_categorical: bool = True) -> OLSModel:
    X, names = linear_design(data, include_categorical)
    if data.n <= X.shape[1]:
        raise ConfigError(f"OLS needs more rows ({data.n}) than features ({X.shape[1]})")
    design = np.column_stack([np.ones(data.n), X])
    sol, _, rank, _ = np.linalg.lstsq(design, data.y, rcond=None)
    if rank < design.shape[1]:
        a, beta, _ = ridge_solve(X, data.y, 1e-8 * float(np.trace(X.T @ X)))
        return OLSModel(a, beta, names, include_categorical, ridge_fallback=True)
    return OLSModel(float(sol[0]), sol[1:], names, include_categorical)


@dataclass
class ForestModel(InitialModel):
    trees: list[TreeDirection]
    features: list[str]
    include_categorical: bool = True
    seed: int = 0
    # per-tree in-bag counts; kept in memory for out-of-bag estimates only
    inbag: list[np.ndarray] | None = field(default=None, repr=False)
    kind = "forest"

    def _X(self, data: Dataset) -> np.ndarray:
        X, _, names = tree_design(data, self.include_categorical)
        if names != self.features:
            raise DataError(f"schema mismatch: model expects {self.features}, data has {names}")
        return X

    def predict(self, data: Dataset) -> np.ndarray:
        X = self._X(data)
        out = np.zeros(data.n)
        for t in self.trees:
            out += t.predict_matrix(X)
        return out / len(self.trees)

    def oob_predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Out-of-bag predictions on the training data; NaN where no tree is out-of-bag."""
        if self.inbag is None:
            raise ConfigError("out-of-bag predictions need the in-bag record from fitting")
        X = self._X(data)
        total = np.zeros(data.n)
        count = np.zeros(data.n)
        for t, bag in zip(self.trees, self.inbag):
            oob = bag == 0
            total[oob] += t.predict_matrix(X[oob])
            count[oob] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return total / count, count

    def to_dict(self) -> dict:
        return {"kind": "forest", "features": self.features, "seed": self.seed,
                "include_categorical": self.include_categorical,
                "trees": [t.to_dict() for t in self.trees]}


@dataclass
class QuantileForestModel(ForestModel):
    tau: float = 0.5
    leaf_samples: list[dict[int, np.ndarray]] = field(default_factory=list)
    kind = "quantile_forest"

    def predict(self, data: Dataset, tau: float | None = None) -> np.ndarray:
        tau = self.tau if tau is None else tau
        X = self._X(data)
        leaves = [t.apply_matrix(X) for t in self.trees]
        out = np.empty(data.n)
        for i in range(data.n):
            pooled = np.concatenate([store[lv[i]] for store, lv in zip(self.leaf_samples, leaves)])
            out[i] = lower_quantile(pooled, tau)
        return out

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["kind"] = "quantile_forest"
        d["tau"] = self.tau
        d["leaf_samples"] = [{str(k): v.tolist() for k, v in store.items()} for store in self.leaf_samples]
        return d


def _grow_forest(data: Dataset, target: np.ndarray, n_trees: int, max_depth: int, min_leaf: int,
                 mtry: int | None, seed: int, bootstrap: bool, include_categorical: bool):
    if n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    if data.n < min_leaf:
        raise ConfigError(f"forest needs at least min_leaf={min_leaf} rows")
    X, is_cat, names = tree_design(data, include_categorical)
    p = X.shape[1]
    if mtry is None:
        mtry = max(1, math.ceil(p / 3))
    mtry = min(max(int(mtry), 1), p) if p else 0
    trees, inbag, leaf_samples = [], [], []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.Generator(np.random.Philox(child))
        if bootstrap:
            sample = rng.integers(0, data.n, size=data.n)
        else:
            sample = np.arange(data.n)
        arrays, leaf_rows = grow_tree(X, is_cat, target, max_depth, min_leaf, rng=rng, mtry=mtry,
                                      sample_idx=np.sort(sample))
        trees.append(TreeDirection(*arrays, features=names, include_categorical=include_categorical))
        inbag.append(np.bincount(sample, minlength=data.n))
        leaf_samples.append({k: np.sort(target[v]) for k, v in leaf_rows.items()})
    return trees, inbag, leaf_samples, names


def fit_forest(data: Dataset, n_trees: int = 100, max_depth: int = 8, min_leaf: int = 5,
               mtry: int | None = None, seed: int = 0, bootstrap: bool = True,
               include_categorical: bool = True) -> ForestModel:
    trees, inbag, _, names = _grow_forest(data, data.y, n_trees, max_depth, min_leaf, mtry, seed,
                                          bootstrap, include_categorical)
    return ForestModel(trees, names, include_categorical, seed, inbag)


def fit_quantile_forest(data: Dataset, tau: float, n_trees: int = 100, max_depth: int = 8,
                        min_leaf: int = 5, mtry: int | None = None, seed: int = 0,
                        bootstrap: bool = True, include_categorical: bool = True) -> QuantileForestModel:
    if not 0.0 < tau <= 1.0:
        raise ConfigError("quantile level must lie in (0, 1]")
    trees, inbag, leaf_samples, names = _grow_forest(data, data.y, n_trees, max_depth, min_leaf, mtry,
                                                     seed, bootstrap, include_categorical)
    return QuantileForestModel(trees, names, include_categorical, seed, inbag, tau=tau,
                               leaf_samples=leaf_samples)


def model_from_dict(d: dict) -> InitialModel:
    kind = d["kind"]
    if kind == "ols":
        feats = list(d["coef"].keys())
        return OLSModel(float(d["intercept"]), np.array([d["coef"][f] for f in feats], float), feats,
                        bool(d.get("include_categorical", True)), bool(d.get("ridge_fallback", False)))
    if kind in ("forest", "quantile_forest"):
        trees = [direction_from_dict(t) for t in d["trees"]]
        args = (trees, list(d["features"]), bool(d.get("include_categorical", True)), int(d.get("seed", 0)))
        if kind == "forest":
            return ForestModel(*args)
        stores = [{int(k): np.asarray(v, float) for k, v in s.items()} for s in d["leaf_samples"]]
        return QuantileForestModel(*args, tau=float(d["tau"]), leaf_samples=stores)
    raise DataError(f"unknown initial model kind {kind!r}")
