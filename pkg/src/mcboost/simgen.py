"""Synthetic benchmark: heteroskedastic regression with categorical group effects.

Random numbers come from numpy's Philox4x64 counter-based generator. A master
seed is expanded with ``SeedSequence`` into three independent streams
(continuous covariates, categorical covariates, noise), so changing ``n``
never reshuffles which stream feeds which quantity. Normal variates use the
inverse CDF of open-interval uniforms ``(k + 0.5) / 2**53``, which is
platform independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .dataset import Dataset
from .errors import ConfigError

BETA = (1.2, 0.9, 0.6, 0.4, 0.2)
SIGMA_FLOOR = 1e-6
CONT_NAMES = ("x1", "x2", "x3", "x4", "x5")
CAT_NAMES = ("x6", "x7")


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    sigma_base: float = 0.5
    seed: int = 0
    beta: tuple[float, ...] = field(default=BETA)
    p_cat: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not self.sigma_base > 0:
            raise ConfigError("sigma_base must be positive")
        if len(self.beta) != 5:
            raise ConfigError("beta must have 5 entries")


def streams(seed, k: int = 3) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(k)]


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.integers(0, 2 ** 53, size=size, dtype=np.uint64).astype(float) + 0.5) / 2.0 ** 53


def std_normal(rng: np.random.Generator, size) -> np.ndarray:
    return ndtri(open_uniform(rng, size))


def f1(xc: np.ndarray, beta=BETA) -> np.ndarray:
    x1, x2 = xc[:, 0], xc[:, 1]
    return xc @ np.asarray(beta) + 0.8 * np.sin(x1) - 0.5 * (x2 ** 2 - 1) + 0.4 * x1 * x2


def f2(xd: np.ndarray) -> np.ndarray:
    x6, x7 = xd[:, 0], xd[:, 1]
    return -0.7 * x6 + 0.8 * x7 + 0.4 * x6 * x7


def sigma(xc: np.ndarray, xd: np.ndarray, sigma_base: float = 0.5) -> np.ndarray:
    s = sigma_base * (1 + 0.2 * xc[:, 0] + 0.3 * xd[:, 0] + 0.25 * xd[:, 1])
    return np.maximum(s, SIGMA_FLOOR)


def f_star(xc: np.ndarray, xd: np.ndarray, beta=BETA) -> np.ndarray:
    return f1(xc, beta) + f2(xd)


def generate(config: SimConfig) -> tuple[Dataset, np.ndarray]:
    """Draw a dataset; returns it with the true regression function values."""
    r_cont, r_cat, r_noise = streams(config.seed)
    n = config.n
    xc = std_normal(r_cont, (n, 5))
    u = open_uniform(r_cat, (n, 2))
    xd = (u < np.asarray(config.p_cat)).astype(np.int64)
    truth = f_star(xc, xd, config.beta)
    y = truth + sigma(xc, xd, config.sigma_base) * std_normal(r_noise, n)
    data = Dataset(x_cont=xc, x_cat=xd, y=y, cont_names=CONT_NAMES, cat_names=CAT_NAMES,
                   cat_levels=((0.0, 1.0), (0.0, 1.0)), extras={"truth": truth})
    return data, truth


def true_conditional_quantile(x_cont, x_cat, tau: float, config: SimConfig | None = None):
    """f*(x) + sigma(x) * Phi^{-1}(tau) under the Gaussian noise model."""
    config = config or SimConfig()
    xc = np.atleast_2d(np.asarray(x_cont, float))
    xd = np.atleast_2d(np.asarray(x_cat, float))
    q = f_star(xc, xd, config.beta) + sigma(xc, xd, config.sigma_base) * ndtri(tau)
    return q if np.ndim(x_cont) > 1 else float(q[0])


def true_quantile_of(data: Dataset, tau: float, config: SimConfig | None = None) -> np.ndarray:
    return true_conditional_quantile(data.x_cont, data.x_cat, tau, config)


def replication_seeds(base_seed: int, n_reps: int) -> list[int]:
    """Independent per-replication seeds derived from one base seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_reps)]
