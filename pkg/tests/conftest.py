import numpy as np
import pytest

from mcboost.dataset import Dataset
from mcboost.simgen import SimConfig, generate


def make_data(x_cont=None, x_cat=None, y=None, **kw) -> Dataset:
    y = np.asarray(y, float)
    n = y.shape[0]
    xc = np.empty((n, 0)) if x_cont is None else np.asarray(x_cont, float).reshape(n, -1)
    xd = np.empty((n, 0), np.int64) if x_cat is None else np.asarray(x_cat, np.int64).reshape(n, -1)
    return Dataset(xc, xd, y, **kw)


def random_groups_data(rng, n, n_groups=4):
    """Continuous features, one categorical group column with n_groups levels."""
    g = np.arange(n) % n_groups
    rng.shuffle(g)
    xc = rng.normal(size=(n, 2))
    y = xc[:, 0] + 0.5 * g + rng.normal(size=n)
    return make_data(xc, g[:, None], y, cont_names=("x1", "x2"), cat_names=("g",),
                     cat_levels=(tuple(float(k) for k in range(n_groups)),))


@pytest.fixture(scope="session")
def sim2000():
    return generate(SimConfig(n=2000, seed=11))[0]


@pytest.fixture(scope="session")
def sim_test():
    return generate(SimConfig(n=3000, seed=12))[0]
