import numpy as np
import pytest

from efm.simulation import SimDesign, generate


def single_index_data(n=300, d=3, seed=0, noise=0.1, beta=None):
    """Uniform covariates, smooth link, Gaussian noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, (n, d))
    if beta is None:
        beta = np.zeros(d)
        beta[:2] = [2.0, 1.0]
    beta = np.asarray(beta, dtype=float) / np.linalg.norm(beta)
    t = X @ beta
    y = np.sin(2.0 * t) + t**2 + noise * rng.standard_normal(n)
    return X, y, beta


@pytest.fixture
def smooth_data():
    return single_index_data()


@pytest.fixture(scope="session")
def ex1a_small():
    return generate(SimDesign("Ex1A", d=6, n=300, seed=3))
