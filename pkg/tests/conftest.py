import numpy as np
import pytest

from hierprox.problem import Coefficients, DesignData, PenaltyConfig
from hierprox.prox import ProxInput


def random_data(rng, n, p, standardize=True):
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    return DesignData.prepare(X, y, standardize=standardize)


def random_coef(rng, p, density=0.5, scale=1.0):
    beta = rng.standard_normal(p) * scale * (rng.random(p) < density)
    theta = {}
    for i in range(p):
        for j in range(i + 1, p):
            if rng.random() < density:
                theta[(i, j)] = float(rng.standard_normal() * scale)
    return Coefficients(beta, theta)


def random_prox_input(rng, p, regime=None):
    """A ProxInput with every pair supplied and a randomly chosen lambda regime."""
    regime = regime or rng.choice(["mixed", "lam2_zero", "lam1_big", "small", "lam1_zero"])
    L = float(rng.uniform(0.5, 3.0))
    bt = rng.standard_normal(p) * rng.uniform(0.2, 3.0)
    theta = {}
    for i in range(p):
        for j in range(i + 1, p):
            if rng.random() < 0.7:
                theta[(i, j)] = float(rng.standard_normal() * rng.uniform(0.2, 2.0))
    lam1 = float(rng.uniform(0.1, 2.0))
    lam2 = float(rng.uniform(0.0, 1.0))
    if regime == "lam2_zero":
        lam2 = 0.0
    elif regime == "lam1_big":
        lam1 = float(rng.uniform(10.0, 100.0))
    elif regime == "small":
        lam1, lam2 = lam1 * 0.05, lam2 * 0.05
    elif regime == "lam1_zero":
        lam1 = 0.0
    return ProxInput(bt, theta, L, PenaltyConfig(lam1, lam2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
