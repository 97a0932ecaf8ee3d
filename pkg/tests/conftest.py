import math

import numpy as np
import pytest

from riskport.dual import DualField
from riskport.market import MarketModel
from riskport.utility import make_crra, make_crra_mixture, make_log, perturb_epsilon

# r = 0.02, b = 0.08, sigma = 0.2: |theta| = 0.3 on [0, 1]
R, THETA, T = 0.02, 0.3, 1.0
# E[H^(1/2)] over [0, 1]: exp(0.5 * mean + 0.125 * variance) with mean=-0.065, variance=0.09
SQRT_H_MEAN = math.exp(0.5 * -0.065 + 0.125 * 0.09)

TIMES = np.array([0.0, 0.25, 0.5, 0.75])
WEALTH = np.geomspace(0.1, 10.0, 40)


def make_market():
    return MarketModel.constant(R, [0.08], [[0.2]], T)


def make_catalog():
    return {
        "log": make_log(),
        "crra0.5": make_crra(0.5),
        "crra2": make_crra(2.0),
        "crra5": make_crra(5.0),
        "mixture": make_crra_mixture([1.0, 1.0], [1.0, 3.0]),
        "eps_crra2": perturb_epsilon(make_crra(2.0), 0.5),
    }


@pytest.fixture(scope="session")
def market():
    return make_market()


@pytest.fixture(scope="session")
def degenerate():
    return MarketModel.constant(0.0, [0.0], [[0.2]], T)


@pytest.fixture(scope="session")
def catalog():
    return make_catalog()


@pytest.fixture(scope="session")
def fields(market, catalog):
    return {k: DualField(market, u) for k, u in catalog.items()}
