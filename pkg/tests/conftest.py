import math

import numpy as np
import pytest

from cauchyflow import AnalyticFlow, Grid

# Frozen closed-form values (computed independently of the library).
# Taylor-Green loop of radius r centred on a cell centre encloses
# 2 sqrt(2) pi r J1(sqrt(2) r) of vorticity flux.
TG_GAMMA = {1.0: 4.837968628469912, 1.4: 7.189612396471419}
CELL_CENTER = [math.pi / 2, math.pi / 2]


@pytest.fixture(scope="session")
def tg():
    return AnalyticFlow.taylor_green_2d()


@pytest.fixture(scope="session")
def abc():
    return AnalyticFlow.abc()


@pytest.fixture(scope="session")
def grid2():
    return Grid.cube(32, 2)


@pytest.fixture(scope="session")
def grid3():
    return Grid.cube(16, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
