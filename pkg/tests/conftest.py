import numpy as np
import pytest

import uewkit as uk

X = 2.0 / 3.0


@pytest.fixture(scope="session")
def params23():
    return uk.ThreeOutcomeParams(X, 0.0)


@pytest.fixture(scope="session")
def povm23(params23):
    return uk.build_three_outcome(params23)


@pytest.fixture(scope="session")
def pair23(povm23):
    """Default test/constraint operators at x = 2/3, theta = 0."""
    l_op = uk.product_operator([povm23, povm23], [2, 2])
    c_op = uk.product_operator([povm23, povm23], [1, 1])
    return l_op, c_op


@pytest.fixture(scope="session")
def fast():
    """Reduced multistart budget for unit tests; anchors verified at 16."""
    return uk.OptimizerSettings(restarts=16, warm_restarts=4)


@pytest.fixture(scope="session")
def attainable23(pair23, fast):
    return uk.attainable_constraint_range(pair23[1], fast)


def bell_state():
    vec = np.zeros(4)
    vec[0] = vec[3] = 1.0 / np.sqrt(2.0)
    return uk.PureState((2, 2), vec)
