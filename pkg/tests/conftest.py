import math

import numpy as np
import pytest
from scipy.special import gammaln

from torentropy.toric.bergman import build_table, tampered_pair
from torentropy.toric.potentials import FubiniStudyPair, RoundSpherePair


def binomial_log_q(k: int) -> np.ndarray:
    """``log(alpha! (k - alpha)! / (k + 1)!)`` for alpha = 0..k"""
    alpha = np.arange(k + 1)
    return gammaln(alpha + 1) + gammaln(k - alpha + 1) - gammaln(k + 2)


def binomial_pmf(k: int, p: float) -> np.ndarray:
    return np.array([math.comb(k, j) * p**j * (1 - p) ** (k - j) for j in range(k + 1)])


@pytest.fixture(scope='session')
def fs1() -> FubiniStudyPair:
    return FubiniStudyPair(1)


@pytest.fixture(scope='session')
def fs2() -> FubiniStudyPair:
    return FubiniStudyPair(2)


@pytest.fixture(scope='session')
def sphere() -> RoundSpherePair:
    return RoundSpherePair(1.0)


@pytest.fixture(scope='session')
def fs1_tables(fs1):
    return {k: build_table(fs1, k) for k in range(1, 21)}


@pytest.fixture(scope='session')
def tampered():
    return tampered_pair()


@pytest.fixture(scope='session')
def tampered_tables(tampered):
    return {k: build_table(tampered, k) for k in range(1, 7)}
