import math

import numpy as np
import pytest

from torentropy.toric.quadrature import (
    graded_rule,
    integrate_fan,
    integrate_simplex,
    log_integrate,
    simplex_rule,
)


@pytest.mark.parametrize('dim', [1, 2, 3])
def test_simplex_rule_weights(dim):
    bary, weights = simplex_rule(dim, 6)
    assert weights.sum() == pytest.approx(1 / math.factorial(dim))
    np.testing.assert_allclose(bary.sum(axis=1), 1.0)


def test_graded_rule_weights():
    _, weights = graded_rule(8, width=1e-3, levels=20)
    assert weights.sum() == pytest.approx(1.0)


def test_polynomial_on_triangle():
    triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    value = integrate_simplex(lambda x: x[:, 0] * x[:, 1], triangle)
    assert value == pytest.approx(1 / 24)


def test_segment_in_the_plane():
    segment = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert integrate_simplex(lambda x: np.ones(len(x)), segment) == pytest.approx(5.0)


def test_log_integrate_beta_integral():
    logf = lambda x: 3 * np.log(x[:, 0]) + 5 * np.log1p(-x[:, 0])
    result = log_integrate(logf, np.array([[[0.0], [1.0]]]), peak=np.array([3 / 8]))
    assert result.converged
    exact = math.lgamma(4) + math.lgamma(6) - math.lgamma(10)
    assert result.log_value == pytest.approx(exact, abs=1e-7)


def test_log_integrate_sharp_peak():
    # a Gaussian of width 1e-2 centred in the unit triangle
    center = np.array([0.3, 0.3])
    logf = lambda x: -np.sum((x - center) ** 2, axis=1) / (2 * 1e-4)
    triangle = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    result = log_integrate(logf, triangle, peak=center)
    assert result.log_value == pytest.approx(math.log(2 * math.pi * 1e-4), abs=1e-6)


def test_fan_integrates_log_singularity():
    bases = np.array([[[0.0]], [[1.0]]])
    value = integrate_fan(lambda x: -0.5 * np.log(x[:, 0] * (1 - x[:, 0])), [0.5], bases)
    assert value == pytest.approx(1.0, abs=1e-8)


def test_fan_on_triangle():
    apex = np.array([1 / 3, 1 / 3])
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    bases = np.array([vertices[[0, 1]], vertices[[1, 2]], vertices[[2, 0]]])
    assert integrate_fan(lambda x: np.ones(len(x)), apex, bases) == pytest.approx(0.5)
    # -log x_1 integrates to 3/4 over the unit triangle
    value = integrate_fan(lambda x: -np.log(x[:, 0]), apex, bases)
    assert value == pytest.approx(0.75, abs=1e-7)
