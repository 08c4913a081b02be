import math

import numpy as np
import pytest
from conftest import binomial_pmf
from scipy.stats import binom, entropy as scipy_entropy

from torentropy.errors import (
    BoundaryProximityError,
    DimensionMismatchError,
    DomainError,
    InputError,
    ScaleMismatchError,
    TableError,
)
from torentropy.settings import settings
from torentropy.toric.bergman import NormingTable, build_table
from torentropy.toric.measures import (
    LatticeMeasure,
    bergman_measure,
    bergman_measure_at,
    bernstein,
    convolution_power,
    convolution_power_check,
    convolve,
    entropy,
    lattice_states,
    ldp_residual,
    moments,
    rate_function,
    wright_fisher_matrix,
)
from torentropy.toric.polytope import DelzantPolytope
from torentropy.toric.potentials import GuilleminPair


@pytest.mark.parametrize('x', [0.1, 0.5, 0.8])
def test_fubini_study_measure_is_binomial(fs1, fs1_tables, x):
    measure = bergman_measure(fs1, fs1_tables[12], x)
    assert measure.level == 12
    np.testing.assert_allclose(measure.weights, binomial_pmf(12, x), atol=1e-13)
    np.testing.assert_allclose(measure.positions.ravel(), np.arange(13) / 12)


def test_fubini_study_plane_measure_is_multinomial(fs2):
    table = build_table(fs2, 3)
    measure = bergman_measure(fs2, table, [0.2, 0.5]).as_dict()
    # alpha = (1, 1) leaves alpha_0 = 1 for the remaining probability 0.3
    assert measure[(1, 1)] == pytest.approx(6 * 0.2 * 0.5 * 0.3)
    assert measure[(0, 3)] == pytest.approx(0.5**3)
    assert sum(measure.values()) == pytest.approx(1.0)


def test_measure_at_log_coordinate(fs1, fs1_tables):
    measure = bergman_measure_at(fs1, fs1_tables[6], 0.0)
    np.testing.assert_allclose(measure.weights, binomial_pmf(6, 0.5), atol=1e-14)


def test_measure_takes_a_single_point(fs1, fs1_tables):
    with pytest.raises(DimensionMismatchError):
        bergman_measure(fs1, fs1_tables[3], [0.2, 0.4])


def test_entropy_and_moments(fs1, fs1_tables):
    measure = bergman_measure(fs1, fs1_tables[20], 0.3)
    assert entropy(measure) == pytest.approx(scipy_entropy(binom.pmf(range(21), 20, 0.3)))
    mean, cov = moments(measure)
    np.testing.assert_allclose(mean, [0.3], atol=1e-13)
    np.testing.assert_allclose(cov, [[0.3 * 0.7 / 20]], atol=1e-13)


def test_entropy_ignores_empty_atoms():
    measure = LatticeMeasure(2, [[0], [1], [2]], [0.0, -np.inf, -np.inf])
    assert entropy(measure) == 0.0


def test_measure_validation():
    with pytest.raises(InputError, match='sum to one'):
        LatticeMeasure(1, [[0], [1]], np.log([0.5, 0.6]))
    with pytest.raises(InputError, match='duplicate'):
        LatticeMeasure(1, [[0], [0]], np.log([0.5, 0.5]))
    with pytest.raises(InputError, match='length'):
        LatticeMeasure(1, [[0], [1]], [0.0])


def test_convolution_identity(fs1, fs1_tables):
    measure = bergman_measure(fs1, fs1_tables[3], 0.4)
    same = convolve(LatticeMeasure.identity(1), measure)
    assert same.level == 3
    assert same.as_dict() == pytest.approx(measure.as_dict())
    assert convolution_power(measure, 0).as_dict() == {(0,): 1.0}


def test_convolution_is_associative(fs2):
    table = build_table(fs2, 1)
    mu = bergman_measure(fs2, table, [0.3, 0.3])
    nu = bergman_measure(fs2, table, [0.1, 0.6])
    left = convolve(convolve(mu, nu), mu)
    right = convolve(mu, convolve(nu, mu))
    assert left.level == right.level == 3
    assert left.as_dict() == pytest.approx(right.as_dict(), abs=1e-14)


def test_convolution_of_bernoulli_is_binomial(fs1, fs1_tables):
    power = convolution_power(bergman_measure(fs1, fs1_tables[1], 0.35), 9)
    np.testing.assert_allclose(power.weights, binomial_pmf(9, 0.35), atol=1e-14)


def test_convolution_needs_equal_rank(fs1, fs2, fs1_tables):
    line = bergman_measure(fs1, fs1_tables[1], 0.5)
    plane = bergman_measure(fs2, build_table(fs2, 1), [0.3, 0.3])
    with pytest.raises(ScaleMismatchError):
        convolve(line, plane)


def test_fubini_study_is_a_convolution_sequence(fs1, fs1_tables):
    report = convolution_power_check(fs1, list(fs1_tables.values()))
    assert report.verdict == 'pass'
    assert report.label == 'convolution sequence'
    assert report.residuals['max_deviation'] < 1e-12


def test_convolution_check_with_level_one_only(fs1, fs1_tables):
    assert convolution_power_check(fs1, [fs1_tables[1]]).passed


def test_tampered_potential_is_not_a_convolution_sequence(tampered, tampered_tables):
    report = convolution_power_check(tampered, list(tampered_tables.values()))
    assert report.verdict == 'fail'
    assert report.label == 'not a convolution sequence'


def test_convolution_check_needs_level_one(fs1, fs1_tables):
    with pytest.raises(TableError):
        convolution_power_check(fs1, [fs1_tables[2], fs1_tables[3]])


def test_rate_function(fs1):
    rate = rate_function(fs1, 0.5)
    assert rate(0.5) == pytest.approx(0.0, abs=1e-14)
    # relative entropy of Bernoulli(x) against Bernoulli(1/2)
    assert rate(0.2) == pytest.approx(0.2 * math.log(0.4) + 0.8 * math.log(1.6))
    assert rate(0.0) == pytest.approx(math.log(2))
    assert rate.gradient(0.5) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        rate(1.1)


def test_rate_function_in_the_plane(fs2):
    rate = rate_function(fs2, [1 / 3, 1 / 3])
    values = rate(fs2.polytope.interior_grid(5))
    assert (values >= 0).all()
    assert rate([1 / 3, 1 / 3]) == pytest.approx(0.0, abs=1e-12)


def test_large_deviation_residual_decays(fs1, fs1_tables):
    first = ldp_residual(fs1, build_table(fs1, 64), 0.3)
    second = ldp_residual(fs1, build_table(fs1, 256), 0.3)
    assert second < 0.8 * first
    assert second <= 2 * math.log(257) / 256


def test_large_deviation_level_mismatch(fs1, fs1_tables):
    with pytest.raises(TableError):
        ldp_residual(fs1, fs1_tables[4], 0.3, k=5)


def test_bernstein_reproduces_affine_functions(fs1, fs2, fs1_tables):
    x = np.array([0.2, 0.5, 0.7])
    np.testing.assert_allclose(bernstein(fs1, fs1_tables[10], lambda p: np.ones(len(p)), x), 1)
    np.testing.assert_allclose(bernstein(fs1, fs1_tables[10], lambda p: p[:, 0], x), x)
    table = build_table(fs2, 4)
    value = bernstein(fs2, table, lambda p: 2 * p[:, 0] - p[:, 1], [0.1, 0.6])
    assert value == pytest.approx(2 * 0.1 - 0.6)


def test_bernstein_of_a_square(fs1, fs1_tables):
    # sum (alpha/k)^2 binomial = x^2 + x (1 - x) / k
    value = bernstein(fs1, fs1_tables[10], lambda p: p[:, 0] ** 2, 0.3)
    assert value == pytest.approx(0.09 + 0.21 / 10)


def test_lattice_states(fs1, fs1_tables, fs2):
    np.testing.assert_allclose(lattice_states(fs1, fs1_tables[4]).ravel(), np.arange(5) / 4)
    inner = lattice_states(fs1, fs1_tables[4], margin=settings.eps_int)
    np.testing.assert_allclose(inner.ravel(), [0.25, 0.5, 0.75])
    table = build_table(fs2, 4)
    assert len(lattice_states(fs2, table)) == 15
    assert len(lattice_states(fs2, table, margin=settings.eps_int)) == 3


def test_wright_fisher_matrix_is_binomial(fs1, fs1_tables):
    table = fs1_tables[8]
    states = lattice_states(fs1, table)
    matrix = wright_fisher_matrix(fs1, table, states)
    assert matrix.shape == (9, 9)
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)
    expected = binom.pmf(np.arange(9)[None, :], 8, states)
    np.testing.assert_allclose(matrix, expected, atol=1e-13)
    np.testing.assert_array_equal(matrix[0], np.eye(9)[0])
    np.testing.assert_array_equal(matrix[-1], np.eye(9)[-1])


@pytest.mark.parametrize(
    ('state', 'probabilities'),
    [
        ([0.5, 0.0], [0.5, 0.5, 0.0]),
        ([0.0, 0.25], [0.75, 0.0, 0.25]),
        ([0.25, 0.75], [0.0, 0.25, 0.75]),
    ],
)
def test_wright_fisher_rows_on_edges_are_face_multinomials(fs2, state, probabilities):
    table = build_table(fs2, 4)
    row = wright_fisher_matrix(fs2, table, [state])[0]
    p0, p1, p2 = probabilities
    expected = []
    for a1, a2 in table.points:
        a0 = 4 - a1 - a2
        coefficient = math.factorial(4) / (
            math.factorial(a0) * math.factorial(a1) * math.factorial(a2)
        )
        expected.append(coefficient * p0**a0 * p1**a1 * p2**a2)
    np.testing.assert_allclose(row, expected, atol=1e-8)


def test_wright_fisher_row_at_a_vertex_is_a_point_mass(fs2):
    table = build_table(fs2, 3)
    row = wright_fisher_matrix(fs2, table, [[0.0, 1.0]])[0]
    np.testing.assert_array_equal(row, np.eye(len(table))[table.lattice.index[(0, 3)]])


def test_wright_fisher_square_matrix_on_the_triangle(fs2):
    table = build_table(fs2, 3)
    matrix = wright_fisher_matrix(fs2, table, lattice_states(fs2, table))
    assert matrix.shape == (10, 10)
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)


def test_wright_fisher_single_state():
    polytope = DelzantPolytope.from_facets([[1], [-1]], ['1/3', '-2/3'])
    pair = GuilleminPair(polytope)
    table = NormingTable(polytope.lattice_points(2), np.zeros(1), 'given')
    np.testing.assert_allclose(wright_fisher_matrix(pair, table, [[0.5]]), [[1.0]])


def test_wright_fisher_rejects_states_near_the_boundary(fs1, fs1_tables):
    with pytest.raises(BoundaryProximityError):
        wright_fisher_matrix(fs1, fs1_tables[8], [[1e-9]])
    with pytest.raises(DomainError):
        wright_fisher_matrix(fs1, fs1_tables[8], [[1.5]])
