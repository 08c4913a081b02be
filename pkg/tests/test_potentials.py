import math

import numpy as np
import pytest

from torentropy.errors import BoundaryProximityError, DomainError, InputError
from torentropy.toric.asymptotics import quadratic_perturbation
from torentropy.toric.bergman import tampered_pair
from torentropy.toric.models import GaugeShift
from torentropy.toric.polytope import DelzantPolytope, simplex
from torentropy.toric.potentials import (
    FubiniStudyPair,
    GuilleminPair,
    KahlerEinsteinPair,
    RoundSpherePair,
    apply_gauge,
    builtin_pair,
    curvature_scalar_L,
    inverse_moment_map,
    ke_gauge_residual,
    legendre_transform,
    moment_map,
    perturb_pair,
    rho_grid,
)
from torentropy.toric.utils import central_hessian, central_jacobian

RHO_1D = np.linspace(-3, 3, 7)[:, None]


@pytest.mark.parametrize(
    'pair', [FubiniStudyPair(1), RoundSpherePair(2.0), KahlerEinsteinPair(1)], ids=repr
)
def test_legendre_identities(pair):
    x = pair.grad_phi(RHO_1D)
    np.testing.assert_allclose(pair.grad_u(x), RHO_1D, atol=1e-10)
    # u(x) + phi(rho) = <x, rho> at dual points
    np.testing.assert_allclose(pair.u(x) + pair.phi(RHO_1D), (x * RHO_1D).sum(axis=1), atol=1e-10)
    products = np.einsum('nij,njk->nik', pair.hess_u(x), pair.hess_phi(RHO_1D))
    np.testing.assert_allclose(products, np.broadcast_to(np.eye(1), products.shape), atol=1e-8)


def test_fubini_study_two_dimensional(fs2):
    rho = rho_grid(2, radius=2.0, n=5)
    x = moment_map(fs2, rho)
    assert fs2.polytope.contains(x, 0).all()
    np.testing.assert_allclose(inverse_moment_map(fs2, x), rho, atol=1e-10)
    products = np.einsum('nij,njk->nik', fs2.hess_u(x), fs2.hess_phi(rho))
    np.testing.assert_allclose(products, np.broadcast_to(np.eye(2), products.shape), atol=1e-8)


def test_curvature_scalar(fs1):
    assert curvature_scalar_L(fs1, 0.5) == pytest.approx(math.log(2))
    np.testing.assert_allclose(
        curvature_scalar_L(fs1, [[0.25], [0.75]]), 0.5 * math.log(16 / 3), rtol=1e-12
    )


def test_curvature_scalar_rejects_boundary(fs1):
    with pytest.raises(BoundaryProximityError):
        curvature_scalar_L(fs1, 0.0)
    with pytest.raises(DomainError):
        curvature_scalar_L(fs1, 1.2)


def test_fubini_study_is_kahler_einstein(fs1):
    assert ke_gauge_residual(fs1, 2.0, -1.0, 0.0, rho_grid(1)) < 1e-12


def test_anticanonical_gauge(fs2):
    pair = KahlerEinsteinPair(2)
    assert ke_gauge_residual(pair, 1.0, 0.0, 0.0, rho_grid(2)) < 1e-10
    np.testing.assert_allclose(pair.polytope.center_of_mass, [0.0, 0.0], atol=1e-14)


def test_round_sphere_is_kahler_einstein(sphere):
    assert ke_gauge_residual(sphere, 2.0, 0.0, 0.0, rho_grid(1)) < 1e-12


def test_guillemin_matches_fubini_study_up_to_constant(fs2):
    guillemin = GuilleminPair(simplex(2))
    x = simplex(2).interior_grid(6)
    np.testing.assert_allclose(guillemin.grad_u(x), fs2.grad_u(x), atol=1e-12)
    np.testing.assert_allclose(guillemin.u(x), fs2.u(x), atol=1e-12)


def test_guillemin_phi_by_duality():
    pair = GuilleminPair(simplex(2))
    rho = rho_grid(2, radius=1.5, n=4)
    np.testing.assert_allclose(pair.phi(rho), FubiniStudyPair(2).phi(rho), atol=1e-9)


def test_numerical_legendre_transform_is_involutive(sphere):
    dual = legendre_transform(sphere.kahler_potential(), dual_domain=lambda x: np.abs(x[:, 0]) < 1)
    x = np.array([[-0.6], [0.0], [0.3]])
    np.testing.assert_allclose(dual(x), sphere.u(x), atol=1e-10)
    back = legendre_transform(dual)
    np.testing.assert_allclose(back(RHO_1D[2:5]), sphere.phi(RHO_1D[2:5]), atol=1e-9)


def test_legendre_transform_outside_range(sphere):
    dual = legendre_transform(sphere.kahler_potential(), dual_domain=lambda x: np.abs(x[:, 0]) < 1)
    with pytest.raises(DomainError):
        dual(np.array([[1.5]]))


def test_gauge_shift_moves_polytope_and_potentials(fs1):
    shift = GaugeShift(c=0.5, b=(0.25,), kv=(2,))
    gauged = apply_gauge(fs1, shift)
    np.testing.assert_allclose(gauged.polytope.vertices, [[0.25], [1.25]])
    x = np.array([[0.5], [0.75]])
    np.testing.assert_allclose(gauged.u(x), fs1.u(x - 0.25) + 2 * (x[:, 0] - 0.25) - 0.5)
    np.testing.assert_allclose(gauged.grad_phi(RHO_1D), fs1.grad_phi(RHO_1D - 2) + 0.25)


def test_gauge_shift_compose_and_inverse(fs1):
    shift = GaugeShift(c=0.5, b=(0.25,), kv=(2,))
    assert apply_gauge(apply_gauge(fs1, shift), shift.inverse(1)) is fs1
    twice = apply_gauge(apply_gauge(fs1, shift), shift)
    np.testing.assert_allclose(twice.phi(RHO_1D), apply_gauge(fs1, shift.compose(shift, 1)).phi(RHO_1D))


def test_gauge_vector_length_mismatch(fs1):
    with pytest.raises(ValueError, match='length 1'):
        apply_gauge(fs1, GaugeShift(b=(0.0, 1.0)))


def test_builtin_pair():
    assert builtin_pair('fs-cp2').dim == 2
    assert builtin_pair('round-sphere', r2=3).polytope.volume == pytest.approx(6.0)
    with pytest.raises(InputError):
        builtin_pair('nonsense')
    with pytest.raises(InputError):
        RoundSpherePair(-1.0)


def _hexagon():
    normals = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]]
    return DelzantPolytope.from_facets(normals, [-1] * 6)


BUILTIN_PAIRS = [
    builtin_pair('fs-cp1'),
    builtin_pair('fs-cp2'),
    builtin_pair('fs-cpm', m=3),
    builtin_pair('fs-cpm', m=1, degree=2),
    builtin_pair('round-sphere', r2=0.5),
    builtin_pair('ke-cpm', m=1),
    builtin_pair('ke-cpm', m=2),
    builtin_pair('guillemin', polytope=simplex(2)),
    builtin_pair('guillemin', polytope=_hexagon()),
    tampered_pair(),
    tampered_pair(m=2, level=2),
]


@pytest.mark.parametrize('pair', BUILTIN_PAIRS, ids=repr)
def test_legendre_involution_on_the_rho_cube(pair):
    rho = rho_grid(pair.dim, radius=4.0, n=5 if pair.dim < 3 else 3)
    x = pair.grad_phi(rho)
    assert pair.polytope.contains(x, 0).all()
    np.testing.assert_allclose(pair.grad_u(x), rho, atol=1e-7)
    np.testing.assert_allclose(pair.u(x) + pair.phi(rho), (x * rho).sum(axis=1), atol=1e-8)


@pytest.mark.parametrize(
    'shift',
    [
        GaugeShift(b=(0.5,)),
        GaugeShift(c=-1.0, b=(-0.25,), kv=(3,)),
        GaugeShift(kv=(-2,)),
    ],
)
@pytest.mark.parametrize('pair', [FubiniStudyPair(1), RoundSpherePair(2.0)], ids=repr)
def test_curvature_scalar_follows_the_polytope(pair, shift):
    b, _ = shift.vectors(1)
    x = pair.polytope.interior_grid(7)
    gauged = apply_gauge(pair, shift)
    np.testing.assert_allclose(
        curvature_scalar_L(gauged, x + np.array(b)), curvature_scalar_L(pair, x), atol=1e-12
    )


def test_curvature_scalar_follows_the_polytope_in_the_plane(fs2):
    shift = GaugeShift(c=0.3, b=(0.5, -0.25), kv=(1, -1))
    x = fs2.polytope.interior_grid(6)
    np.testing.assert_allclose(
        curvature_scalar_L(apply_gauge(fs2, shift), x + np.array([0.5, -0.25])),
        curvature_scalar_L(fs2, x),
        atol=1e-12,
    )


def test_finite_difference_hessian_halving(fs2):
    points = np.array([[0.2, 0.3], [0.5, 0.25]])
    exact = fs2.hess_u(points)
    errors = [
        np.abs(central_hessian(fs2._u, points, step=h) - exact).max() for h in (1e-2, 5e-3)
    ]
    assert 2 <= errors[0] / errors[1] <= 5
    np.testing.assert_allclose(central_hessian(fs2._u, points), exact, atol=1e-4)
    np.testing.assert_allclose(central_jacobian(fs2._grad_u, points), exact, atol=1e-7)


def test_symplectic_perturbation_is_first_order_kahler_perturbation(fs1):
    eta = quadratic_perturbation(fs1.polytope)
    rho = np.linspace(-2, 2, 9)[:, None]
    x = fs1.grad_phi(rho)

    def gap(t: float) -> float:
        moved = perturb_pair(fs1, eta, t).phi(rho)
        return float(np.abs(moved - fs1.phi(rho) - t * eta.value(x)).max())

    assert gap(1e-2) < 1e-3
    assert gap(1e-2) / gap(5e-3) == pytest.approx(4, rel=0.1)
