"""Entropy asymptotics, maximal-entropy points, Kähler-Einstein checks and Gaussian entropy"""

import asyncio
import logging
import math
from collections.abc import Mapping, Sequence
from typing import NamedTuple

import numpy as np

from torentropy.errors import DomainError, NewtonConvergenceError, QuadratureError, TableError
from torentropy.settings import settings
from torentropy.toric.bergman import NormingTable, build_table
from torentropy.toric.measures import bergman_measure, entropy
from torentropy.toric.models import CheckReport, EntropyCurveRow
from torentropy.toric.polytope import DelzantPolytope
from torentropy.toric.potentials import (
    FieldPerturbation,
    PotentialPair,
    curvature_scalar_L,
    perturb_pair,
    rho_grid,
)
from torentropy.toric.quadrature import integrate_fan
from torentropy.toric.utils import as_points, central_gradient, central_hessian, digest

logger = logging.getLogger(__name__)

__all__ = [
    'EntropyAsymptote',
    'KEFit',
    'MabuchiTerms',
    'MaxEntropyPoint',
    'asymptotic_entropy',
    'balanced_criticality',
    'binomial_entropy_expansion',
    'entropy_error_curve',
    'entropy_ladder_residuals',
    'fit_ke_constants',
    'gaussian_entropy',
    'ke_center_check',
    'mabuchi_functional',
    'mabuchi_terms',
    'max_entropy_point',
    'mean_zero_field',
    'multinomial_refinement',
    'quadratic_perturbation',
    'symplectic_ke_residual',
]


# entropy of the Bergman measures


class EntropyAsymptote:
    """``(x, k) -> (m/2) log(2 pi e k) - L(x)``"""

    def __init__(self, pair: PotentialPair):
        self._pair: PotentialPair = pair

    @property
    def dim(self) -> int:
        return self._pair.dim

    def __call__(self, x, k: int) -> float | np.ndarray:
        if k < 1:
            raise DomainError(f'level must be positive, got {k}', k=k)
        return 0.5 * self.dim * math.log(2 * math.pi * math.e * k) - curvature_scalar_L(
            self._pair, x
        )


def asymptotic_entropy(pair: PotentialPair, x, k: int) -> float | np.ndarray:
    out = EntropyAsymptote(pair)(x, k)
    return float(out) if np.ndim(out) == 0 else out


def binomial_entropy_expansion(p: float, k: int) -> float:
    """Two-term expansion ``1/2 log k + 1/2 (1 + log(2 pi p (1 - p)))`` of the binomial entropy"""
    if not 0 < p < 1:
        raise DomainError(f'p must lie in (0, 1), got {p}', p=p)
    return 0.5 * math.log(k) + 0.5 * (1 + math.log(2 * math.pi * p * (1 - p)))


def multinomial_refinement(p, k: int) -> float:
    """
    Multinomial entropy through order ``1/k``.

    ``1/2 log((2 pi k e)^m prod p_j) + (3(m + 1) - 2 - sum 1/p_j) / (12 k)`` for a probability
    vector ``p`` of length ``m + 1``.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise DomainError('p must be a probability vector with at least two entries')
    if (p <= 0).any() or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
        raise DomainError('p must be strictly positive and sum to one', p=p.tolist())
    m = len(p) - 1
    leading = 0.5 * (m * math.log(2 * math.pi * k * math.e) + float(np.log(p).sum()))
    return leading + (3 * (m + 1) - 2 - float((1 / p).sum())) / (12 * k)


async def _exact_entropies(
    pair: PotentialPair, tables: Sequence[NormingTable], x: np.ndarray
) -> list[float]:
    sem = asyncio.Semaphore(settings.threads)

    async def one(table: NormingTable) -> float:
        async with sem:
            measure = await asyncio.to_thread(bergman_measure, pair, table, x)
            return entropy(measure)

    return await asyncio.gather(*(one(table) for table in tables))


def entropy_error_curve(
    pair: PotentialPair,
    tables: Mapping[int, NormingTable] | Sequence[NormingTable],
    x,
    ks: Sequence[int] | None = None,
) -> list[EntropyCurveRow]:
    """
    Exact entropy of ``mu_k^x`` against the asymptotic formula along a ladder of levels.

    ``ratio`` is ``diff`` divided by the ``diff`` of the previous row.
    """
    by_level = dict(tables) if isinstance(tables, Mapping) else {t.k: t for t in tables}
    ks = sorted(by_level) if ks is None else sorted(set(ks))
    missing = [k for k in ks if k not in by_level]
    if missing:
        raise TableError('no table for some requested levels', missing=missing)
    point, _ = as_points(x, pair.dim)
    if len(point) != 1:
        raise DomainError('the entropy curve is computed at a single point')

    exact = asyncio.run(_exact_entropies(pair, [by_level[k] for k in ks], point[0]))
    rows: list[EntropyCurveRow] = []
    for k, h_exact in zip(ks, exact, strict=True):
        h_asym = asymptotic_entropy(pair, point[0], k)
        diff = h_exact - float(h_asym)
        ratio = diff / rows[-1].diff if rows and rows[-1].diff != 0 else None
        rows.append(EntropyCurveRow(k=k, H_exact=h_exact, H_asym=h_asym, diff=diff, ratio=ratio))
        logger.debug('k=%d: exact %.12g, asymptotic %.12g', k, h_exact, h_asym)
    return rows


def entropy_ladder_residuals(rows: Sequence[EntropyCurveRow]) -> dict[str, float]:
    """
    Decay residuals of an entropy curve.

    ``monotone_violations`` counts the steps where ``|diff|`` does not shrink. ``max_ratio`` is the
    largest ``|diff(4k) / diff(k)|`` over the steps of the ladder that quadruple the level and is
    left out when there are none.
    """
    diffs = np.abs([row.diff for row in rows])
    residuals = {'monotone_violations': float(np.count_nonzero(diffs[1:] >= diffs[:-1]))}
    ratios = [
        abs(b.diff / a.diff) for a, b in zip(rows, rows[1:]) if b.k == 4 * a.k and a.diff != 0
    ]
    if ratios:
        residuals['max_ratio'] = max(ratios)
    return residuals


# maximal entropy


class MaxEntropyPoint(NamedTuple):
    x: np.ndarray
    L: float  # noqa: N815
    unique: bool
    iterations: int


def _log_curvature(pair: PotentialPair):
    def L(points: np.ndarray) -> np.ndarray:  # noqa: N802
        _, logdet = np.linalg.slogdet(pair._hess_u(points))
        return 0.5 * logdet

    return L


def max_entropy_point(
    pair: PotentialPair,
    *,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> MaxEntropyPoint:
    """
    Minimize ``L`` over the interior of P by damped Newton from the center of mass.

    ``L`` blows up at ∂P, so a step is halved until the trial point is inside and ``L`` does
    not increase. Derivatives of ``L`` are central differences. ``unique`` is set when every
    Hessian met on the way, and the one at the minimum, is positive definite.
    """
    max_iter = settings.newton_max_iter if max_iter is None else max_iter
    polytope = pair.polytope
    L = _log_curvature(pair)  # noqa: N806
    x = polytope.center_of_mass.copy()
    value = float(L(x[None, :])[0])
    convex = True
    iterates = [x.tolist()]

    for iteration in range(1, max_iter + 1):
        grad = central_gradient(L, x[None, :], step=1e-4)[0]
        hess = central_hessian(L, x[None, :], step=1e-3)[0]
        if np.linalg.eigvalsh(hess).min() > 0:
            direction = -np.linalg.solve(hess, grad)
        else:
            convex = False
            direction = -grad
        scale = 1.0
        for _ in range(60):
            trial = x + scale * direction
            if polytope.contains(trial, settings.eps_int):
                trial_value = float(L(trial[None, :])[0])
                if trial_value <= value + 1e-14 * (1 + abs(value)):
                    break
            scale *= 0.5
        else:
            trial, trial_value = x, value
        step = np.linalg.norm(trial - x)
        x, value = trial, trial_value
        iterates.append(x.tolist())
        if step <= tol * (1 + np.linalg.norm(x)) or np.linalg.norm(grad) <= tol:
            hess = central_hessian(L, x[None, :], step=1e-3)[0]
            unique = convex and bool(np.linalg.eigvalsh(hess).min() > 0)
            logger.info('maximal-entropy point of %r: %s after %d steps', pair, x, iteration)
            return MaxEntropyPoint(x=x, L=value, unique=unique, iterations=iteration)

    raise NewtonConvergenceError(
        'minimization of L did not converge', last_iterate=x.tolist(), iterates=iterates[-5:]
    )


# Kähler-Einstein constants


class KEFit(NamedTuple):
    a: float
    b: np.ndarray
    c: float
    residual: float


def fit_ke_constants(pair: PotentialPair, a: float | None = None, rho=None) -> KEFit:
    """
    Least-squares fit of ``-log det hess phi = a phi + <b, rho> + c`` on a rho-grid.

    With ``a`` given only ``b`` and ``c`` are fitted. ``residual`` is the largest pointwise
    misfit on the grid.
    """
    rho = rho_grid(pair.dim) if rho is None else as_points(rho, pair.dim)[0]
    _, logdet = np.linalg.slogdet(pair._hess_phi(rho))
    target = -logdet
    phi = pair._phi(rho)
    ones = np.ones((len(rho), 1))
    if a is None:
        design = np.hstack([phi[:, None], rho, ones])
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        a, b, c = float(coef[0]), coef[1:-1], float(coef[-1])
    else:
        design = np.hstack([rho, ones])
        coef, *_ = np.linalg.lstsq(design, target - a * phi, rcond=None)
        b, c = coef[:-1], float(coef[-1])
    residual = float(np.abs(target - a * phi - rho @ b - c).max())
    return KEFit(a=float(a), b=b, c=c, residual=residual)


def symplectic_ke_residual(pair: PotentialPair, fit: KEFit, x_grid=None) -> float:
    """``max |2 L - <a x + b, grad u> + a u - c|`` on interior points, the u-side KE equation"""
    grid = (
        pair.polytope.interior_grid(9 if pair.dim == 1 else 6)
        if x_grid is None
        else as_points(x_grid, pair.dim)[0]
    )
    _, logdet = np.linalg.slogdet(pair._hess_u(grid))
    lhs = logdet
    rhs = np.einsum('ni,ni->n', fit.a * grid + fit.b, pair._grad_u(grid)) - fit.a * pair._u(
        grid
    ) + fit.c
    return float(np.abs(lhs - rhs).max())


def ke_center_check(
    pair: PotentialPair, a: float | None = None, *, tol: float | None = None
) -> CheckReport:
    """
    For a Kähler-Einstein potential the maximal-entropy point is ``-b / a``, the center of
    mass of P.
    """
    tol = settings.tol_ke if tol is None else tol
    fit = fit_ke_constants(pair, a)
    symplectic = symplectic_ke_residual(pair, fit)
    point = max_entropy_point(pair)
    predicted = -fit.b / fit.a if fit.a != 0 else np.full(pair.dim, np.nan)
    residuals = {
        'ke_residual': fit.residual,
        'symplectic_residual': symplectic,
        'center_offset': float(np.linalg.norm(point.x - predicted)),
        'center_of_mass_offset': float(np.linalg.norm(point.x - pair.polytope.center_of_mass)),
    }
    report = CheckReport(
        name='ke-center',
        inputs_digest=digest({'pair': pair.digest, 'a': a}),
        residuals=residuals,
        tolerances={
            'ke_residual': tol,
            'symplectic_residual': tol,
            'center_offset': 1e-6,
            'center_of_mass_offset': 1e-6,
        },
        details={
            'a': fit.a,
            'b': fit.b.tolist(),
            'c': fit.c,
            'x_star': point.x.tolist(),
            'L_star': point.L,
            'unique': point.unique,
        },
    )
    if fit.residual > tol:
        label = 'not Kähler-Einstein within tolerance'
    else:
        label = 'Kähler-Einstein' if report.passed else 'Kähler-Einstein, center mismatch'
    logger.info('KE check on %r: %s', pair, label)
    return report.model_copy(update={'label': label})


# Mabuchi functional


class MabuchiTerms(NamedTuple):
    integral_L: float  # noqa: N815
    boundary_u: float
    integral_u: float
    boundary_volume: float
    volume: float

    @property
    def default_a(self) -> float:
        return self.boundary_volume / self.volume

    def value(self, a: float | None = None) -> float:
        a = self.default_a if a is None else a
        return self.integral_L + self.boundary_u - a * self.integral_u


def _integrate(f, polytope: DelzantPolytope) -> float:
    value = integrate_fan(f, polytope.barycenter, polytope.boundary_simplices)
    if not math.isfinite(value):
        raise QuadratureError('interior integral is not finite', value=value)
    return value


def mabuchi_terms(pair: PotentialPair) -> MabuchiTerms:
    """The three integrals ``int L``, ``int_∂P u d sigma`` and ``int u`` entering the functional"""
    polytope = pair.polytope
    return MabuchiTerms(
        integral_L=_integrate(_log_curvature(pair), polytope),
        boundary_u=polytope.boundary_integral(pair._u),
        integral_u=_integrate(pair._u, polytope),
        boundary_volume=polytope.boundary_integral(lambda x: np.ones(len(x))),
        volume=polytope.volume,
    )


def mabuchi_functional(pair: PotentialPair, a: float | None = None) -> float:
    """
    ``int_P L dx + int_∂P u d sigma - a int_P u dx``.

    ``a`` defaults to ``Vol(∂P, d sigma) / Vol(P)``.
    """
    return mabuchi_terms(pair).value(a)


# Gaussian entropy


def gaussian_entropy(*tables: NormingTable) -> float:
    """``-sum log Q_k(alpha)`` over every entry of the given tables"""
    return float(-sum(np.sum(t.log_q) for t in tables))


def mean_zero_field(
    polytope: DelzantPolytope,
    value,
    *,
    name: str,
    grad=None,
    hess=None,
) -> FieldPerturbation:
    """``value`` minus its Lebesgue average over P"""
    average = _integrate(value, polytope) / polytope.volume
    return FieldPerturbation(
        name=name, value=lambda x: value(x) - average, grad=grad, hess=hess
    )


def quadratic_perturbation(polytope: DelzantPolytope) -> FieldPerturbation:
    """``|x - x_c|^2`` made mean-zero, with ``x_c`` the center of mass"""
    center = polytope.center_of_mass

    def value(x: np.ndarray) -> np.ndarray:
        return np.sum((x - center) ** 2, axis=1)

    def grad(x: np.ndarray) -> np.ndarray:
        return 2 * (x - center)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(2 * np.eye(polytope.dim), (len(x), polytope.dim, polytope.dim))

    return mean_zero_field(polytope, value, name='quadratic', grad=grad, hess=hess)


def balanced_criticality(
    pair: PotentialPair, k: int, eta: FieldPerturbation, h: float = 1e-3
) -> float:
    """
    Central difference of the Gaussian entropy at level ``k`` along ``u_t = u - t eta``.

    The family moves the symplectic potential, not the Kähler potential. By Legendre duality
    its Kähler potentials are ``phi_t = phi + t eta(grad phi) + O(t^2)``, so the derivative at
    ``t = 0`` is the one along ``phi + t eta o mu``; the central difference carries an
    ``O(h^2)`` error. Both tables are built by quadrature.
    """
    if h <= 0:
        raise DomainError(f'step must be positive, got {h}', h=h)
    plus = build_table(perturb_pair(pair, eta, h), k, 'quadrature')
    minus = build_table(perturb_pair(pair, eta, -h), k, 'quadrature')
    derivative = (gaussian_entropy(plus) - gaussian_entropy(minus)) / (2 * h)
    logger.info('criticality of %r along %s at level %d: %.6g', pair, eta.name, k, derivative)
    return derivative
