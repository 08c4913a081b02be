"""Kähler potentials on the open orbit and their Legendre-dual symplectic potentials"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass
from functools import wraps
from typing import Any, ClassVar

from typing_extensions import TypeAliasType

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from torentropy.errors import DomainError, InputError
from torentropy.toric.models import GaugeShift
from torentropy.toric.polytope import DelzantPolytope, interval_sym, simplex
from torentropy.toric.utils import (
    as_points,
    central_gradient,
    central_hessian,
    central_jacobian,
    digest,
    solve_gradient_equation,
)

logger = logging.getLogger(__name__)

PointFn = TypeAliasType('PointFn', Callable[[np.ndarray], np.ndarray])

__all__ = [
    'BergmanSumPair',
    'ConvexFunction',
    'FubiniStudyPair',
    'GaugedPair',
    'GuilleminPair',
    'FieldPerturbation',
    'KahlerEinsteinPair',
    'PerturbedPair',
    'PotentialPair',
    'RoundSpherePair',
    'apply_gauge',
    'builtin_pair',
    'curvature_scalar_L',
    'inverse_moment_map',
    'ke_gauge_residual',
    'legendre_transform',
    'moment_map',
    'perturb_pair',
]


def _batched(method):
    """Accept a single point or an (n, m) batch and squeeze the result back"""

    @wraps(method)
    def wrapper(self, points):
        arr, single = as_points(points, self.dim)
        out = method(self, arr)
        return out[0] if single else out

    return wrapper


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum('ij,ij->i', a, b)


class ConvexFunction:
    """
    A batched strictly convex function with gradient and Hessian.

    ``domain`` is a predicate marking the open set where the function is finite (``None``
    means all of R^m) and ``start`` a point inside it, used to seed Newton iterations.
    """

    def __init__(
        self,
        dim: int,
        value: PointFn,
        grad: PointFn,
        hess: PointFn | None = None,
        *,
        domain: PointFn | None = None,
        start: np.ndarray | None = None,
    ):
        self.dim: int = dim
        self._value: PointFn = value
        self._grad: PointFn = grad
        self._hess: PointFn = hess or (lambda y: central_jacobian(grad, y))
        self.domain: PointFn | None = domain
        self.start: np.ndarray = np.zeros(dim) if start is None else np.asarray(start, float)

    @_batched
    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._value(points)

    @_batched
    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self._grad(points)

    @_batched
    def hessian(self, points: np.ndarray) -> np.ndarray:
        return self._hess(points)


def legendre_transform(
    f: ConvexFunction,
    *,
    dual_domain: PointFn | None = None,
    dual_start: np.ndarray | None = None,
) -> ConvexFunction:
    """
    Numerical Legendre dual ``f*(x) = sup_y <x, y> - f(y)``.

    For each query the maximizer solves ``grad f(y) = x`` by safeguarded Newton. The dual
    gradient is the maximizer and the dual Hessian the inverse Hessian of ``f`` there.
    ``dual_domain`` marks the open gradient range of ``f``; queries outside it raise.
    """

    def solve(x: np.ndarray) -> np.ndarray:
        if dual_domain is not None:
            outside = ~np.asarray(dual_domain(x), dtype=bool)
            if outside.any():
                raise DomainError(
                    'query lies outside the gradient range',
                    point=x[int(np.argmax(outside))].tolist(),
                )
        return solve_gradient_equation(
            value=f._value,
            grad=f._grad,
            hess=f._hess,
            targets=x,
            start=f.start,
            domain=f.domain,
        )

    def value(x: np.ndarray) -> np.ndarray:
        y = solve(x)
        return _dot(x, y) - f._value(y)

    def hess(x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(f._hess(solve(x)))

    return ConvexFunction(
        f.dim, value, solve, hess, domain=dual_domain, start=dual_start
    )


class PotentialPair(ABC):
    """
    A convex Kähler potential ``phi(rho)`` paired with its Legendre dual ``u(x)`` on P°.

    Subclasses implement at least one side in closed form; the other side defaults to a
    Newton solve of the Legendre duality. Public evaluators accept one point or a batch.
    """

    kind: ClassVar[str]

    def __init__(self, polytope: DelzantPolytope):
        self._polytope: DelzantPolytope = polytope

    @property
    def polytope(self) -> DelzantPolytope:
        return self._polytope

    @property
    def dim(self) -> int:
        return self._polytope.dim

    @abstractmethod
    def params(self) -> dict[str, Any]:
        """JSON-friendly parameters identifying the pair"""

    def key(self) -> dict[str, Any]:
        return {'kind': self.kind, 'params': self.params(), 'polytope': self.polytope.key()}

    @property
    def digest(self) -> str:
        return digest(self.key())

    def __repr__(self) -> str:
        return f'{type(self).__name__}({self.params()})'

    # Legendre defaults

    def _interior(self, x: np.ndarray) -> np.ndarray:
        return (x @ self.polytope.normals.T - self.polytope.offsets_float).min(axis=1) > 0

    def _rho_guess(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)

    def _x_of(self, rho: np.ndarray) -> np.ndarray:
        return solve_gradient_equation(
            value=self._u,
            grad=self._grad_u,
            hess=self._hess_u,
            targets=rho,
            start=self.polytope.center_of_mass,
            domain=self._interior,
        )

    def _rho_of(self, x: np.ndarray) -> np.ndarray:
        return solve_gradient_equation(
            value=self._phi,
            grad=self._grad_phi,
            hess=self._hess_phi,
            targets=x,
            start=self._rho_guess(x),
        )

    def _phi(self, rho: np.ndarray) -> np.ndarray:
        x = self._x_of(rho)
        return _dot(x, rho) - self._u(x)

    def _grad_phi(self, rho: np.ndarray) -> np.ndarray:
        return self._x_of(rho)

    def _hess_phi(self, rho: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self._hess_u(self._x_of(rho)))

    def _u(self, x: np.ndarray) -> np.ndarray:
        rho = self._rho_of(x)
        return _dot(x, rho) - self._phi(rho)

    def _grad_u(self, x: np.ndarray) -> np.ndarray:
        return self._rho_of(x)

    def _hess_u(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self._hess_phi(self._rho_of(x)))

    # public evaluators

    @_batched
    def phi(self, rho: np.ndarray) -> np.ndarray:
        return self._phi(rho)

    @_batched
    def grad_phi(self, rho: np.ndarray) -> np.ndarray:
        return self._grad_phi(rho)

    @_batched
    def hess_phi(self, rho: np.ndarray) -> np.ndarray:
        return self._hess_phi(rho)

    @_batched
    def u(self, x: np.ndarray) -> np.ndarray:
        return self._u(x)

    @_batched
    def grad_u(self, x: np.ndarray) -> np.ndarray:
        return self._grad_u(x)

    @_batched
    def hess_u(self, x: np.ndarray) -> np.ndarray:
        return self._hess_u(x)

    def kahler_potential(self) -> ConvexFunction:
        return ConvexFunction(self.dim, self._phi, self._grad_phi, self._hess_phi)

    def symplectic_potential(self) -> ConvexFunction:
        return ConvexFunction(
            self.dim,
            self._u,
            self._grad_u,
            self._hess_u,
            domain=self._interior,
            start=self.polytope.center_of_mass,
        )


class FubiniStudyPair(PotentialPair):
    """
    ``phi = d log(1 + sum e^rho_i)`` on the simplex dilated by the degree ``d``.

    The symplectic potential is ``sum x_i log(x_i / d) + x_0 log(x_0 / d)`` with
    ``x_0 = d - sum x_i``.
    """

    kind = 'fs-cpm'

    def __init__(self, m: int = 1, degree: int = 1):
        super().__init__(simplex(m, degree))
        self._m: int = m
        self._degree: int = degree

    def params(self) -> dict[str, Any]:
        return {'m': self._m, 'degree': self._degree}

    def _probabilities(self, rho: np.ndarray) -> np.ndarray:
        return softmax(np.column_stack([np.zeros(len(rho)), rho]), axis=1)

    def _phi(self, rho):
        full = np.column_stack([np.zeros(len(rho)), rho])
        return self._degree * logsumexp(full, axis=1)

    def _grad_phi(self, rho):
        return self._degree * self._probabilities(rho)[:, 1:]

    def _hess_phi(self, rho):
        p = self._probabilities(rho)[:, 1:]
        diag = np.einsum('ij,jk->ijk', p, np.eye(self._m))
        return self._degree * (diag - p[:, :, None] * p[:, None, :])

    def _full(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([self._degree - x.sum(axis=1), x])

    def _u(self, x):
        full = self._full(x)
        return xlogy(full, full / self._degree).sum(axis=1)

    def _grad_u(self, x):
        full = self._full(x)
        return np.log(full[:, 1:]) - np.log(full[:, :1])

    def _hess_u(self, x):
        full = self._full(x)
        return np.einsum('ij,jk->ijk', 1 / full[:, 1:], np.eye(self._m)) + (
            1 / full[:, 0]
        )[:, None, None]

    def _x_of(self, rho):
        return self._grad_phi(rho)

    def _rho_of(self, x):
        return self._grad_u(x)


class RoundSpherePair(PotentialPair):
    """``phi = r2 log cosh rho`` on the interval [-r2, r2]"""

    kind = 'round-sphere'

    def __init__(self, r2: float = 1.0):
        if not r2 > 0:
            raise InputError('round-sphere needs r2 > 0', r2=r2)
        super().__init__(interval_sym(r2))
        self._r2: float = float(r2)

    def params(self) -> dict[str, Any]:
        return {'r2': self._r2}

    def _phi(self, rho):
        r = rho[:, 0]
        return self._r2 * (np.logaddexp(r, -r) - math.log(2))

    def _grad_phi(self, rho):
        return self._r2 * np.tanh(rho)

    def _hess_phi(self, rho):
        return (self._r2 / np.cosh(rho) ** 2)[:, :, None]

    def _u(self, x):
        r2, t = self._r2, x[:, 0]
        return 0.5 * (xlogy(r2 + t, (r2 + t) / r2) + xlogy(r2 - t, (r2 - t) / r2))

    def _grad_u(self, x):
        return np.arctanh(x / self._r2)

    def _hess_u(self, x):
        return (self._r2 / ((self._r2 + x) * (self._r2 - x)))[:, :, None]

    def _x_of(self, rho):
        return self._grad_phi(rho)

    def _rho_of(self, x):
        return self._grad_u(x)


class GuilleminPair(PotentialPair):
    """Canonical symplectic potential ``u = sum_r l_r log l_r``; phi by Legendre duality"""

    kind = 'guillemin'

    def params(self) -> dict[str, Any]:
        return {}

    def _values(self, x: np.ndarray) -> np.ndarray:
        return x @ self.polytope.normals.T - self.polytope.offsets_float

    def _u(self, x):
        ell = self._values(x)
        return xlogy(ell, ell).sum(axis=1)

    def _grad_u(self, x):
        return (np.log(self._values(x)) + 1) @ self.polytope.normals

    def _hess_u(self, x):
        normals = self.polytope.normals.astype(float)
        return np.einsum('nr,ri,rj->nij', 1 / self._values(x), normals, normals)

    def _rho_of(self, x):
        return self._grad_u(x)


class BergmanSumPair(PotentialPair):
    """
    Bergman potential of a level-``k0`` table.

    ``phi = (1/k0) log sum_alpha exp(<alpha, rho> - log Q(alpha))``. Gradient and Hessian
    are the softmax mean of alpha and its covariance, both divided by k0.
    """

    kind = 'bergman-sum'

    def __init__(
        self,
        polytope: DelzantPolytope,
        points: np.ndarray,
        log_q: np.ndarray,
        level: int = 1,
        label: str | None = None,
    ):
        super().__init__(polytope)
        self._points: np.ndarray = np.asarray(points, dtype=float)
        self._log_q: np.ndarray = np.asarray(log_q, dtype=float)
        self._level: int = level
        self._label: str | None = label
        self._guide: GuilleminPair = GuilleminPair(polytope)

    @property
    def level(self) -> int:
        return self._level

    def params(self) -> dict[str, Any]:
        return {
            'level': self._level,
            'label': self._label,
            'table': digest(np.round(self._log_q, 14).tolist()),
        }

    def _exponents(self, rho: np.ndarray) -> np.ndarray:
        return rho @ self._points.T - self._log_q

    def _phi(self, rho):
        return logsumexp(self._exponents(rho), axis=1) / self._level

    def _grad_phi(self, rho):
        return softmax(self._exponents(rho), axis=1) @ self._points / self._level

    def _hess_phi(self, rho):
        w = softmax(self._exponents(rho), axis=1)
        mean = w @ self._points
        second = np.einsum('na,ai,aj->nij', w, self._points, self._points)
        return (second - mean[:, :, None] * mean[:, None, :]) / self._level

    def _x_of(self, rho):
        return self._grad_phi(rho)

    def _rho_guess(self, x):
        return self._guide._grad_u(x)


class GaugedPair(PotentialPair):
    """
    ``phi(rho - kv) + <b, rho> + c`` with dual ``u(x - b) + <x - b, kv> - c`` on ``P + b``
    """

    kind = 'gauged'

    def __init__(self, base: PotentialPair, shift: GaugeShift):
        b, kv = shift.vectors(base.dim)
        super().__init__(base.polytope.translated(b) if any(b) else base.polytope)
        self._base: PotentialPair = base
        self._shift: GaugeShift = shift
        self._b: np.ndarray = np.array(b, dtype=float)
        self._kv: np.ndarray = np.array(kv, dtype=float)

    @property
    def base(self) -> PotentialPair:
        return self._base

    @property
    def shift(self) -> GaugeShift:
        return self._shift

    def key(self) -> dict[str, Any]:
        return {'kind': self.kind, 'base': self._base.key(), 'shift': self._shift.model_dump()}

    def params(self) -> dict[str, Any]:
        return {'base': self._base.params(), 'shift': self._shift.model_dump()}

    def _phi(self, rho):
        return self._base._phi(rho - self._kv) + rho @ self._b + self._shift.c

    def _grad_phi(self, rho):
        return self._base._grad_phi(rho - self._kv) + self._b

    def _hess_phi(self, rho):
        return self._base._hess_phi(rho - self._kv)

    def _u(self, x):
        y = x - self._b
        return self._base._u(y) + y @ self._kv - self._shift.c

    def _grad_u(self, x):
        return self._base._grad_u(x - self._b) + self._kv

    def _hess_u(self, x):
        return self._base._hess_u(x - self._b)

    def _x_of(self, rho):
        return self._grad_phi(rho)

    def _rho_of(self, x):
        return self._grad_u(x)


class KahlerEinsteinPair(GaugedPair):
    """
    Anticanonical Fubini-Study potential in the gauge ``det hess phi = exp(-phi)``.

    The polytope is the simplex of degree m + 1 translated by ``-(1, ..., 1)``, whose center
    of mass is the origin.
    """

    kind = 'ke-cpm'

    def __init__(self, m: int = 1):
        super().__init__(
            FubiniStudyPair(m, degree=m + 1),
            GaugeShift(c=-m * math.log(m + 1), b=(-1.0,) * m, kv=(0,) * m),
        )


@dataclass(frozen=True)
class FieldPerturbation:
    """A scalar field on P with optional analytic derivatives"""

    name: str
    value: PointFn
    grad: PointFn | None = None
    hess: PointFn | None = None

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.grad(x) if self.grad is not None else central_gradient(self.value, x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.hess(x) if self.hess is not None else central_hessian(self.value, x)


class PerturbedPair(PotentialPair):
    """
    Symplectic-side perturbation ``u_t = u - t * eta``, to first order ``phi + t * eta(grad phi)``
    """

    kind = 'perturbed'

    def __init__(self, base: PotentialPair, eta: FieldPerturbation, t: float):
        super().__init__(base.polytope)
        self._base: PotentialPair = base
        self._eta: FieldPerturbation = eta
        self._t: float = float(t)

    def key(self) -> dict[str, Any]:
        return {'kind': self.kind, 'base': self._base.key(), 'eta': self._eta.name, 't': self._t}

    def params(self) -> dict[str, Any]:
        return {'base': self._base.params(), 'eta': self._eta.name, 't': self._t}

    def _u(self, x):
        return self._base._u(x) - self._t * self._eta.value(x)

    def _grad_u(self, x):
        return self._base._grad_u(x) - self._t * self._eta.gradient(x)

    def _hess_u(self, x):
        return self._base._hess_u(x) - self._t * self._eta.hessian(x)

    def _rho_of(self, x):
        return self._grad_u(x)


def perturb_pair(pair: PotentialPair, eta: FieldPerturbation, t: float) -> PotentialPair:
    return pair if t == 0 else PerturbedPair(pair, eta, t)


def builtin_pair(name: str, **params: Any) -> PotentialPair:
    """
    Construct a named potential pair.

    Names are ``fs-cp1``, ``fs-cpm`` (``m``, ``degree``), ``round-sphere`` (``r2``),
    ``guillemin`` (``polytope``), ``bergman-sum`` (``table`` with ``points``, ``log_q`` and
    ``level``, plus ``polytope``) and ``ke-cpm`` (``m``).
    """
    match name.lower():
        case 'fs-cp1':
            return FubiniStudyPair(1)
        case 'fs-cp2':
            return FubiniStudyPair(2)
        case 'fs-cpm':
            return FubiniStudyPair(int(params.get('m', 1)), int(params.get('degree', 1)))
        case 'round-sphere':
            return RoundSpherePair(float(params.get('r2', 1.0)))
        case 'guillemin':
            polytope = params.get('polytope')
            if not isinstance(polytope, DelzantPolytope):
                raise InputError('guillemin needs a polytope')
            return GuilleminPair(polytope)
        case 'bergman-sum':
            table, polytope = params.get('table'), params.get('polytope')
            if table is None or polytope is None:
                raise InputError('bergman-sum needs a table and a polytope')
            return BergmanSumPair(
                polytope, table.points, table.log_q, level=table.k, label=params.get('label')
            )
        case 'ke-cpm':
            return KahlerEinsteinPair(int(params.get('m', 1)))
        case _:
            raise InputError(f'unknown potential {name!r}')


def moment_map(pair: PotentialPair, rho) -> np.ndarray:
    return pair.grad_phi(rho)


def inverse_moment_map(pair: PotentialPair, x) -> np.ndarray:
    """``rho = grad u(x)`` for x at least ``settings.eps_int`` inside P"""
    pair.polytope.require_interior(x)
    return pair.grad_u(x)


def curvature_scalar_L(pair: PotentialPair, x) -> np.ndarray:  # noqa: N802
    """``L(x) = 1/2 log det hess u(x)``"""
    points, single = as_points(x, pair.dim)
    pair.polytope.require_interior(points)
    _, logdet = np.linalg.slogdet(pair._hess_u(points))
    out = 0.5 * logdet
    return out[0] if single else out


def apply_gauge(pair: PotentialPair, shift: GaugeShift) -> PotentialPair:
    """Gauge-shifted pair; shifts of an already shifted pair are composed"""
    if isinstance(pair, GaugedPair):
        base, shift = pair.base, pair.shift.compose(shift, pair.dim)
    else:
        base = pair
    b, kv = shift.vectors(pair.dim)
    if shift.c == 0 and not any(b) and not any(kv):
        return base
    return GaugedPair(base, shift)


def ke_gauge_residual(
    pair: PotentialPair, a: float, b, c: float, rho_grid
) -> float:
    """``max |-log det hess phi - a phi - <b, rho> - c|`` over the grid"""
    rho, _ = as_points(rho_grid, pair.dim)
    b = np.broadcast_to(np.asarray(b, dtype=float), (pair.dim,))
    _, logdet = np.linalg.slogdet(pair._hess_phi(rho))
    residual = -logdet - a * pair._phi(rho) - rho @ b - c
    return float(np.abs(residual).max())


def rho_grid(dim: int, radius: float = 4.0, n: int = 9) -> np.ndarray:
    """Tensor grid on the cube ``|rho|_inf <= radius``"""
    axis = np.linspace(-radius, radius, n)
    return np.stack(np.meshgrid(*([axis] * dim), indexing='ij'), axis=-1).reshape(-1, dim)
