import itertools
import logging
import math
import re
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Literal

from typing_extensions import TypeAliasType

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from torentropy.errors import BoundaryProximityError, DomainError, InputError, PolytopeError
from torentropy.settings import settings
from torentropy.toric.models import FacetModel, PolytopeModel
from torentropy.toric.quadrature import integrate_simplex
from torentropy.toric.utils import as_points

logger = logging.getLogger(__name__)

SurfaceMeasure = TypeAliasType('SurfaceMeasure', Literal['lattice', 'euclidean'])

__all__ = [
    'DelzantPolytope',
    'LatticePointSet',
    'interval01',
    'interval_sym',
    'named_polytope',
    'simplex',
]

_VERTEX_TOL = 1e-9


def _as_fraction(value: float | str | Fraction | int) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class LatticePointSet:
    """Integer points of the dilate kP, in lexicographic order"""

    level: int
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(a) for a in alpha): i for i, alpha in enumerate(self.points)}

    @property
    def positions(self) -> np.ndarray:
        """The points rescaled into P, i.e. alpha / k"""
        return self.points / self.level


@dataclass(frozen=True, eq=False)
class DelzantPolytope:
    """
    Polytope ``{x : <x, v_r> - a_r >= 0}`` with primitive integer normals ``v_r``.

    Construction validates the Delzant invariants: primitive normals, boundedness, nonempty
    interior and, at every vertex, exactly m active facets whose normals form a lattice basis.
    Offsets are kept as exact rationals so lattice membership never depends on rounding.
    """

    normals: np.ndarray
    offsets: tuple[Fraction, ...]
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        normals = np.asarray(self.normals)
        if normals.ndim != 2 or normals.shape[0] != len(self.offsets):
            raise PolytopeError(
                'normals and offsets disagree in shape',
                normals=list(normals.shape),
                offsets=len(self.offsets),
            )
        if not np.issubdtype(normals.dtype, np.integer):
            raise PolytopeError('facet normals must be integer vectors')
        object.__setattr__(self, 'normals', normals.astype(np.int64))
        object.__setattr__(self, 'offsets', tuple(_as_fraction(a) for a in self.offsets))
        self._validate()

    @classmethod
    def from_facets(
        cls,
        normals: Sequence[Sequence[int]],
        offsets: Sequence[float | str | Fraction | int],
        *,
        name: str | None = None,
    ) -> 'DelzantPolytope':
        return cls(np.array(normals, dtype=np.int64), tuple(offsets), name=name)

    @classmethod
    def from_model(cls, model: PolytopeModel) -> 'DelzantPolytope':
        return cls.from_facets(
            [f.normal for f in model.facets], [f.offset for f in model.facets]
        )

    def to_model(self) -> PolytopeModel:
        facets = [
            FacetModel(
                normal=[int(v) for v in normal],
                offset=float(a) if a.denominator == 1 or _exact_float(a) else str(a),
            )
            for normal, a in zip(self.normals, self.offsets, strict=True)
        ]
        return PolytopeModel(dimension=self.dim, facets=facets)

    @property
    def dim(self) -> int:
        return int(self.normals.shape[1])

    @property
    def n_facets(self) -> int:
        return int(self.normals.shape[0])

    @cached_property
    def offsets_float(self) -> np.ndarray:
        return np.array([float(a) for a in self.offsets])

    # validation

    def _validate(self):
        for r, normal in enumerate(self.normals):
            if math.gcd(*(int(v) for v in normal)) != 1:
                raise PolytopeError(
                    f'facet {r} has a non-primitive normal', facet=r, normal=normal.tolist()
                )

        for i, sign in itertools.product(range(self.dim), (1.0, -1.0)):
            cost = np.zeros(self.dim)
            cost[i] = -sign
            res = linprog(
                cost,
                A_ub=-self.normals,
                b_ub=-self.offsets_float,
                bounds=[(None, None)] * self.dim,
                method='highs',
            )
            if res.status == 2:
                raise PolytopeError('polytope is empty')
            if res.status == 3:
                raise PolytopeError('polytope is unbounded', direction=cost.tolist())

        radius, _ = self.chebyshev_ball
        if radius <= _VERTEX_TOL:
            raise PolytopeError('polytope has empty interior', chebyshev_radius=radius)

        for vertex in self.vertices:
            active = np.flatnonzero(np.abs(self.facet_values(vertex)) <= _VERTEX_TOL)
            if len(active) != self.dim:
                raise PolytopeError(
                    'vertex is not simple',
                    vertex=vertex.tolist(),
                    active_facets=active.tolist(),
                )
            det = round(float(np.linalg.det(self.normals[active].astype(float))))
            if abs(det) != 1:
                raise PolytopeError(
                    'facet normals at a vertex do not form a lattice basis',
                    vertex=vertex.tolist(),
                    determinant=det,
                )

    @cached_property
    def chebyshev_ball(self) -> tuple[float, np.ndarray]:
        """Radius and center of the largest inscribed ball, as a linear program"""
        norms = np.linalg.norm(self.normals, axis=1)
        cost = np.zeros(self.dim + 1)
        cost[-1] = -1.0
        res = linprog(
            cost,
            A_ub=np.column_stack([-self.normals, norms]),
            b_ub=-self.offsets_float,
            bounds=[(None, None)] * self.dim + [(0, None)],
            method='highs',
        )
        if res.status != 0:
            return 0.0, np.zeros(self.dim)
        return float(res.x[-1]), np.asarray(res.x[:-1])

    # geometry

    def facet_values(self, x) -> np.ndarray:
        """Values ``l_r(x)`` for every facet; one row per point for batched input"""
        points, single = as_points(x, self.dim)
        values = points @ self.normals.T - self.offsets_float
        return values[0] if single else values

    def contains(self, x, margin: float = 0.0) -> np.ndarray | bool:
        points, single = as_points(x, self.dim)
        inside = (points @ self.normals.T - self.offsets_float).min(axis=1) >= margin
        return bool(inside[0]) if single else inside

    def require_interior(self, x, margin: float | None = None) -> np.ndarray:
        """Return ``x`` as points, or raise if any point is outside P or within ``margin`` of ∂P"""
        margin = settings.eps_int if margin is None else margin
        points, _ = as_points(x, self.dim)
        values = points @ self.normals.T - self.offsets_float
        lowest = values.min(axis=1)
        worst = int(np.argmin(lowest))
        if lowest[worst] < 0:
            raise DomainError(
                'point lies outside the polytope',
                point=points[worst].tolist(),
                facet=int(np.argmin(values[worst])),
            )
        if lowest[worst] < margin:
            raise BoundaryProximityError(
                'point is too close to the boundary',
                point=points[worst].tolist(),
                facet=int(np.argmin(values[worst])),
                margin=float(lowest[worst]),
            )
        return points

    @cached_property
    def vertices(self) -> np.ndarray:
        found: list[np.ndarray] = []
        for rows in itertools.combinations(range(self.n_facets), self.dim):
            rows = list(rows)
            matrix = self.normals[rows].astype(float)
            if abs(np.linalg.det(matrix)) < 0.5:
                continue
            point = np.linalg.solve(matrix, self.offsets_float[rows])
            if (point @ self.normals.T - self.offsets_float).min() < -_VERTEX_TOL:
                continue
            if not any(np.allclose(point, other, atol=_VERTEX_TOL) for other in found):
                found.append(point)
        return np.array(sorted(found, key=tuple))

    @cached_property
    def barycenter(self) -> np.ndarray:
        """Average of the vertices, the apex of the fan triangulation"""
        return self.vertices.mean(axis=0)

    @cached_property
    def boundary_simplices(self) -> np.ndarray:
        """``(s, m, m)`` simplices triangulating ∂P, each lying in a single facet"""
        if self.dim == 1:
            return self.vertices[:, None, :]
        hull = ConvexHull(self.vertices)
        return self.vertices[hull.simplices]

    @cached_property
    def fan_simplices(self) -> np.ndarray:
        """``(s, m + 1, m)`` cones from the barycenter over ``boundary_simplices``"""
        apex = np.broadcast_to(self.barycenter, (len(self.boundary_simplices), 1, self.dim))
        return np.concatenate([apex, self.boundary_simplices], axis=1)

    @cached_property
    def _fan_volumes(self) -> np.ndarray:
        edges = self.fan_simplices[:, 1:, :] - self.fan_simplices[:, :1, :]
        return np.abs(np.linalg.det(edges)) / math.factorial(self.dim)

    @cached_property
    def volume(self) -> float:
        return float(self._fan_volumes.sum())

    @cached_property
    def center_of_mass(self) -> np.ndarray:
        centroids = self.fan_simplices.mean(axis=1)
        return self._fan_volumes @ centroids / self.volume

    def facet_of(self, simplex: np.ndarray) -> int:
        values = np.abs(simplex @ self.normals.T - self.offsets_float)
        return int(np.argmin(values.max(axis=0)))

    def boundary_integral(
        self,
        g: Callable[[np.ndarray], np.ndarray],
        *,
        measure: SurfaceMeasure = 'lattice',
        order: int | None = None,
    ) -> float:
        """
        Integrate ``g`` over ∂P facet by facet.

        With ``measure='lattice'`` each facet carries Lebesgue surface measure divided by the
        Euclidean length of its primitive normal; ``'euclidean'`` uses plain surface measure.
        In dimension one the facets are the endpoints and carry unit point masses.
        """
        order = settings.quad_order * 2 if order is None else order
        norms = np.linalg.norm(self.normals, axis=1)
        total = 0.0
        for simplex in self.boundary_simplices:
            r = self.facet_of(simplex)

            def sampled(points: np.ndarray, r: int = r) -> np.ndarray:
                values = np.asarray(g(points), dtype=float)
                bad = ~np.isfinite(values)
                if bad.any():
                    raise DomainError(
                        'boundary integrand is not finite',
                        facet=r,
                        point=points[int(np.argmax(bad))].tolist(),
                    )
                return values

            value = integrate_simplex(sampled, simplex, order=order, graded=True)
            total += value / norms[r] if measure == 'lattice' else value
        return total

    def lattice_points(self, k: int) -> LatticePointSet:
        """Integer points α with α/k in P̄, by exact rational comparison"""
        if k < 1:
            raise InputError(f'level must be positive, got {k}', k=k)
        lo = np.floor(k * self.vertices.min(axis=0) - _VERTEX_TOL).astype(int)
        hi = np.ceil(k * self.vertices.max(axis=0) + _VERTEX_TOL).astype(int)
        grid = np.array(
            list(itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi, strict=True)))),
            dtype=np.int64,
        )
        # <α, v_r> >= k a_r  <=>  q_r <α, v_r> >= k p_r  for a_r = p_r / q_r
        num = np.array([a.numerator for a in self.offsets], dtype=np.int64)
        den = np.array([a.denominator for a in self.offsets], dtype=np.int64)
        inside = ((grid @ self.normals.T) * den >= k * num).all(axis=1)
        points = grid[inside]
        logger.debug('level %d: %d lattice points', k, len(points))
        return LatticePointSet(level=k, points=points)

    def interior_grid(self, n: int, margin: float | None = None) -> np.ndarray:
        """
        Deterministic grid of interior points.

        On an interval these are the n points splitting it into n + 1 equal parts; in higher
        dimension, the points of the level-n lattice at least ``margin`` inside P.
        """
        margin = settings.eps_int if margin is None else margin
        if self.dim == 1:
            lo, hi = self.vertices[0, 0], self.vertices[-1, 0]
            return (lo + (hi - lo) * np.arange(1, n + 1) / (n + 1))[:, None]
        positions = self.lattice_points(n).positions
        keep = (positions @ self.normals.T - self.offsets_float).min(axis=1) >= margin
        return positions[keep]

    def translated(self, shift) -> 'DelzantPolytope':
        """The polytope ``P + shift``"""
        shift = [_as_fraction(float(s)) for s in np.atleast_1d(shift)]
        offsets = [
            a + sum((int(v) * s for v, s in zip(normal, shift, strict=True)), Fraction(0))
            for normal, a in zip(self.normals, self.offsets, strict=True)
        ]
        return DelzantPolytope(self.normals.copy(), tuple(offsets), name=self.name)

    def dilated(self, factor: int) -> 'DelzantPolytope':
        return DelzantPolytope(
            self.normals.copy(), tuple(a * factor for a in self.offsets), name=self.name
        )

    def key(self) -> dict:
        """JSON-friendly identity used in digests"""
        return {
            'normals': self.normals.tolist(),
            'offsets': [str(a) for a in self.offsets],
        }


def _exact_float(value: Fraction) -> bool:
    return Fraction(repr(float(value))) == value


def interval01() -> DelzantPolytope:
    return DelzantPolytope.from_facets([[1], [-1]], [0, -1], name='interval01')


def interval_sym(r2: float | str = 1) -> DelzantPolytope:
    """The interval [-r2, r2]"""
    r2 = _as_fraction(r2)
    if r2 <= 0:
        raise PolytopeError('r2 must be positive', r2=str(r2))
    return DelzantPolytope.from_facets([[1], [-1]], [-r2, -r2], name=f'interval_sym({r2})')


def simplex(m: int, degree: int = 1) -> DelzantPolytope:
    """The dilated standard simplex ``{x_i >= 0, sum x_i <= degree}``"""
    if m < 1 or degree < 1:
        raise PolytopeError('simplex needs positive dimension and degree', m=m, degree=degree)
    normals = [[int(i == j) for j in range(m)] for i in range(m)] + [[-1] * m]
    return DelzantPolytope.from_facets(
        normals, [0] * m + [-degree], name=f'simplex({m})' if degree == 1 else None
    )


_NAMED = re.compile(r'^(?P<name>interval01|interval_sym|simplex)(?:\((?P<args>[^()]*)\))?$')


def named_polytope(spec: str) -> DelzantPolytope:
    """
    Resolve ``interval01``, ``interval_sym(r2)`` or ``simplex(m)``.

    ``interval_sym`` defaults to r2 = 1; ``simplex(m, d)`` dilates by the degree d. Offsets such
    as ``interval_sym(1/2)`` are read as exact rationals.
    """
    found = _NAMED.match(spec.replace(' ', ''))
    if found is None:
        raise PolytopeError(
            f'unknown polytope {spec!r}', known=['interval01', 'interval_sym(r2)', 'simplex(m)']
        )
    args = [a for a in (found['args'] or '').split(',') if a]
    try:
        match found['name'], args:
            case 'interval01', []:
                return interval01()
            case 'interval_sym', []:
                return interval_sym()
            case 'interval_sym', [r2]:
                return interval_sym(r2)
            case 'simplex', [m]:
                return simplex(int(m))
            case 'simplex', [m, degree]:
                return simplex(int(m), int(degree))
    except (ValueError, ZeroDivisionError) as e:
        raise PolytopeError(f'bad arguments for polytope {spec!r}: {e}', args=args) from e
    raise PolytopeError(f'wrong number of arguments for polytope {spec!r}', args=args)
