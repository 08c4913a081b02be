"""
Cubature over simplicial decompositions of a polytope.

Two integrators live here. ``log_integrate`` is an adaptive log-domain cubature for sharply
peaked positive integrands given through their logarithm. ``integrate_fan`` is a fixed
linear-domain rule for integrands with integrable logarithmic singularities on the boundary:
it integrates over the cones from an interior apex to the boundary facets with a mesh graded
geometrically toward the facets.
"""

import heapq
import itertools
import logging
import math
from collections.abc import Callable
from functools import lru_cache
from typing import NamedTuple

from typing_extensions import TypeAliasType

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp

from torentropy.settings import settings

logger = logging.getLogger(__name__)

ScalarField = TypeAliasType('ScalarField', Callable[[np.ndarray], np.ndarray])

__all__ = [
    'LogIntegral',
    'graded_rule',
    'integrate_fan',
    'integrate_simplex',
    'log_integrate',
    'simplex_rule',
    'star_subdivide',
]


class LogIntegral(NamedTuple):
    log_value: float
    log_error: float
    converged: bool
    elements: int


@lru_cache(maxsize=64)
def _gauss_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    return 0.5 * (nodes + 1), 0.5 * weights


@lru_cache(maxsize=64)
def simplex_rule(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Collapsed tensor Gauss-Legendre rule on the reference ``dim``-simplex.

    Returns barycentric coordinates of shape ``(q, dim + 1)`` and weights summing to
    ``1 / dim!``. Nodes cluster at vertex 0, where the collapsed coordinates degenerate.
    """
    if dim == 0:
        return np.ones((1, 1)), np.ones(1)

    nodes, weights = _gauss_unit(order)
    grid = np.array(list(itertools.product(nodes, repeat=dim)))
    wgrid = np.prod(np.array(list(itertools.product(weights, repeat=dim))), axis=1)

    bary = np.empty((len(grid), dim + 1))
    remaining = np.ones(len(grid))
    jac = np.ones(len(grid))
    for i in range(dim):
        bary[:, i] = remaining * grid[:, i]
        remaining = remaining * (1 - grid[:, i])
        jac *= (1 - grid[:, i]) ** (dim - 1 - i)
    bary[:, dim] = remaining
    return bary, wgrid * jac


def graded_rule(
    order: int, *, width: float, levels: int, left: bool = True, right: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] with pieces shrinking geometrically toward the ends"""
    cuts = {0.0, 1.0}
    for j in range(levels + 1):
        h = width * 0.5**j
        if left:
            cuts.add(h)
        if right:
            cuts.add(1 - h)
    edges = np.array(sorted(cuts))
    nodes, weights = _gauss_unit(order)
    lengths = np.diff(edges)
    points = (edges[:-1, None] + lengths[:, None] * nodes[None, :]).ravel()
    return points, (lengths[:, None] * weights[None, :]).ravel()


def _simplex_measure(vertices: np.ndarray) -> float:
    """``dim!`` times the ``dim``-volume of a simplex embedded in R^m"""
    edges = (vertices[1:] - vertices[0]).T
    if edges.shape[1] == 0:
        return 1.0
    if edges.shape[0] == edges.shape[1]:
        return abs(float(np.linalg.det(edges)))
    return math.sqrt(abs(float(np.linalg.det(edges.T @ edges))))


def integrate_simplex(
    f: ScalarField, vertices: np.ndarray, *, order: int | None = None, graded: bool = False
) -> float:
    """
    Integrate ``f`` over one simplex of any dimension embedded in R^m.

    ``graded`` refines an edge toward both endpoints, for integrands with logarithmic
    endpoint singularities; it applies to one-dimensional simplices only.
    """
    order = settings.quad_order if order is None else order
    vertices = np.asarray(vertices, dtype=float)
    dim = len(vertices) - 1
    if graded and dim == 1:
        t, w = graded_rule(order, width=settings.collar_width, levels=settings.collar_levels)
        bary = np.column_stack([1 - t, t])
    else:
        bary, w = simplex_rule(dim, order)
    return _simplex_measure(vertices) * float(np.dot(w, f(bary @ vertices)))


def star_subdivide(simplices: np.ndarray, point: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """
    Split every simplex containing ``point`` into the cones from ``point`` over its facets.

    The point becomes vertex 0 of each child, so collapsed rules cluster their nodes there.
    Degenerate children (point on the replaced facet) are dropped.
    """
    out = []
    for simplex in simplices:
        lhs = np.vstack([simplex.T, np.ones(len(simplex))])
        rhs = np.append(point, 1.0)
        try:
            bary = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            out.append(simplex)
            continue
        if bary.min() < -tol:
            out.append(simplex)
            continue
        for i in range(len(simplex)):
            if bary[i] <= tol:
                continue
            child = np.delete(simplex, i, axis=0)
            out.append(np.vstack([point, child]))
    return np.array(out)


def _log_abs_diff(a: float, b: float) -> float:
    hi, lo = max(a, b), min(a, b)
    if hi == -np.inf or hi == lo:
        return -np.inf
    return hi + math.log(-math.expm1(lo - hi))


class _LogRule:
    """Low/high order pair evaluated on one simplex in the log domain"""

    def __init__(self, dim: int, order: int):
        self._low: tuple[np.ndarray, np.ndarray] = simplex_rule(dim, order)
        self._high: tuple[np.ndarray, np.ndarray] = simplex_rule(dim, 2 * order)

    def _apply(self, logf: ScalarField, simplex: np.ndarray, rule, log_measure: float) -> float:
        bary, weights = rule
        values = logf(bary @ simplex)
        return float(logsumexp(values + np.log(weights))) + log_measure

    def evaluate(self, logf: ScalarField, simplex: np.ndarray) -> tuple[float, float]:
        measure = _simplex_measure(simplex)
        if measure == 0:
            return -np.inf, -np.inf
        log_measure = math.log(measure)
        high = self._apply(logf, simplex, self._high, log_measure)
        low = self._apply(logf, simplex, self._low, log_measure)
        return high, _log_abs_diff(high, low)


def _bisect(simplex: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pairs = itertools.combinations(range(len(simplex)), 2)
    i, j = max(pairs, key=lambda ij: np.linalg.norm(simplex[ij[0]] - simplex[ij[1]]))
    mid = 0.5 * (simplex[i] + simplex[j])
    first, second = simplex.copy(), simplex.copy()
    first[j] = mid
    second[i] = mid
    return first, second


def log_integrate(
    logf: ScalarField,
    simplices: np.ndarray,
    *,
    peak: np.ndarray | None = None,
    rtol: float | None = None,
    order: int | None = None,
    max_depth: int | None = None,
    max_elements: int | None = None,
) -> LogIntegral:
    """
    Adaptive cubature of ``exp(logf)`` over a union of m-simplices, accumulated in log domain.

    Each element carries a Gauss-Legendre estimate of order ``2 * order`` and the distance
    to the order ``order`` estimate as its error. The element with the largest error is
    bisected along its longest edge until the summed error falls under ``rtol`` times the
    summed value, every element reaches ``max_depth`` or the element budget runs out.

    Parameters
    ----------
    logf : callable
        Batched log-integrand on ``(n, m)`` points; ``-inf`` is allowed.
    simplices : np.ndarray
        ``(s, m + 1, m)`` vertex array of the initial decomposition.
    peak : np.ndarray, optional
        Location of the integrand's maximum; the decomposition is star-subdivided there.
    """
    rtol = settings.quad_rtol if rtol is None else rtol
    order = settings.quad_order if order is None else order
    max_depth = settings.quad_max_depth if max_depth is None else max_depth
    max_elements = settings.quad_max_elements if max_elements is None else max_elements

    simplices = np.asarray(simplices, dtype=float)
    if peak is not None:
        simplices = star_subdivide(simplices, np.asarray(peak, dtype=float))
    rule = _LogRule(simplices.shape[-1], order)

    counter = itertools.count()
    heap: list[tuple[float, int, int, np.ndarray, float]] = []
    frozen_values: list[float] = []
    frozen_errors: list[float] = []
    for simplex in simplices:
        value, error = rule.evaluate(logf, simplex)
        heapq.heappush(heap, (-error, next(counter), 0, simplex, value))

    log_tol = math.log(rtol)
    while True:
        values = [item[4] for item in heap] + frozen_values
        errors = [-item[0] for item in heap] + frozen_errors
        total = float(logsumexp(values))
        error = float(logsumexp(errors))
        converged = bool(error <= log_tol + total or total == -np.inf)
        if converged or not heap or len(values) >= max_elements:
            break

        neg_error, _, depth, simplex, value = heapq.heappop(heap)
        if depth >= max_depth:
            frozen_values.append(value)
            frozen_errors.append(-neg_error)
            continue
        for child in _bisect(simplex):
            child_value, child_error = rule.evaluate(logf, child)
            heapq.heappush(heap, (-child_error, next(counter), depth + 1, child, child_value))

    elements = len(heap) + len(frozen_values)
    logger.debug('log cubature: %d elements, converged=%s', elements, converged)
    return LogIntegral(total, error, converged, elements)


@lru_cache(maxsize=16)
def _fan_rule(dim: int, order: int, width: float, levels: int) -> tuple[np.ndarray, ...]:
    """Radial and tangential nodes of the cone rule; the radial factor s^(m-1) is folded in"""
    s, ws = graded_rule(order, width=width, levels=levels, left=False)
    ws = ws * s ** (dim - 1)
    if dim == 1:
        bary, wt = np.ones((1, 1)), np.ones(1)
    elif dim == 2:
        t, wt = graded_rule(order, width=width, levels=levels)
        bary = np.column_stack([1 - t, t])
    else:
        bary, wt = simplex_rule(dim - 1, order)
    return s, ws, bary, wt


def integrate_fan(
    f: ScalarField,
    apex: np.ndarray,
    bases: np.ndarray,
    *,
    order: int | None = None,
    chunk: int = 65536,
) -> float:
    """
    Integrate ``f`` over a polytope given as the cones from ``apex`` over boundary simplices.

    ``bases`` has shape ``(s, m, m)``: each row lists the m vertices of one boundary simplex.
    The radial coordinate is graded toward the boundary over ``settings.collar_levels``
    dyadic levels below ``settings.collar_width``; in dimension two the tangential
    coordinate is graded toward the base's endpoints as well.
    """
    order = settings.quad_order if order is None else order
    apex = np.asarray(apex, dtype=float)
    bases = np.asarray(bases, dtype=float)
    dim = bases.shape[-1]
    s, ws, bary, wt = _fan_rule(dim, order, settings.collar_width, settings.collar_levels)

    total = 0.0
    for base in bases:
        det = abs(float(np.linalg.det((base - apex).T)))
        if det == 0:
            continue
        foot = bary @ base
        points = apex + s[:, None, None] * (foot[None, :, :] - apex)
        weights = (ws[:, None] * wt[None, :]).ravel()
        points = points.reshape(-1, dim)
        acc = 0.0
        for start in range(0, len(points), chunk):
            stop = start + chunk
            acc += float(np.dot(weights[start:stop], f(points[start:stop])))
        total += det * acc
    return total
