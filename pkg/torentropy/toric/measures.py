"""Bergman measures on dilated lattice points and what is computed from them"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from torentropy.errors import (
    DimensionMismatchError,
    DomainError,
    InputError,
    ScaleMismatchError,
    TableError,
)
from torentropy.settings import settings
from torentropy.toric.bergman import NormingTable, default_grid, limit_log_weights, log_weights
from torentropy.toric.models import CheckReport, LatticeMeasureModel, MeasureAtomModel
from torentropy.toric.potentials import PotentialPair, inverse_moment_map, moment_map
from torentropy.toric.utils import as_points, digest

logger = logging.getLogger(__name__)

__all__ = [
    'LatticeMeasure',
    'RateFunction',
    'bergman_measure',
    'bergman_measure_at',
    'bernstein',
    'convolution_power',
    'convolution_power_check',
    'convolve',
    'entropy',
    'lattice_states',
    'ldp_residual',
    'moments',
    'rate_function',
    'wright_fisher_matrix',
]


@dataclass(frozen=True, eq=False)
class LatticeMeasure:
    """
    Probability measure with atoms at ``alpha / level`` for integer points ``alpha``.

    Level 0 is reserved for the point mass at the origin, the unit of convolution.
    """

    level: int
    points: np.ndarray
    logw: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=np.int64))
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'logw', np.asarray(self.logw, dtype=float))
        if len(points) != len(self.logw):
            raise InputError('support and weights differ in length')
        total = float(logsumexp(self.logw))
        if not abs(total) <= 1e-10:
            raise InputError('weights do not sum to one', log_total=total)
        if len(np.unique(points, axis=0)) != len(points):
            raise InputError('support has duplicate points')

    @classmethod
    def identity(cls, dim: int) -> 'LatticeMeasure':
        return cls(0, np.zeros((1, dim), dtype=np.int64), np.zeros(1))

    @classmethod
    def from_log_weights(
        cls, level: int, points: np.ndarray, logw: np.ndarray
    ) -> 'LatticeMeasure':
        """Normalize unnormalized log-weights"""
        logw = np.asarray(logw, dtype=float)
        return cls(level, points, logw - logsumexp(logw))

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def positions(self) -> np.ndarray:
        return self.points / max(self.level, 1)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.logw)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        pairs = zip(self.points, self.weights, strict=True)
        return {tuple(int(a) for a in p): float(w) for p, w in pairs}

    def to_model(self) -> LatticeMeasureModel:
        atoms = [
            MeasureAtomModel(alpha=[int(a) for a in p], weight=float(np.exp(lw)), logw=float(lw))
            for p, lw in zip(self.points, self.logw, strict=True)
        ]
        return LatticeMeasureModel(level=self.level, atoms=atoms)


def bergman_measure(pair: PotentialPair, table: NormingTable, x) -> LatticeMeasure:
    """``mu_k^x``: weights ``P_k(alpha, x) / Pi_k(x)`` on the lattice points of kP"""
    logw = log_weights(pair, table, x)
    if np.ndim(logw) != 1:
        raise DimensionMismatchError(
            'bergman_measure takes a single point', shape=list(np.shape(x))
        )
    return LatticeMeasure.from_log_weights(table.k, table.points, logw)


def bergman_measure_at(pair: PotentialPair, table: NormingTable, rho) -> LatticeMeasure:
    """The same measure addressed by the open-orbit coordinate ``rho`` of z"""
    return bergman_measure(pair, table, moment_map(pair, rho))


def entropy(measure: LatticeMeasure) -> float:
    """Shannon entropy ``-sum p log p`` from log-weights, with ``0 log 0 = 0``"""
    logw = measure.logw
    finite = np.isfinite(logw)
    return float(-np.sum(np.exp(logw[finite]) * logw[finite]))


def moments(measure: LatticeMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the atom positions"""
    w, pos = measure.weights, measure.positions
    mean = w @ pos
    centered = pos - mean
    return mean, np.einsum('n,ni,nj->ij', w, centered, centered)


def _dense(measure: LatticeMeasure) -> tuple[np.ndarray, np.ndarray]:
    lo = measure.points.min(axis=0)
    shape = measure.points.max(axis=0) - lo + 1
    grid = np.full(tuple(shape), -np.inf)
    grid[tuple((measure.points - lo).T)] = measure.logw
    return grid, lo


def convolve(mu: LatticeMeasure, nu: LatticeMeasure) -> LatticeMeasure:
    """
    Law of the sum of independent draws, on the integer lattice.

    Levels add, so the atoms of the result sit at ``(alpha + beta) / (k + l)``.
    """
    if mu.dim != nu.dim:
        raise ScaleMismatchError(
            'measures live on lattices of different rank', left=mu.dim, right=nu.dim
        )
    if len(nu.points) > len(mu.points):
        mu, nu = nu, mu
    grid, lo = _dense(mu)
    shift = nu.points.min(axis=0)
    span = nu.points.max(axis=0) - shift
    out = np.full(tuple(np.array(grid.shape) + span), -np.inf)
    for beta, w in zip(nu.points - shift, nu.logw, strict=True):
        window = tuple(slice(b, b + n) for b, n in zip(beta, grid.shape, strict=True))
        out[window] = np.logaddexp(out[window], grid + w)
    index = np.argwhere(np.isfinite(out))
    logw = out[tuple(index.T)]
    return LatticeMeasure.from_log_weights(mu.level + nu.level, index + lo + shift, logw)


def convolution_power(measure: LatticeMeasure, k: int) -> LatticeMeasure:
    result = LatticeMeasure.identity(measure.dim)
    for _ in range(k):
        result = convolve(result, measure)
    return result


def _max_deviation(left: LatticeMeasure, right: LatticeMeasure) -> float:
    a, b = left.as_dict(), right.as_dict()
    return max(abs(a.get(key, 0.0) - b.get(key, 0.0)) for key in a.keys() | b.keys())


def convolution_power_check(
    pair: PotentialPair,
    tables: Sequence[NormingTable],
    x_grid=None,
    *,
    tol: float | None = None,
) -> CheckReport:
    """Largest atomwise gap between ``mu_k^x`` and ``(mu_1^x)^{*k}`` over levels and the grid"""
    tol = settings.tol_convolution if tol is None else tol
    by_level = {t.k: t for t in tables}
    if 1 not in by_level:
        raise TableError('the convolution check needs the level-1 table')
    grid = default_grid(pair.polytope) if x_grid is None else as_points(x_grid, pair.dim)[0]

    worst = 0.0
    per_level: dict[str, float] = {}
    for x in grid:
        base = bergman_measure(pair, by_level[1], x)
        power = base
        for k in range(2, max(by_level) + 1):
            power = convolve(power, base)
            if k in by_level:
                gap = _max_deviation(bergman_measure(pair, by_level[k], x), power)
                per_level[str(k)] = max(per_level.get(str(k), 0.0), gap)
                worst = max(worst, gap)

    report = CheckReport(
        name='convolution',
        inputs_digest=digest(
            {'pair': pair.digest, 'levels': sorted(by_level), 'grid': grid.tolist()}
        ),
        residuals={'max_deviation': worst},
        tolerances={'max_deviation': tol},
        details={'per_level': per_level, 'grid_size': len(grid)},
    )
    label = 'convolution sequence' if report.passed else 'not a convolution sequence'
    logger.info('convolution check on %r: %s (max deviation %.3g)', pair, label, worst)
    return report.model_copy(update={'label': label})


class RateFunction:
    """``I(x) = u(x) - <x, rho_0> + phi(rho_0)`` for the base point ``x0 = grad phi(rho_0)``"""

    def __init__(self, pair: PotentialPair, x0):
        self._pair: PotentialPair = pair
        self.x0: np.ndarray = np.atleast_1d(np.asarray(x0, dtype=float))
        self.rho0: np.ndarray = np.atleast_1d(inverse_moment_map(pair, self.x0))
        self._phi0: float = float(pair.phi(self.rho0))

    def _closed(self, x: np.ndarray) -> np.ndarray:
        values = x @ self._pair.polytope.normals.T - self._pair.polytope.offsets_float
        outside = values.min(axis=1) < 0
        if outside.any():
            raise DomainError(
                'rate function is evaluated outside the polytope',
                point=x[int(np.argmax(outside))].tolist(),
            )
        return x

    def __call__(self, x) -> float | np.ndarray:
        points, single = as_points(x, self._pair.dim)
        points = self._closed(points)
        out = self._pair._u(points) - points @ self.rho0 + self._phi0
        return float(out[0]) if single else out

    def gradient(self, x) -> np.ndarray:
        points, single = as_points(x, self._pair.dim)
        out = self._pair._grad_u(self._closed(points)) - self.rho0
        return out[0] if single else out

    def hessian(self, x) -> np.ndarray:
        points, single = as_points(x, self._pair.dim)
        out = self._pair._hess_u(self._closed(points))
        return out[0] if single else out


def rate_function(pair: PotentialPair, x0) -> RateFunction:
    return RateFunction(pair, x0)


def ldp_residual(pair: PotentialPair, table: NormingTable, x0, k: int | None = None) -> float:
    """
    ``max |(1/k) log mu_k^{x0}(alpha) + I(alpha/k)|`` over interior lattice points.

    Only atoms with ``I(alpha/k) <= 1`` enter; the far tail is dominated by roundoff.
    """
    if k is not None and k != table.k:
        raise TableError(f'table is at level {table.k}, not {k}', level=table.k, requested=k)
    k = table.k
    measure = bergman_measure(pair, table, x0)
    positions = measure.positions
    facets = positions @ pair.polytope.normals.T - pair.polytope.offsets_float
    interior = facets.min(axis=1) >= settings.eps_int
    rate = rate_function(pair, x0)
    values = rate(positions[interior]) if interior.any() else np.zeros(0)
    values = np.atleast_1d(values)
    keep = values <= 1
    residual = np.abs(measure.logw[interior][keep] / k + values[keep])
    return float(residual.max()) if residual.size else 0.0


def bernstein(
    pair: PotentialPair,
    table: NormingTable,
    f: Callable[[np.ndarray], np.ndarray],
    x,
) -> float | np.ndarray:
    """``sum_alpha f(alpha/k) mu_k^x(alpha)``; ``f`` receives the ``(n, m)`` support"""
    points, single = as_points(x, pair.dim)
    samples = np.asarray(f(table.lattice.positions), dtype=float).reshape(-1)
    out = np.array(
        [float(bergman_measure(pair, table, p).weights @ samples) for p in points]
    )
    return float(out[0]) if single else out


def lattice_states(
    pair: PotentialPair, table: NormingTable, margin: float | None = None
) -> np.ndarray:
    """
    Positions ``alpha / N`` of the lattice points of NP.

    With ``margin`` only the points at least that far inside P are kept.
    """
    positions = table.lattice.positions
    if margin is None:
        return positions
    return positions[pair.polytope.contains(positions, margin)]


def wright_fisher_matrix(pair: PotentialPair, table: NormingTable, states) -> np.ndarray:
    """
    Transition matrix whose row for the state x is ``mu_N^x`` over the lattice points of NP.

    States may lie on ∂P, where the row is the limiting measure on the face through x. With
    ``lattice_states`` as states the matrix is square. Every row sums to one; columns follow
    the table's lexicographic order.
    """
    points, _ = as_points(states, pair.dim)
    return np.exp(np.atleast_2d(limit_log_weights(pair, table, points)))
