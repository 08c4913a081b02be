"""Norming constants, density of states, weights and the lattice-path partition function"""

import asyncio
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

from typing_extensions import TypeAliasType

import numpy as np
from scipy.integrate import quad
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, logsumexp

from torentropy.errors import (
    BoundaryProximityError,
    ConvolutionLimitError,
    DomainError,
    QuadratureError,
    TableError,
)
from torentropy.settings import settings
from torentropy.toric.models import CheckReport, NormingEntryModel, NormingTableModel
from torentropy.toric.polytope import DelzantPolytope, LatticePointSet, simplex
from torentropy.toric.potentials import (
    BergmanSumPair,
    FubiniStudyPair,
    GaugedPair,
    PotentialPair,
    inverse_moment_map,
)
from torentropy.toric.quadrature import log_integrate
from torentropy.toric.utils import as_points, digest

logger = logging.getLogger(__name__)

BuildMethod = TypeAliasType('BuildMethod', Literal['auto', 'quadrature', 'laplace', 'closed-form'])

__all__ = [
    'DensityOfStates',
    'NormingTable',
    'balanced_check',
    'build_table',
    'build_tables',
    'default_grid',
    'closed_form_log_q',
    'density_of_states',
    'limit_log_weights',
    'log_weights',
    'norming_constant',
    'norming_laplace',
    'partition_function',
    'partition_table',
    'radial_norming_constant',
    'tampered_pair',
    'weight',
]


@dataclass(frozen=True, eq=False)
class NormingTable:
    """Log norming constants ``log Q_k(alpha)`` indexed by the lattice points of kP"""

    lattice: LatticePointSet
    log_q: np.ndarray
    method: str
    gauge: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.lattice) == 0:
            raise TableError('table is empty')
        if len(self.log_q) != len(self.lattice):
            raise TableError(
                'table is not indexed by the lattice points',
                entries=len(self.log_q),
                points=len(self.lattice),
            )
        if not np.isfinite(self.log_q).all():
            raise TableError('table holds non-finite log norming constants')

    @property
    def k(self) -> int:
        return self.lattice.level

    @property
    def points(self) -> np.ndarray:
        return self.lattice.points

    def __len__(self) -> int:
        return len(self.lattice)

    def log_q_of(self, alpha) -> float:
        key = tuple(int(a) for a in np.atleast_1d(alpha))
        try:
            return float(self.log_q[self.lattice.index[key]])
        except KeyError:
            raise TableError(
                f'lattice point {list(key)} is not in the level-{self.k} table', alpha=list(key)
            ) from None

    def shifted(self, delta: np.ndarray, method: str | None = None) -> 'NormingTable':
        return NormingTable(
            self.lattice, self.log_q + delta, method or self.method, dict(self.gauge)
        )

    def to_model(self) -> NormingTableModel:
        entries = [
            NormingEntryModel(alpha=[int(a) for a in alpha], logQ=float(value))
            for alpha, value in zip(self.points, self.log_q, strict=True)
        ]
        return NormingTableModel(k=self.k, entries=entries, method=self.method, gauge=self.gauge)

    @classmethod
    def from_model(cls, model: NormingTableModel, polytope: DelzantPolytope) -> 'NormingTable':
        lattice = polytope.lattice_points(model.k)
        given = {tuple(e.alpha): e.logQ for e in model.entries}
        missing = [list(a) for a in lattice.index if a not in given]
        extra = [list(a) for a in given if a not in lattice.index]
        if missing or extra:
            raise TableError(
                'table entries do not match the lattice points of kP',
                missing=missing[:5],
                extra=extra[:5],
            )
        log_q = np.array([given[a] for a in lattice.index])
        return cls(lattice, log_q, model.method, model.gauge)


# norming constants


def _exponent(pair: PotentialPair, k: int, alpha: np.ndarray):
    """``k (u(x) + <alpha/k - x, grad u(x)>)``, the log-integrand of the norming constant"""
    a = np.asarray(alpha, dtype=float) / k

    def logf(x: np.ndarray) -> np.ndarray:
        return k * (pair._u(x) + np.einsum('ij,ij->i', a - x, pair._grad_u(x)))

    return logf


def norming_constant(pair: PotentialPair, k: int, alpha) -> float:
    """
    ``log Q_k(alpha)`` by adaptive log-domain cubature over the polytope.

    The integrand peaks at ``alpha / k``, where the decomposition is star-subdivided.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    result = log_integrate(
        _exponent(pair, k, alpha), pair.polytope.fan_simplices, peak=alpha / k
    )
    if not result.converged:
        raise QuadratureError(
            'norming-constant cubature did not reach its tolerance',
            alpha=alpha.tolist(),
            k=k,
            log_estimate=result.log_value,
            log_error=result.log_error,
            elements=result.elements,
        )
    return result.log_value


def norming_laplace(pair: PotentialPair, k: int, alpha) -> float:
    """Leading Laplace term ``k u(a) + (m/2) log(2 pi / k) - 1/2 log det hess u(a)``, a = alpha/k"""
    a = np.atleast_1d(np.asarray(alpha, dtype=float)) / k
    points = pair.polytope.require_interior(a)
    _, logdet = np.linalg.slogdet(pair._hess_u(points))
    return float(
        k * pair._u(points)[0] + 0.5 * pair.dim * math.log(2 * math.pi / k) - 0.5 * logdet[0]
    )


def radial_norming_constant(pair: PotentialPair, k: int, alpha: int) -> float:
    """
    ``log Q_k(alpha)`` in dimension one from the log-coordinate integral.

    Integrates ``exp(alpha rho - k phi(rho)) phi''(rho)`` over the whole line with QUADPACK,
    after shifting by the maximum of the (concave) exponent.
    """
    if pair.dim != 1:
        raise TableError('the radial oracle is one-dimensional', dim=pair.dim)

    def g(rho: float) -> float:
        point = np.array([[rho]])
        curvature = float(pair._hess_phi(point)[0, 0, 0])
        if curvature <= 0:
            return -math.inf
        return float(alpha * rho - k * pair._phi(point)[0]) + math.log(curvature)

    peak = minimize_scalar(lambda r: -g(r), bracket=(-1.0, 1.0))
    top, g_top = float(peak.x), -float(peak.fun)
    integrand = lambda r: math.exp(g(r) - g_top)
    left, _ = quad(integrand, -np.inf, top, epsabs=0, epsrel=1e-12, limit=200)
    right, _ = quad(integrand, top, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return g_top + math.log(left + right)


def closed_form_log_q(pair: PotentialPair, points: np.ndarray, k: int) -> np.ndarray | None:
    """
    Exact ``log Q_k`` for Fubini-Study pairs and their gauge shifts, else ``None``.

    For degree ``d`` the integrand is ``d^(-kd) prod_j x_j^alpha_j`` with
    ``alpha_0 = kd - |alpha|``, a Dirichlet integral over the dilated simplex. A gauge shift
    ``(c, b, kv)`` maps ``log Q(alpha)`` to ``log Q0(alpha - kb) + <alpha - kb, kv> - kc``.
    """
    alphas = np.asarray(points, dtype=float)
    if isinstance(pair, GaugedPair):
        b, kv = pair.shift.vectors(pair.dim)
        base = alphas - k * np.asarray(b)
        inner = closed_form_log_q(pair.base, base, k)
        if inner is None:
            return None
        return inner + base @ np.asarray(kv, dtype=float) - k * pair.shift.c
    if isinstance(pair, FubiniStudyPair):
        m, d = pair.params()['m'], pair.params()['degree']
        alpha0 = k * d - alphas.sum(axis=1)
        return (
            m * math.log(d)
            + gammaln(alphas + 1).sum(axis=1)
            + gammaln(alpha0 + 1)
            - gammaln(k * d + m + 1)
        )
    return None


async def _gather_constants(pair: PotentialPair, k: int, alphas: np.ndarray) -> list[float]:
    sem = asyncio.Semaphore(settings.threads)

    async def one(alpha: np.ndarray) -> float:
        async with sem:
            return await asyncio.to_thread(norming_constant, pair, k, alpha)

    return await asyncio.gather(*(one(alpha) for alpha in alphas))


def build_table(pair: PotentialPair, k: int, method: BuildMethod = 'auto') -> NormingTable:
    """
    Norming-constant table of ``pair`` at level ``k``.

    ``laplace`` tables use the Laplace term for interior lattice points and cubature for
    lattice points on the boundary. ``auto`` picks the closed form when one exists.
    """
    lattice = pair.polytope.lattice_points(k)
    gauge = {'pair': pair.digest}
    exact = closed_form_log_q(pair, lattice.points, k)

    if method == 'closed-form' and exact is None:
        raise TableError(f'no closed form for {pair!r}')
    if method in ('closed-form', 'auto') and exact is not None:
        logger.info('level %d: closed-form table with %d entries', k, len(lattice))
        return NormingTable(lattice, exact, 'closed-form', gauge)

    if method == 'laplace':
        values = np.empty(len(lattice))
        boundary = []
        for i, alpha in enumerate(lattice.points):
            try:
                values[i] = norming_laplace(pair, k, alpha)
            except BoundaryProximityError:
                boundary.append(i)
        if boundary:
            values[boundary] = asyncio.run(
                _gather_constants(pair, k, lattice.points[boundary])
            )
        return NormingTable(lattice, values, 'laplace', gauge)

    values = asyncio.run(_gather_constants(pair, k, lattice.points))
    logger.info('level %d: quadrature table with %d entries', k, len(lattice))
    return NormingTable(lattice, np.array(values), 'quadrature', gauge)


def build_tables(
    pair: PotentialPair, levels: Sequence[int], method: BuildMethod = 'auto'
) -> dict[int, NormingTable]:
    return {k: build_table(pair, k, method) for k in sorted(set(levels))}


# density of states and weights


def _check_gauge(pair: PotentialPair, table: NormingTable):
    owner = table.gauge.get('pair')
    if owner is not None and owner != pair.digest:
        raise TableError(
            'table was built for a different potential or gauge',
            table_pair=owner,
            pair=pair.digest,
        )


def log_weights(pair: PotentialPair, table: NormingTable, x) -> np.ndarray:
    """``log P_k(alpha, x)`` for every lattice point, one row per point x"""
    _check_gauge(pair, table)
    points, single = as_points(x, pair.dim)
    rho = inverse_moment_map(pair, points)
    rho = rho.reshape(len(points), pair.dim)
    out = rho @ table.points.T - table.k * pair._phi(rho)[:, None] - table.log_q[None, :]
    return out[0] if single else out


def weight(pair: PotentialPair, table: NormingTable, alpha, x) -> float | np.ndarray:
    """``<alpha, rho_x> - k phi(rho_x) - log Q_k(alpha)``"""
    log_q = table.log_q_of(alpha)
    points, single = as_points(x, pair.dim)
    _check_gauge(pair, table)
    rho = inverse_moment_map(pair, points).reshape(len(points), pair.dim)
    out = rho @ np.atleast_1d(alpha) - table.k * pair._phi(rho) - log_q
    return float(out[0]) if single else out


def density_of_states(pair: PotentialPair, table: NormingTable, x) -> float | np.ndarray:
    """``log Pi_k(x)``, the log-sum-exp of the weights"""
    logw = np.atleast_2d(log_weights(pair, table, x))
    out = logsumexp(logw, axis=1)
    _, single = as_points(x, pair.dim)
    return float(out[0]) if single else out


_ON_BOUNDARY = 1e-12


def _face_log_weights(
    pair: PotentialPair, table: NormingTable, point: np.ndarray, values: np.ndarray
) -> np.ndarray:
    polytope = pair.polytope
    active = values <= _ON_BOUNDARY
    normals = polytope.normals[active]
    num = np.array([a.numerator for a in polytope.offsets], dtype=np.int64)[active]
    den = np.array([a.denominator for a in polytope.offsets], dtype=np.int64)[active]
    # alpha lies on kF exactly when <alpha, v_r> = k a_r on every active facet
    on_face = ((table.points @ normals.T) * den == table.k * num).all(axis=1)
    face = np.flatnonzero(on_face)
    if len(face) == 0:
        raise DomainError(
            f'no lattice point of the level-{table.k} table lies on the face of x',
            point=point.tolist(),
        )
    logw = np.full(len(table), -np.inf)
    if len(face) == 1:
        logw[face] = 0.0
        return logw

    tangent = null_space(normals.astype(float))
    room = values[~active].min() / np.abs(polytope.normals[~active]).sum(axis=1).max()
    h = min(settings.fd_step, 0.5 * room)
    forward = pair._u(point + h * tangent.T)
    backward = pair._u(point - h * tangent.T)
    slope = tangent @ ((forward - backward) / (2 * h))
    if not np.isfinite(slope).all():
        raise DomainError(
            'the symplectic potential cannot be evaluated on the face of x',
            point=point.tolist(),
        )
    alphas = table.points[face]
    exponents = (alphas - alphas[0]) @ slope - table.log_q[face]
    logw[face] = exponents - logsumexp(exponents)
    return logw


def limit_log_weights(pair: PotentialPair, table: NormingTable, x) -> np.ndarray:
    """
    ``log mu_k^x(alpha)`` for x anywhere in the closed polytope.

    Interior points use the weights directly. At a point of ∂P the measure is the limit from
    inside: it lives on the lattice points of the smallest face F through x, with ratios
    ``exp(<alpha - beta, grad_F u(x)> - log Q(alpha) + log Q(beta))``. Only derivatives of u
    along F enter and u is finite on F, so they are central differences of u inside F. A
    vertex gives the point mass at its lattice point. Points closer to ∂P than
    ``settings.eps_int`` without lying on it raise ``BoundaryProximityError``.
    """
    _check_gauge(pair, table)
    points, single = as_points(x, pair.dim)
    values = pair.polytope.facet_values(points).reshape(len(points), -1)
    out = np.empty((len(points), len(table)))
    for i, (point, ell) in enumerate(zip(points, values, strict=True)):
        if abs(ell.min()) <= _ON_BOUNDARY:
            out[i] = _face_log_weights(pair, table, point, ell)
        else:
            logw = log_weights(pair, table, point)
            out[i] = logw - logsumexp(logw)
    return out[0] if single else out


class DensityOfStates:
    """``x -> log Pi_k(x)`` for one pair and level"""

    def __init__(self, pair: PotentialPair, table: NormingTable):
        _check_gauge(pair, table)
        self._pair: PotentialPair = pair
        self._table: NormingTable = table

    @property
    def k(self) -> int:
        return self._table.k

    def __call__(self, x) -> float | np.ndarray:
        return density_of_states(self._pair, self._table, x)

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        rho = self._pair._grad_u(x)
        exponents = rho @ self._table.points.T - self._table.k * self._pair._phi(rho)[:, None]
        return logsumexp(exponents - self._table.log_q[None, :], axis=1)

    def log_total(self) -> float:
        """``log`` of the integral of Pi_k over P, which equals the lattice-point count"""
        result = log_integrate(self._log_density, self._pair.polytope.fan_simplices)
        if not result.converged:
            raise QuadratureError(
                'density-of-states integral did not reach its tolerance',
                log_estimate=result.log_value,
            )
        return result.log_value


# lattice-path partition function


def _partition_array(table_1: NormingTable, k: int) -> tuple[np.ndarray, np.ndarray]:
    if table_1.k != 1:
        raise TableError('the partition function needs the level-1 table', level=table_1.k)
    if k > settings.partition_max_k:
        raise ConvolutionLimitError(
            f'level {k} exceeds the exact convolution cap',
            k=k,
            cap=settings.partition_max_k,
        )
    base = table_1.points - table_1.points.min(axis=0)
    offset = table_1.points.min(axis=0)
    span = base.max(axis=0)
    steps = -table_1.log_q

    current = np.full(tuple(span + 1), -np.inf)
    current[tuple(base.T)] = steps
    for j in range(2, k + 1):
        nxt = np.full(tuple(j * span + 1), -np.inf)
        for beta, w in zip(base, steps, strict=True):
            window = tuple(slice(b, b + n) for b, n in zip(beta, current.shape, strict=True))
            nxt[window] = np.logaddexp(nxt[window], current + w)
        current = nxt
    return current, k * offset


def partition_table(table_1: NormingTable, k: int, alphas) -> np.ndarray:
    """
    ``log P_k(alpha)``: log of the sum over ordered compositions
    ``beta_1 + ... + beta_k = alpha`` of ``prod 1/Q_1(beta_j)``, by repeated lattice
    convolution in the log domain.
    """
    current, offset = _partition_array(table_1, k)
    index = np.atleast_2d(np.asarray(alphas, dtype=np.int64)) - offset
    inside = ((index >= 0) & (index < np.array(current.shape))).all(axis=1)
    out = np.full(len(index), -np.inf)
    out[inside] = current[tuple(index[inside].T)]
    return out


def partition_function(table_1: NormingTable, k: int, alpha) -> float:
    return float(partition_table(table_1, k, [np.atleast_1d(alpha)])[0])


# balanced metrics


def _variation(log_values: np.ndarray) -> float:
    """Relative spread ``max / min - 1`` of positive values given by their logs"""
    return float(math.expm1(np.max(log_values) - np.min(log_values)))


def default_grid(polytope: DelzantPolytope) -> np.ndarray:
    return polytope.interior_grid(9 if polytope.dim == 1 else 6)


def balanced_check(
    pair: PotentialPair,
    tables: Sequence[NormingTable],
    x_grid=None,
    *,
    tol: float | None = None,
) -> CheckReport:
    """
    Test the balanced-metric identities on levels ``1..K``.

    Residuals: the grid variation of ``Pi_k``; the grid variation of ``Pi_k / Pi_1^k``; the
    spread of ``P_k(alpha) Q_k(alpha)`` over alpha; and ``|A_k Pi_k / Pi_1^k - 1|`` where
    ``A_k`` is the flat value of ``P_k Q_k``. The lattice-count and volume formula values of
    ``A_k`` are reported alongside.
    """
    tol = settings.tol_balanced if tol is None else tol
    by_level = {t.k: t for t in tables}
    if 1 not in by_level:
        raise TableError('the balanced check needs the level-1 table')
    gauges = {t.gauge.get('pair') for t in tables}
    if len(gauges) > 1:
        raise TableError('tables were built in different gauges', gauges=sorted(map(str, gauges)))
    for t in tables:
        _check_gauge(pair, t)

    grid = default_grid(pair.polytope) if x_grid is None else as_points(x_grid, pair.dim)[0]
    log_pi_1 = np.atleast_1d(density_of_states(pair, by_level[1], grid))
    n_1 = len(by_level[1])
    volume = pair.polytope.volume

    density, ratio, spread, consistency = [], [], [], []
    levels: dict[str, Any] = {}
    for k in sorted(by_level):
        table = by_level[k]
        log_pi = np.atleast_1d(density_of_states(pair, table, grid))
        log_ratio = log_pi - k * log_pi_1
        density.append(_variation(log_pi))
        ratio.append(_variation(log_ratio))
        entry: dict[str, Any] = {
            'density_variation': density[-1],
            'ratio_variation': ratio[-1],
            'log_ratio': float(np.mean(log_ratio)),
            'log_A_lattice_count': math.log(len(table)) - math.log(volume)
            + k * (math.log(volume) - math.log(n_1))
            + (k - 1) * pair.dim * math.log(2 * math.pi),
            'log_A_volume': math.log(len(table)) - math.log(volume)
            + k * (math.log(volume) - math.log(n_1)),
        }
        if k > 1:
            try:
                log_pq = partition_table(by_level[1], k, table.points) + table.log_q
            except ConvolutionLimitError as e:
                entry['skipped'] = e.message
            else:
                spread.append(_variation(log_pq))
                log_a = float(np.median(log_pq))
                consistency.append(abs(math.expm1(log_a + entry['log_ratio'])))
                entry['log_A'] = log_a
                entry['product_spread'] = spread[-1]
        levels[str(k)] = entry

    residuals = {
        'density_variation': max(density),
        'ratio_variation': max(ratio),
        'product_spread': max(spread, default=0.0),
        'ak_consistency': max(consistency, default=0.0),
    }
    report = CheckReport(
        name='balanced',
        inputs_digest=digest(
            {'pair': pair.digest, 'levels': sorted(by_level), 'grid': grid.tolist()}
        ),
        residuals=residuals,
        tolerances=dict.fromkeys(residuals, tol),
        details={'levels': levels, 'grid_size': len(grid)},
    )
    label = 'balanced' if report.passed else 'not balanced'
    report = report.model_copy(update={'label': label})
    logger.info('balanced check on %r: %s', pair, label)
    return report


def tampered_pair(m: int = 1, level: int = 3, amplitude: float = 0.1) -> BergmanSumPair:
    """
    Bergman potential of a Fubini-Study table perturbed by ``1 + amplitude * sin(|alpha|)``.

    At level one every interval table is a gauge of Fubini-Study, so the default uses three.
    """
    fs = FubiniStudyPair(m)
    lattice = simplex(m).lattice_points(level)
    log_q = closed_form_log_q(fs, lattice.points, level)
    log_q = log_q + np.log1p(amplitude * np.sin(lattice.points.sum(axis=1)))
    return BergmanSumPair(fs.polytope, lattice.points, log_q, level=level, label='tampered')
