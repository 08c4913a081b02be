import hashlib
import json
import logging
from collections.abc import Callable
from typing import Any

from typing_extensions import TypeAliasType

import numpy as np

from torentropy.errors import DimensionMismatchError, NewtonConvergenceError
from torentropy.settings import settings

logger = logging.getLogger(__name__)

PointFn = TypeAliasType('PointFn', Callable[[np.ndarray], np.ndarray])
DomainFn = TypeAliasType('DomainFn', Callable[[np.ndarray], np.ndarray])


def as_points(points: Any, dim: int) -> tuple[np.ndarray, bool]:
    """
    Normalize user input to a ``(n, dim)`` float array.

    Returns the array and a flag telling whether a single point was given, so callers can
    squeeze their output back to the input's shape. In dimension one scalars are single
    points and flat arrays are lists of points.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 1 and dim == 1 and len(arr) > 1:
        return arr[:, None], False
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionMismatchError(
            f'expected points of dimension {dim}, got shape {np.shape(points)}',
            expected=dim,
            shape=list(np.shape(points)),
        )
    return arr, single


def relative_steps(points: np.ndarray, step: float | None = None) -> np.ndarray:
    """Per-point central-difference step ``h = step * max(1, |x|)``"""
    step = settings.fd_step if step is None else step
    return step * np.maximum(1.0, np.linalg.norm(points, axis=1))


def central_gradient(f: PointFn, points: np.ndarray, step: float | None = None) -> np.ndarray:
    n, m = points.shape
    h = relative_steps(points, step)
    grad = np.empty((n, m))
    for i in range(m):
        shift = np.zeros((n, m))
        shift[:, i] = h
        grad[:, i] = (f(points + shift) - f(points - shift)) / (2 * h)
    return grad


def central_hessian(f: PointFn, points: np.ndarray, step: float | None = None) -> np.ndarray:
    """Second central differences of a scalar field, one Hessian per row"""
    n, m = points.shape
    h = relative_steps(points, step)
    f0 = f(points)
    hess = np.empty((n, m, m))
    unit = np.eye(m)
    for i in range(m):
        ei = unit[i] * h[:, None]
        hess[:, i, i] = (f(points + ei) - 2 * f0 + f(points - ei)) / h**2
        for j in range(i + 1, m):
            ej = unit[j] * h[:, None]
            value = (
                f(points + ei + ej)
                - f(points + ei - ej)
                - f(points - ei + ej)
                + f(points - ei - ej)
            ) / (4 * h**2)
            hess[:, i, j] = hess[:, j, i] = value
    return hess


def central_jacobian(grad: PointFn, points: np.ndarray, step: float | None = None) -> np.ndarray:
    """Symmetrized central-difference Jacobian of a gradient field"""
    n, m = points.shape
    h = relative_steps(points, step)
    jac = np.empty((n, m, m))
    for i in range(m):
        shift = np.zeros((n, m))
        shift[:, i] = h
        jac[:, :, i] = (grad(points + shift) - grad(points - shift)) / (2 * h[:, None])
    return 0.5 * (jac + np.swapaxes(jac, 1, 2))


def _damped(hess: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(hess)
    bad = ~np.isfinite(cond) | (cond > 1e8)
    if bad.any():
        hess = hess.copy()
        scale = np.linalg.norm(hess[bad], ord=2, axis=(1, 2))
        eye = np.eye(hess.shape[-1])
        hess[bad] += (scale * 1e-8 + 1e-300)[:, None, None] * eye
    return hess


def solve_gradient_equation(
    *,
    value: PointFn,
    grad: PointFn,
    hess: PointFn,
    targets: np.ndarray,
    start: np.ndarray,
    domain: DomainFn | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
) -> np.ndarray:
    """
    Solve ``grad f(y) = t`` row-wise by safeguarded Newton ascent on ``<t, y> - f(y)``.

    Each Newton step is halved until the trial point lies in ``domain`` and the concave
    objective does not decrease. Hessians with condition number above 1e8 are damped.

    Parameters
    ----------
    value, grad, hess : callable
        Batched evaluators of a strictly convex ``f`` on ``(n, m)`` arrays.
    targets : np.ndarray
        ``(n, m)`` right-hand sides.
    start : np.ndarray
        ``(m,)`` or ``(n, m)`` starting points, inside ``domain``.

    Returns
    -------
    np.ndarray
        ``(n, m)`` solutions.
    """
    tol = settings.newton_tol if tol is None else tol
    max_iter = settings.newton_max_iter if max_iter is None else max_iter

    t = np.asarray(targets, dtype=float)
    y = np.array(np.broadcast_to(start, t.shape), dtype=float)
    active = np.ones(len(t), dtype=bool)

    for iteration in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            logger.debug('newton converged after %d iterations', iteration)
            return y

        ya, ta = y[idx], t[idx]
        direction = np.linalg.solve(_damped(hess(ya)), (ta - grad(ya))[..., None])[..., 0]
        base = np.einsum('ij,ij->i', ta, ya) - value(ya)

        scale = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        y_next = ya.copy()
        for _ in range(80):
            pending = ~accepted
            trial = ya[pending] + scale[pending, None] * direction[pending]
            ok = domain(trial) if domain is not None else np.ones(len(trial), dtype=bool)
            if ok.any():
                objective = np.full(len(trial), -np.inf)
                objective[ok] = np.einsum('ij,ij->i', ta[pending][ok], trial[ok]) - value(
                    trial[ok]
                )
                floor = base[pending] - 1e-12 * (1 + np.abs(base[pending]))
                ok &= objective >= floor
            rows = np.flatnonzero(pending)[ok]
            y_next[rows] = trial[ok]
            accepted[rows] = True
            if accepted.all():
                break
            scale[~accepted] *= 0.5

        step_norm = np.linalg.norm(y_next - ya, axis=1)
        full_norm = np.linalg.norm(direction, axis=1)
        y[idx] = y_next
        size = 1 + np.linalg.norm(y_next, axis=1)
        done = (full_norm <= tol * size) | (accepted & (step_norm <= tol * size))
        # a rejected line search at a tiny step means roundoff already dominates
        done |= ~accepted & (full_norm <= 1e3 * tol * size)
        active[idx[done]] = False

    if active.any():
        first = int(np.flatnonzero(active)[0])
        raise NewtonConvergenceError(
            'newton iteration did not converge',
            query=t[first].tolist(),
            last_iterate=y[first].tolist(),
        )
    return y


def digest(payload: Any) -> str:
    """Short stable fingerprint of a JSON-serializable payload"""
    text = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
