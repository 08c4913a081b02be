"""Loading manifolds, run configs and command-line values"""

import json
import logging
import pathlib
import re
from typing import Any

import numpy as np
import yaml
from pydantic import ValidationError

from torentropy.errors import InputError
from torentropy.toric.bergman import NormingTable, tampered_pair
from torentropy.toric.models import GaugeShift, ManifoldModel, NormingTableModel, RunConfig
from torentropy.toric.polytope import DelzantPolytope, named_polytope
from torentropy.toric.potentials import (
    BergmanSumPair,
    FubiniStudyPair,
    GuilleminPair,
    KahlerEinsteinPair,
    PotentialPair,
    RoundSpherePair,
    apply_gauge,
)

logger = logging.getLogger(__name__)

_BUILTIN = re.compile(r'^builtin:(?P<name>[a-z0-9-]+)(?:\((?P<args>[^)]*)\))?$')

# positional argument names of the parametrized builtins
_POSITIONAL: dict[str, tuple[str, ...]] = {
    'fs-cpm': ('m', 'degree'),
    'round-sphere': ('r2',),
    'ke-cpm': ('m',),
    'tampered': ('m', 'level', 'amplitude'),
}


def _validation_error(e: ValidationError, what: str) -> InputError:
    errors = [
        {'loc': [str(p) for p in err['loc']], 'msg': err['msg']} for err in e.errors()
    ]
    return InputError(f'invalid {what}', errors=errors)


def read_document(path: pathlib.Path) -> Any:
    """Parse a YAML or JSON file"""
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f'cannot read {path}: {e.strerror}', path=str(path)) from e
    try:
        if path.suffix == '.json':
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InputError(f'cannot parse {path}: {e}', path=str(path)) from e


def _number(text: str) -> int | float:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise InputError(f'not a number: {text!r}') from None


def _builtin_params(name: str, args: str | None) -> dict[str, Any]:
    params: dict[str, Any] = {}
    if not args:
        return params
    names = _POSITIONAL.get(name, ())
    for i, item in enumerate(a.strip() for a in args.split(',')):
        if '=' in item:
            key, value = (s.strip() for s in item.split('=', 1))
        elif i < len(names):
            key, value = names[i], item
        else:
            raise InputError(f'too many arguments for builtin {name!r}', args=args)
        params[key] = _number(value)
    return params


def _load_table(value: Any, base_dir: pathlib.Path) -> NormingTableModel:
    if isinstance(value, str):
        value = read_document(base_dir / value)
    try:
        return NormingTableModel.model_validate(value)
    except ValidationError as e:
        raise _validation_error(e, 'norming table') from e


def _facets(polytope: DelzantPolytope) -> list[tuple[tuple[int, ...], str]]:
    return sorted(
        (tuple(normal), str(offset))
        for normal, offset in zip(polytope.normals.tolist(), polytope.offsets, strict=True)
    )


def pair_from_model(model: ManifoldModel, base_dir: pathlib.Path | None = None) -> PotentialPair:
    """Build the potential pair a manifold document describes"""
    base_dir = pathlib.Path('.') if base_dir is None else base_dir
    params = dict(model.potential.params)
    gauge = params.pop('gauge', None)
    match model.polytope:
        case str(name):
            polytope = named_polytope(name.strip())
        case None:
            polytope = None
        case facets:
            polytope = DelzantPolytope.from_model(facets)

    match model.potential.kind:
        case 'fs-cp1':
            pair: PotentialPair = FubiniStudyPair(1)
        case 'fs-cpm':
            pair = FubiniStudyPair(int(params.get('m', 1)), int(params.get('degree', 1)))
        case 'round-sphere':
            pair = RoundSpherePair(float(params.get('r2', 1.0)))
        case 'ke-cpm':
            pair = KahlerEinsteinPair(int(params.get('m', 1)))
        case 'tampered':
            pair = tampered_pair(
                int(params.get('m', 1)),
                int(params.get('level', 3)),
                float(params.get('amplitude', 0.1)),
            )
        case 'guillemin':
            if polytope is None:
                raise InputError('guillemin potentials need a polytope')
            pair = GuilleminPair(polytope)
        case 'bergman-sum':
            if polytope is None or 'table' not in params:
                raise InputError('bergman-sum potentials need a polytope and a table')
            table = NormingTable.from_model(_load_table(params['table'], base_dir), polytope)
            pair = BergmanSumPair(
                polytope, table.points, table.log_q, level=table.k, label=params.get('label')
            )
        case kind:
            raise InputError(f'unknown potential kind {kind!r}')
    if polytope is not None and _facets(polytope) != _facets(pair.polytope):
        raise InputError(
            f'the polytope does not match the {model.potential.kind} potential',
            expected=pair.polytope.to_model().model_dump(mode='json'),
        )
    if gauge is not None:
        try:
            pair = apply_gauge(pair, GaugeShift.model_validate(gauge))
        except ValidationError as e:
            raise _validation_error(e, 'gauge shift') from e
        except ValueError as e:
            raise InputError(str(e), gauge=gauge) from e
    return pair


def load_manifold(spec: str) -> PotentialPair:
    """
    Resolve ``--manifold``: a file path, or ``builtin:NAME`` with optional arguments such as
    ``builtin:fs-cpm(2)``, ``builtin:round-sphere(r2=4)`` or ``builtin:tampered(1, 3, 0.1)``.
    """
    match = _BUILTIN.match(spec.strip())
    if match:
        name = match['name']
        if name == 'fs-cp2':
            name, params = 'fs-cpm', {'m': 2}
        else:
            params = _builtin_params(name, match['args'])
        try:
            model = ManifoldModel.model_validate({'potential': {'kind': name, 'params': params}})
        except ValidationError as e:
            raise _validation_error(e, f'builtin manifold {name!r}') from e
        return pair_from_model(model)

    path = pathlib.Path(spec)
    data = read_document(path)
    try:
        model = ManifoldModel.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e, f'manifold file {path}') from e
    logger.info('loaded manifold %s (%s)', path, model.potential.kind)
    return pair_from_model(model, path.parent)


def parse_k_list(text: str) -> list[int]:
    """``16,64,256`` or a doubling ladder ``16..4096``"""
    text = text.strip()
    if not text:
        return []
    if '..' in text:
        lo, hi = (int(_number(s)) for s in text.split('..', 1))
        if lo < 1 or hi < lo:
            raise InputError(f'bad level ladder {text!r}')
        ladder = [lo]
        while ladder[-1] * 2 <= hi:
            ladder.append(ladder[-1] * 2)
        return ladder
    values = [_number(s) for s in text.split(',') if s.strip()]
    if any(not isinstance(v, int) for v in values):
        raise InputError(f'levels must be integers, got {text!r}')
    return [int(v) for v in values]


def parse_points(value: str | list | None, polytope: DelzantPolytope) -> np.ndarray | None:
    """
    Resolve ``--x``: ``grid:n``, points separated by ``;`` with coordinates separated by ``,``,
    or a list of points from a config file. In dimension one commas separate points.

    Every point must lie at least the interior margin inside P.
    """
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if value.startswith('grid:'):
            n = _number(value.removeprefix('grid:'))
            if not isinstance(n, int) or n < 1:
                raise InputError(f'bad grid size in {value!r}')
            points = polytope.interior_grid(n)
        else:
            groups = [[_number(c) for c in g.split(',') if c.strip()] for g in value.split(';')]
            if polytope.dim == 1:
                groups = [[c] for g in groups for c in g]
            points = np.array(groups, dtype=float)
    else:
        points = np.array(value, dtype=float)
    if points.ndim != 2 or points.shape[1] != polytope.dim or not len(points):
        raise InputError(
            f'expected points of dimension {polytope.dim}', shape=list(points.shape)
        )
    polytope.require_interior(points)
    return points


def build_run_config(
    config_path: pathlib.Path | None,
    flags: dict[str, Any],
    *,
    default_k: list[int] | None = None,
) -> RunConfig:
    """
    Merge defaults, command-line flags and a config file, in increasing precedence.

    Flags left unset are ``None`` and do not override the defaults.
    """
    merged: dict[str, Any] = {} if default_k is None else {'k': default_k}
    merged |= {key: value for key, value in flags.items() if value is not None}
    tolerances = dict(merged.pop('tolerances', None) or {})
    if config_path is not None:
        document = read_document(config_path)
        if not isinstance(document, dict):
            raise InputError(f'{config_path} must hold a mapping')
        tolerances |= document.pop('tolerances', None) or {}
        merged |= document
    merged['tolerances'] = tolerances
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise _validation_error(e, 'run configuration') from e
