"""CSV, JSON and plot-script artifacts written by the command-line tools"""

import csv
import json
import logging
import pathlib
from collections.abc import Iterable, Sequence
from typing import Any

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from pydantic import BaseModel

from torentropy.toric.bergman import NormingTable
from torentropy.toric.measures import LatticeMeasure
from torentropy.toric.models import (
    CheckReport,
    EntropyCurveRow,
    LatticeMeasureModel,
    ManifoldModel,
    NormingTableModel,
    RunConfig,
)

logger = logging.getLogger(__name__)

here = pathlib.Path(__file__).parent.resolve()
SCHEMA_DIR = here / 'schemas'
jinja_env = Environment(
    loader=FileSystemLoader(str(here)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
)

SCHEMA_MODELS: dict[str, type[BaseModel]] = {
    'check-report': CheckReport,
    'entropy-curve-row': EntropyCurveRow,
    'lattice-measure': LatticeMeasureModel,
    'manifold': ManifoldModel,
    'norming-table': NormingTableModel,
    'run-config': RunConfig,
}


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    path: pathlib.Path, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> pathlib.Path:
    """Write rows with floats in their shortest round-tripping form"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        writer.writerows([_cell(v) for v in row] for row in rows)
    logger.info('wrote %s', path)
    return path


def write_json(path: pathlib.Path, payload: BaseModel | dict | list) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    path.write_text(text + '\n')
    logger.info('wrote %s', path)
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode='json')
    if hasattr(value, 'tolist'):
        return value.tolist()
    return str(value)


def entropy_curve_csv(path: pathlib.Path, rows: Sequence[EntropyCurveRow]) -> pathlib.Path:
    return write_csv(
        path,
        ['k', 'H_exact', 'H_asym', 'diff', 'ratio'],
        ([r.k, r.H_exact, r.H_asym, r.diff, r.ratio] for r in rows),
    )


def measure_csv(path: pathlib.Path, measure: LatticeMeasure) -> pathlib.Path:
    header = [f'alpha_{i + 1}' for i in range(measure.dim)] + ['weight']
    rows = (
        [*(int(a) for a in alpha), float(w)]
        for alpha, w in zip(measure.points, measure.weights, strict=True)
    )
    return write_csv(path, header, rows)


def table_csv(path: pathlib.Path, table: NormingTable) -> pathlib.Path:
    header = [f'alpha_{i + 1}' for i in range(table.points.shape[1])] + ['logQ']
    rows = (
        [*(int(a) for a in alpha), float(v)]
        for alpha, v in zip(table.points, table.log_q, strict=True)
    )
    return write_csv(path, header, rows)


def plot_script(path: pathlib.Path, template: str, **context: Any) -> pathlib.Path:
    """Render one of the ``*.py.jinja`` plotting scripts next to the data it reads"""
    text = jinja_env.get_template(f'{template}.py.jinja').render(**context)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info('wrote plot script %s', path)
    return path


def report_schemas() -> dict[str, dict[str, Any]]:
    return {name: model.model_json_schema() for name, model in SCHEMA_MODELS.items()}


def shipped_schemas() -> dict[str, dict[str, Any]]:
    """The schemas published with the package, as written by ``torentropy schema --out``"""
    return {
        name: json.loads((SCHEMA_DIR / f'{name}.schema.json').read_text(encoding='utf-8'))
        for name in SCHEMA_MODELS
    }


def schema_shape(node: dict[str, Any], defs: dict[str, Any] | None = None) -> dict[str, Any]:
    """
    Fields, types and required keys of a JSON schema with references resolved.

    Titles, descriptions, defaults and numeric or string constraints are left out.
    """
    defs = node.get('$defs', {}) if defs is None else defs
    if '$ref' in node:
        return schema_shape(defs[node['$ref'].rsplit('/', 1)[-1]], defs)
    if len(node.get('allOf', [])) == 1:
        return schema_shape(node['allOf'][0], defs)
    if 'anyOf' in node:
        options = (schema_shape(option, defs) for option in node['anyOf'])
        return {'anyOf': sorted(json.dumps(option, sort_keys=True) for option in options)}

    shape: dict[str, Any] = {}
    if 'type' in node:
        shape['type'] = node['type']
    if 'enum' in node:
        shape['enum'] = sorted(node['enum'])
    if 'items' in node:
        shape['items'] = schema_shape(node['items'], defs)
    if isinstance(node.get('additionalProperties'), dict):
        shape['values'] = schema_shape(node['additionalProperties'], defs)
    if 'properties' in node:
        shape['properties'] = {
            name: schema_shape(field, defs) for name, field in node['properties'].items()
        }
        shape['required'] = sorted(node.get('required', []))
    return shape


def schema_drift() -> list[str]:
    """Names of the shipped schemas whose shape no longer matches the models"""
    shipped = shipped_schemas()
    return [
        name
        for name, schema in report_schemas().items()
        if schema_shape(schema) != schema_shape(shipped[name])
    ]
