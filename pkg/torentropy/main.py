import functools
import json
import logging
import pathlib
import sys
from collections.abc import Callable
from typing import Any

import click
import numpy as np

from torentropy.errors import NewtonConvergenceError, QuadratureError, TorEntropyError
from torentropy.reports import (
    entropy_curve_csv,
    measure_csv,
    plot_script,
    report_schemas,
    schema_drift,
    table_csv,
    write_csv,
    write_json,
)
from torentropy.settings import settings
from torentropy.toric.asymptotics import (
    balanced_criticality,
    entropy_error_curve,
    entropy_ladder_residuals,
    gaussian_entropy,
    ke_center_check,
    mean_zero_field,
    quadratic_perturbation,
)
from torentropy.toric.bergman import balanced_check, build_tables
from torentropy.toric.measures import bergman_measure, bernstein, convolution_power_check
from torentropy.toric.models import CheckReport, RunConfig
from torentropy.toric.polytope import DelzantPolytope
from torentropy.toric.potentials import PotentialPair
from torentropy.toric.utils import digest
from torentropy.utils import build_run_config, load_manifold, parse_k_list, parse_points

logger = logging.getLogger('torentropy')

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

# numerical failures mean the check could not be carried out, every other error is bad input
_CHECK_FAILURES = (NewtonConvergenceError, QuadratureError)


def _bump(center: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def f(x: np.ndarray) -> np.ndarray:
        return np.exp(-np.sum((x - center) ** 2, axis=1) / 0.05)

    return f


# test functions for the bernstein command, built from the polytope
TEST_FIELDS: dict[str, Callable[[DelzantPolytope], Callable[[np.ndarray], np.ndarray]]] = {
    'linear': lambda _: lambda x: x.sum(axis=1),
    'square': lambda _: lambda x: np.sum(x**2, axis=1),
    'bump': lambda polytope: _bump(polytope.center_of_mass),
}


def _setup_logging(verbose: int):
    level = {0: settings.log_level, 1: 'INFO'}.get(verbose, 'DEBUG')
    logging.basicConfig(
        level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s'
    )


def _fail(error: TorEntropyError) -> int:
    click.echo(json.dumps(error.to_dict(), sort_keys=True, default=str), err=True)
    return EXIT_FAIL if isinstance(error, _CHECK_FAILURES) else EXIT_INPUT


class Run:
    """Resolved inputs of one command: configuration, potential pair and x-points"""

    def __init__(self, config: RunConfig):
        self.config: RunConfig = config
        self.pair: PotentialPair = load_manifold(config.manifold)
        self.points: np.ndarray | None = parse_points(config.x, self.pair.polytope)
        self.out: pathlib.Path = config.out

    def tolerance(self, name: str) -> float:
        return self.config.tolerances.get(name, getattr(settings, f'tol_{name}'))

    def points_or_center(self) -> np.ndarray:
        if self.points is not None:
            return self.points
        return self.pair.polytope.center_of_mass[None, :]

    def tables(self, levels: list[int]):
        return build_tables(self.pair, levels, self.config.method)

    def save_tables(self, tables) -> None:
        if self.config.format == 'csv':
            for k, table in tables.items():
                table_csv(self.out / 'tables' / f'level-{k}.csv', table)

    def finish(self, report: CheckReport) -> int:
        write_json(self.out / f'{report.name}.json', report)
        click.echo(f'{report.name}: {report.verdict} ({report.label or "-"})')
        return EXIT_PASS if report.passed else EXIT_FAIL


def run_options(default_k: list[int] | None = None):
    """Options shared by every check command, merged into a ``RunConfig``"""

    def decorator(command):
        @click.option('--manifold', help='Manifold file (JSON/YAML) or builtin:NAME(args)')
        @click.option('--k', 'k_list', help='Levels: "16,64,256" or a doubling ladder "16..4096"')
        @click.option('--x', 'x_spec', help='Interior points "x1,x2;..." or "grid:n"')
        @click.option('--out', type=click.Path(path_type=pathlib.Path), help='Output directory')
        @click.option('--format', 'fmt', type=click.Choice(['csv', 'json']))
        @click.option(
            '--method', type=click.Choice(['auto', 'quadrature', 'closed-form']), default=None
        )
        @click.option('--config', 'config_path', type=click.Path(path_type=pathlib.Path))
        @click.option('--plot/--no-plot', default=None, help='Emit plotting scripts')
        @click.option('--tol-balanced', type=float)
        @click.option('--tol-convolution', type=float)
        @click.option('--tol-ke', type=float)
        @click.option('--tol-entropy', type=float)
        @click.option('--tol-bernstein', type=float)
        @click.option('-v', '--verbose', count=True)
        @functools.wraps(command)
        def wrapper(
            manifold, k_list, x_spec, out, fmt, method, config_path, plot, verbose, **kwargs
        ):
            _setup_logging(verbose)
            tolerances = {
                name: kwargs.pop(f'tol_{name}')
                for name in ('balanced', 'convolution', 'ke', 'entropy', 'bernstein')
            }
            try:
                flags: dict[str, Any] = {
                    'manifold': manifold,
                    'k': parse_k_list(k_list) if k_list is not None else None,
                    'x': x_spec,
                    'out': out,
                    'format': fmt,
                    'method': method,
                    'plot': plot,
                    'tolerances': {n: t for n, t in tolerances.items() if t is not None},
                }
                config = build_run_config(config_path, flags, default_k=default_k)
                code = command(Run(config), **kwargs)
            except TorEntropyError as e:
                code = _fail(e)
            sys.exit(code)

        return wrapper

    return decorator


@click.group()
@click.version_option(package_name='torentropy')
def cli():
    """Entropy of Bergman measures on toric Kähler manifolds"""


@cli.command('entropy-table')
@run_options()
def entropy_table(run: Run) -> int:
    """Exact entropies of the Bergman measures against their asymptotics"""
    tables = run.tables(run.config.k)
    run.save_tables(tables)
    points = run.points_or_center()
    curves = []
    residuals = {'final_abs_diff': 0.0, 'monotone_violations': 0.0}
    for i, x in enumerate(points):
        rows = entropy_error_curve(run.pair, tables, x, run.config.k)
        name = 'entropy-curve.csv' if len(points) == 1 else f'entropy-curve-{i}.csv'
        if run.config.format == 'csv':
            entropy_curve_csv(run.out / name, rows)
            if run.config.plot:
                plot_script(
                    run.out / name.replace('.csv', '.py'),
                    'entropy-curve',
                    manifold=run.config.manifold,
                    x=x.tolist(),
                    csv_name=name,
                    image_name=name.replace('.csv', '.png'),
                )
        curves.append({'x': x.tolist(), 'rows': [r.model_dump() for r in rows]})
        residuals['final_abs_diff'] = max(residuals['final_abs_diff'], abs(rows[-1].diff))
        for key, value in entropy_ladder_residuals(rows).items():
            if key == 'monotone_violations':
                residuals[key] += value
            else:
                residuals[key] = max(residuals.get(key, 0.0), value)

    tolerances = {'final_abs_diff': run.tolerance('entropy'), 'monotone_violations': 0.0}
    if 'max_ratio' in residuals:
        tolerances['max_ratio'] = settings.tol_entropy_ratio

    report = CheckReport(
        name='entropy',
        inputs_digest=digest(
            {'pair': run.pair.digest, 'k': run.config.k, 'x': points.tolist()}
        ),
        residuals=residuals,
        tolerances=tolerances,
        details={'curves': curves},
    )
    label = 'entropy asymptotics reached' if report.passed else 'entropy gap not closing'
    return run.finish(report.model_copy(update={'label': label}))


@cli.command('balanced')
@run_options(default_k=[1, 2, 3, 4, 5, 6, 7, 8])
def balanced(run: Run) -> int:
    """Check the balanced-metric identities on levels 1..K"""
    tables = run.tables(sorted({1, *run.config.k}))
    run.save_tables(tables)
    report = balanced_check(
        run.pair, list(tables.values()), run.points, tol=run.tolerance('balanced')
    )
    return run.finish(report)


@cli.command('convolution')
@run_options(default_k=[1, 2, 3, 4, 5, 6, 7, 8])
def convolution(run: Run) -> int:
    """Compare the Bergman measures with convolution powers of the level-1 measure"""
    tables = run.tables(sorted({1, *run.config.k}))
    run.save_tables(tables)
    if run.config.format == 'csv':
        x = run.points_or_center()[0]
        for k, table in tables.items():
            measure = bergman_measure(run.pair, table, x)
            measure_csv(run.out / 'measures' / f'level-{k}.csv', measure)
    report = convolution_power_check(
        run.pair, list(tables.values()), run.points, tol=run.tolerance('convolution')
    )
    return run.finish(report)


@cli.command('maxent')
@run_options()
@click.option('--a', 'a', type=float, help='Kähler-Einstein constant; fitted when omitted')
def maxent(run: Run, a: float | None) -> int:
    """Locate the maximal-entropy point and compare it with the Kähler-Einstein center"""
    report = ke_center_check(run.pair, a, tol=run.tolerance('ke'))
    return run.finish(report)


@cli.command('bernstein')
@run_options(default_k=[32, 64, 128])
@click.option('--field', type=click.Choice(sorted(TEST_FIELDS)), default='square')
def bernstein_cmd(run: Run, field: str) -> int:
    """Bernstein approximations ``B_k f(x)`` and their 1/k convergence"""
    f = TEST_FIELDS[field](run.pair.polytope)
    tables = run.tables(run.config.k)
    points = run.points_or_center()
    target = f(points)

    rows, deviation = [], 0.0
    for i, x in enumerate(points):
        errors = []
        for k in run.config.k:
            value = bernstein(run.pair, tables[k], f, x)
            errors.append((k, value - float(target[i])))
            rows.append([k, i, value, float(target[i]), errors[-1][1]])
        for (k0, e0), (k1, e1) in zip(errors, errors[1:], strict=False):
            if abs(e0) > 1e-13:
                deviation = max(deviation, abs(e1 * k1 / (e0 * k0) - 1))

    if run.config.format == 'csv':
        write_csv(run.out / 'bernstein.csv', ['k', 'point', 'value', 'target', 'error'], rows)
        if run.config.plot:
            plot_script(
                run.out / 'bernstein.py',
                'bernstein',
                manifold=run.config.manifold,
                x=points.tolist(),
                field=field,
                csv_name='bernstein.csv',
                image_name='bernstein.png',
            )
    report = CheckReport(
        name='bernstein',
        inputs_digest=digest(
            {'pair': run.pair.digest, 'k': run.config.k, 'x': points.tolist(), 'f': field}
        ),
        residuals={'rate_deviation': deviation},
        tolerances={'rate_deviation': run.tolerance('bernstein')},
        details={'field': field, 'rows': rows},
    )
    label = 'weak law at rate 1/k' if report.passed else 'rate 1/k not observed'
    return run.finish(report.model_copy(update={'label': label}))


@cli.command('gauss-entropy')
@run_options(default_k=[4])
@click.option('--eta', type=click.Choice(['quadratic', 'linear']), default='quadratic')
@click.option('--h', 'h', type=float, default=1e-3, help='Finite-difference step')
def gauss_entropy(run: Run, eta: str, h: float) -> int:
    """Gaussian entropy ``-sum log Q`` and its derivative along a mean-zero perturbation"""
    polytope = run.pair.polytope
    if eta == 'quadratic':
        field = quadratic_perturbation(polytope)
    else:
        field = mean_zero_field(
            polytope,
            lambda x: x.sum(axis=1),
            name='linear',
            grad=lambda x: np.ones_like(x),
            hess=lambda x: np.zeros((len(x), polytope.dim, polytope.dim)),
        )
    tables = run.tables(run.config.k)
    run.save_tables(tables)
    levels = {
        str(k): {
            'gaussian_entropy': gaussian_entropy(table),
            'entries': len(table),
            'criticality': balanced_criticality(run.pair, k, field, h),
        }
        for k, table in tables.items()
    }
    # reported, not gated
    report = CheckReport(
        name='gauss-entropy',
        inputs_digest=digest({'pair': run.pair.digest, 'k': run.config.k, 'eta': eta, 'h': h}),
        residuals={},
        tolerances={},
        label='reported',
        details={'levels': levels, 'eta': eta, 'h': h},
    )
    return run.finish(report)


@cli.command('schema')
@click.option('--out', type=click.Path(path_type=pathlib.Path), default=None)
@click.option(
    '--check', is_flag=True, help='Compare the models with the schemas shipped in the package'
)
def schema(out: pathlib.Path | None, check: bool):
    """Print the JSON schemas of the report documents, or write one file per schema"""
    if check:
        drifted = schema_drift()
        for name in drifted:
            click.echo(f'{name}: shipped schema is out of date', err=True)
        sys.exit(EXIT_FAIL if drifted else EXIT_PASS)
    schemas = report_schemas()
    if out is None:
        click.echo(json.dumps(schemas, indent=2, sort_keys=True))
        return
    for name, document in schemas.items():
        write_json(out / f'{name}.schema.json', document)


if __name__ == '__main__':
    cli()
