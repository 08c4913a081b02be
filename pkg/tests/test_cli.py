import csv
import json

import pytest
from click.testing import CliRunner

from torentropy.main import cli
from torentropy.reports import schema_shape, shipped_schemas


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def _error(result) -> dict:
    return json.loads(result.stderr.strip().splitlines()[-1])


def _report(path) -> dict:
    return json.loads(path.read_text())


def test_entropy_table(runner, tmp_path):
    result = runner.invoke(
        cli,
        ['entropy-table', '--manifold', 'builtin:fs-cp1', '--k', '16,64,256', '--x', '0.3',
         '--out', str(tmp_path), '--plot'],
    )
    assert result.exit_code == 0, result.output
    assert 'entropy: pass' in result.stdout
    with (tmp_path / 'entropy-curve.csv').open() as file:
        rows = list(csv.DictReader(file))
    assert [int(r['k']) for r in rows] == [16, 64, 256]
    diffs = [abs(float(r['diff'])) for r in rows]
    assert diffs[0] > diffs[1] > diffs[2]
    assert rows[0]['ratio'] == ''
    assert (tmp_path / 'entropy-curve.py').read_text().startswith('"""')
    assert (tmp_path / 'tables' / 'level-64.csv').exists()
    report = _report(tmp_path / 'entropy.json')
    assert report['verdict'] == 'pass'
    assert report['residuals']['monotone_violations'] == 0
    assert report['residuals']['max_ratio'] < 0.5


def test_entropy_table_fails_when_the_gap_stops_shrinking(runner, tmp_path):
    # k x << 1: the measures still sit on the vertex and the gap barely moves
    result = runner.invoke(
        cli,
        ['entropy-table', '--manifold', 'builtin:fs-cp1', '--k', '1,4,16', '--x', '0.0001',
         '--tol-entropy', '10', '--format', 'json', '--out', str(tmp_path)],
    )
    assert result.exit_code == 1, result.output
    assert 'entropy: fail' in result.stdout
    report = _report(tmp_path / 'entropy.json')
    assert report['residuals']['final_abs_diff'] < 10
    assert report['residuals']['monotone_violations'] == 0
    assert report['residuals']['max_ratio'] > report['tolerances']['max_ratio'] == 0.7
    assert report['label'] == 'entropy gap not closing'


def test_entropy_table_on_a_grid(runner, tmp_path):
    result = runner.invoke(
        cli,
        ['entropy-table', '--manifold', 'builtin:fs-cp2', '--k', '8..32', '--x', 'grid:4',
         '--out', str(tmp_path), '--format', 'json'],
    )
    assert result.exit_code in (0, 1), result.output
    report = _report(tmp_path / 'entropy.json')
    assert len(report['details']['curves']) == 3
    assert [row['k'] for row in report['details']['curves'][0]['rows']] == [8, 16, 32]


def test_invalid_polytope_is_an_input_error(runner, tmp_path):
    manifold = tmp_path / 'bad.json'
    manifold.write_text(
        json.dumps({
            'polytope': {'dimension': 1, 'facets': [
                {'normal': [2], 'offset': 0}, {'normal': [-1], 'offset': -1}
            ]},
            'potential': {'kind': 'guillemin'},
        })
    )
    result = runner.invoke(
        cli, ['balanced', '--manifold', str(manifold), '--out', str(tmp_path / 'out')]
    )
    assert result.exit_code == 2
    error = _error(result)
    assert error['error'] == 'invalid_polytope'
    assert 'non-primitive' in error['message']


def test_empty_level_list(runner, tmp_path):
    result = runner.invoke(cli, ['entropy-table', '--k', '', '--out', str(tmp_path)])
    assert result.exit_code == 2
    assert _error(result)['error'] == 'input_error'


def test_point_on_the_boundary(runner, tmp_path):
    result = runner.invoke(cli, ['entropy-table', '--x', '0', '--out', str(tmp_path)])
    assert result.exit_code == 2
    assert _error(result)['error'] == 'boundary_proximity'


def test_unknown_builtin(runner, tmp_path):
    result = runner.invoke(cli, ['maxent', '--manifold', 'builtin:cp9', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_convolution_fubini_study(runner, tmp_path):
    result = runner.invoke(cli, ['convolution', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path / 'convolution.json')
    assert report['label'] == 'convolution sequence'
    assert sorted(p.name for p in (tmp_path / 'measures').iterdir())[0] == 'level-1.csv'


def test_convolution_tampered(runner, tmp_path):
    result = runner.invoke(
        cli,
        ['convolution', '--manifold', 'builtin:tampered(1, 3, 0.1)', '--k', '1,2,3',
         '--out', str(tmp_path), '--format', 'json'],
    )
    assert result.exit_code == 1
    assert _report(tmp_path / 'convolution.json')['label'] == 'not a convolution sequence'


def test_balanced(runner, tmp_path):
    result = runner.invoke(cli, ['balanced', '--manifold', 'builtin:fs-cp2', '--k', '1,2,3',
                                 '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / 'tables' / 'level-3.csv').exists()
    assert _report(tmp_path / 'balanced.json')['label'] == 'balanced'


def test_maxent(runner, tmp_path):
    result = runner.invoke(cli, ['maxent', '--manifold', 'builtin:fs-cp2', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    x_star = _report(tmp_path / 'ke-center.json')['details']['x_star']
    assert x_star == pytest.approx([1 / 3, 1 / 3], abs=1e-6)


def test_maxent_round_sphere_with_given_constant(runner, tmp_path):
    result = runner.invoke(
        cli, ['maxent', '--manifold', 'builtin:round-sphere(r2=2)', '--a', '1',
              '--out', str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert _report(tmp_path / 'ke-center.json')['details']['x_star'] == pytest.approx(
        [0.0], abs=1e-6
    )


def test_bernstein(runner, tmp_path):
    result = runner.invoke(
        cli, ['bernstein', '--x', '0.2,0.5', '--out', str(tmp_path), '--plot']
    )
    assert result.exit_code == 0, result.output
    report = _report(tmp_path / 'bernstein.json')
    assert report['residuals']['rate_deviation'] < 1e-8
    with (tmp_path / 'bernstein.csv').open() as file:
        assert len(list(csv.DictReader(file))) == 6
    assert (tmp_path / 'bernstein.py').exists()


def test_gauss_entropy(runner, tmp_path):
    result = runner.invoke(cli, ['gauss-entropy', '--k', '2', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path / 'gauss-entropy.json')
    assert report['label'] == 'reported'
    level = report['details']['levels']['2']
    assert level['entries'] == 3
    assert abs(level['criticality']) < 1e-3


def test_schema(runner, tmp_path):
    result = runner.invoke(cli, ['schema'])
    assert result.exit_code == 0
    schemas = json.loads(result.stdout)
    assert 'residuals' in schemas['check-report']['properties']
    result = runner.invoke(cli, ['schema', '--out', str(tmp_path)])
    assert result.exit_code == 0
    assert (tmp_path / 'norming-table.schema.json').exists()


def test_config_file_wins_over_flags(runner, tmp_path):
    config = tmp_path / 'run.yaml'
    config.write_text('k: [4, 8]\nformat: json\ntolerances:\n  entropy: 0.5\n')
    out = tmp_path / 'out'
    result = runner.invoke(
        cli, ['entropy-table', '--config', str(config), '--k', '16', '--out', str(out)]
    )
    assert result.exit_code == 0, result.output
    report = _report(out / 'entropy.json')
    assert [row['k'] for row in report['details']['curves'][0]['rows']] == [4, 8]
    assert report['tolerances']['final_abs_diff'] == 0.5
    assert not (out / 'entropy-curve.csv').exists()


def test_outputs_are_deterministic(runner, tmp_path):
    for name in ('a', 'b'):
        result = runner.invoke(
            cli, ['balanced', '--k', '1,2,3', '--out', str(tmp_path / name)]
        )
        assert result.exit_code == 0, result.output
    for path in sorted((tmp_path / 'a').rglob('*.*')):
        twin = tmp_path / 'b' / path.relative_to(tmp_path / 'a')
        assert twin.read_bytes() == path.read_bytes()


_JSON_TYPES = {
    'object': dict,
    'array': list,
    'string': str,
    'integer': int,
    'number': (int, float),
    'boolean': bool,
    'null': type(None),
}


def _conforms(value, shape) -> bool:
    if 'anyOf' in shape:
        return any(_conforms(value, json.loads(option)) for option in shape['anyOf'])
    if 'type' in shape and not isinstance(value, _JSON_TYPES[shape['type']]):
        return False
    if 'enum' in shape and value not in shape['enum']:
        return False
    if 'items' in shape and not all(_conforms(item, shape['items']) for item in value):
        return False
    if 'values' in shape and not all(_conforms(v, shape['values']) for v in value.values()):
        return False
    if 'properties' in shape:
        if not set(shape['required']) <= set(value):
            return False
        return all(
            _conforms(value[key], field)
            for key, field in shape['properties'].items()
            if key in value
        )
    return True


@pytest.mark.parametrize(
    ('command', 'args', 'document'),
    [
        ('entropy-table', ['--k', '16,64', '--x', '0.3', '--format', 'json'], 'entropy.json'),
        ('balanced', ['--k', '1,2,3'], 'balanced.json'),
        ('convolution', ['--k', '1,2,3'], 'convolution.json'),
        ('maxent', ['--manifold', 'builtin:fs-cp2'], 'ke-center.json'),
        ('bernstein', ['--x', '0.2,0.5'], 'bernstein.json'),
        ('gauss-entropy', ['--k', '2'], 'gauss-entropy.json'),
    ],
)
def test_command_reports_follow_the_shipped_schema(runner, tmp_path, command, args, document):
    result = runner.invoke(cli, [command, *args, '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = _report(tmp_path / document)
    shipped = shipped_schemas()
    assert _conforms(report, schema_shape(shipped['check-report']))
    assert report['verdict'] == 'pass'
    broken = {**report, 'residuals': {'gap': 'large'}}
    assert not _conforms(broken, schema_shape(shipped['check-report']))
    if command == 'entropy-table':
        row = schema_shape(shipped['entropy-curve-row'])
        assert all(_conforms(r, row) for r in report['details']['curves'][0]['rows'])


def test_schema_check(runner):
    result = runner.invoke(cli, ['schema', '--check'])
    assert result.exit_code == 0, result.output
