import json
import logging

import pytest

from rungelab.cli import build_parser, run_cli
from rungelab.report import read_sidecar


@pytest.fixture
def write_config(tmp_path):
    def factory(**data):
        body = {'experiment': 'verify_solver', 'seed': 1, 'verify': {'n': 4},
                'output': {'dir': str(tmp_path / 'out')}}
        body.update(data)
        path = tmp_path / 'config.json'
        path.write_text(json.dumps(body))
        return str(path)
    return factory


def test_parser_commands():
    parser = build_parser()
    args = parser.parse_args(['run', 'cfg.json', '--jobs', '3', '--seed', '4'])
    assert (args.command, args.config, args.jobs, args.seed) == ('run', 'cfg.json', 3, 4)
    args = parser.parse_args(['cache', 'ls', '--cache', 'somewhere'])
    assert (args.action, args.cache) == ('ls', 'somewhere')


def test_verify_passes(write_config, tmp_path):
    path = write_config(tolerances={'min_order': 1.0})
    assert run_cli(['verify', path]) == 0
    assert (tmp_path / 'out' / 'verify_solver.csv').exists()
    sidecar = read_sidecar(str(tmp_path / 'out' / 'verify_solver.json'))
    assert sidecar['passed'] is True
    assert sidecar['seed'] == 1


def test_failed_tolerance_exits_two(write_config):
    path = write_config(tolerances={'min_order': 10.0})
    assert run_cli(['run', path]) == 2


def test_verify_forces_the_solver_study(write_config, tmp_path):
    path = write_config(experiment='runge', tolerances={'min_order': 1.0})
    assert run_cli(['verify', path, '--out', str(tmp_path / 'elsewhere')]) == 0
    assert (tmp_path / 'elsewhere' / 'verify_solver.csv').exists()


def test_rerun_is_byte_identical(write_config, tmp_path):
    path = write_config(tolerances={'min_order': 1.0})
    out = tmp_path / 'out'
    names = ['verify_solver.csv', 'verify_solver-fits.csv', 'verify_solver.json']
    assert run_cli(['run', path]) == 0
    first = [(out / name).read_bytes() for name in names]
    assert run_cli(['run', path]) == 0
    assert [(out / name).read_bytes() for name in names] == first


def test_malformed_config(tmp_path, caplog):
    path = tmp_path / 'bad.json'
    path.write_text('{"seed": 1,\n "omega": }')
    with caplog.at_level(logging.ERROR):
        assert run_cli(['run', str(path)]) == 1
    assert 'Malformed config JSON at line 2' in caplog.text


def test_unknown_field(write_config, caplog):
    path = write_config(grid={'n': 8, 'bogus': True})
    with caplog.at_level(logging.ERROR):
        assert run_cli(['run', path]) == 1
    assert 'grid.bogus' in caplog.text


def test_bad_arguments():
    assert run_cli(['run']) == 1
    assert run_cli(['explode', 'cfg.json']) == 1
    assert run_cli(['run', 'cfg.json', '--jobs', '0']) == 1


def test_cache_listing_and_removal(make_config, tmp_path, capsys):
    from rungelab.experiments import run_runge
    cache = str(tmp_path / 'cache')
    run_runge(make_config(runge={'js': [1, 2]}), cache_dir=cache)
    capsys.readouterr()
    assert run_cli(['cache', 'ls', '--cache', cache]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert {line.split('\t')[1] for line in lines} == {'operator', 'svd'}
    assert run_cli(['cache', 'rm', '--cache', cache]) == 0
    assert run_cli(['cache', 'ls', '--cache', cache]) == 0
    assert capsys.readouterr().out == ''
