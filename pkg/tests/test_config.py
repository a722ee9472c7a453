import json

import pytest

from rungelab.config import (EXPERIMENTS, ExperimentConfig, expected_theta, load_config_file,
                             parse_config, with_seeds)
from rungelab.errors import ConfigurationError


def test_empty_object_takes_defaults():
    cfg = parse_config('{}')
    assert cfg.experiment == 'runge'
    assert cfg.grid.cells == (12, 12, 12)
    assert cfg.grid.spacing == pytest.approx(1.0 / 12)
    assert cfg.exponents.theta == pytest.approx(2.0 / 3.0)
    assert cfg.regularization.lam == 1e-12


def test_theta_identity():
    assert expected_theta(3.0, 4.0) == pytest.approx(2.0 / 3.0)
    cfg = parse_config(json.dumps({'exponents': {'p': 6, 'q': 3, 'q0': 6}}))
    assert cfg.exponents.theta == pytest.approx(0.5)


def test_inconsistent_theta_names_the_identity():
    with pytest.raises(ConfigurationError) as e:
        parse_config(json.dumps({'exponents': {'theta': 0.5}}))
    assert '1/q = (1 - theta)/2 + theta/q0' in e.value.message
    assert e.value.payload['field'] == 'exponents'


@pytest.mark.parametrize('exponents', [
    {'q': 5.0, 'q0': 4.0},
    {'q': 2.0},
    {'p': 3.0},
    {'q0': 8.0, 'p': 8.0},
])
def test_exponent_ordering(exponents):
    with pytest.raises(ConfigurationError):
        parse_config(json.dumps({'exponents': exponents}))


def test_relaxed_exponents():
    cfg = parse_config(json.dumps({'exponents': {'q0': 8.0, 'p': 8.0, 'relaxed': True}}))
    assert 0.0 < cfg.exponents.theta < 1.0


def test_lambda_alias():
    cfg = parse_config(json.dumps({'regularization': {'strategy': 'fixed', 'lambda': 1e-6}}))
    assert cfg.regularization.lam == 1e-6
    assert cfg.echo()['regularization']['lambda'] == 1e-6


def test_malformed_json_names_the_line():
    with pytest.raises(ConfigurationError) as e:
        parse_config('{\n  "seed": 3,\n  "omega": \n}')
    assert 'line 4' in e.value.message
    assert e.value.payload['line'] == 4


def test_unknown_field_names_its_path():
    with pytest.raises(ConfigurationError) as e:
        parse_config(json.dumps({'grid': {'n': 8, 'bogus': 1}}))
    assert e.value.payload['field'] == 'grid.bogus'


@pytest.mark.parametrize('data', [
    [],
    {'experiment': 'nope'},
    {'omega': 0},
    {'grid': {'n': 3}},
    {'noise': {'etas': [1.5]}},
    {'runge': {'js': [0, 1]}},
    {'regions': {'A': {'kind': 'torus'}}},
])
def test_invalid_documents(data):
    with pytest.raises(ConfigurationError):
        parse_config(json.dumps(data))


def test_js_are_sorted_and_unique():
    cfg = parse_config(json.dumps({'runge': {'js': [3, 1, 3, 2]}}))
    assert cfg.runge.js == [1, 2, 3]


def test_echo_parses_back():
    cfg = with_seeds(parse_config(json.dumps({'experiment': 'cauchy', 'grid': {'n': [6, 8, 10]},
                                              'seed': 5})))
    again = parse_config(json.dumps(cfg.echo()))
    assert again == cfg
    assert isinstance(again, ExperimentConfig)


def test_seeds_are_explicit_and_deterministic():
    cfg = parse_config(json.dumps({'seed': 9}))
    a, b = with_seeds(cfg), with_seeds(cfg)
    assert a.seed == 9
    assert a.noise.seeds == b.noise.seeds
    assert len(a.noise.seeds) == 5
    assert with_seeds(cfg, 10).noise.seeds != a.noise.seeds


def test_missing_seed_is_drawn():
    cfg = with_seeds(parse_config('{}'))
    assert cfg.seed is not None and cfg.seed >= 0


def test_load_config_file(tmp_path):
    path = tmp_path / 'cfg.json'
    path.write_text(json.dumps({'experiment': 'ucp'}))
    assert load_config_file(str(path)).experiment == 'ucp'
    with pytest.raises(ConfigurationError):
        load_config_file(str(tmp_path / 'missing.json'))


def test_every_experiment_parses():
    for name in EXPERIMENTS:
        assert parse_config(json.dumps({'experiment': name})).experiment == name
