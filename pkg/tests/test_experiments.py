import math

import numpy as np
import pytest

from rungelab import config, experiments
from rungelab.analysis import holder_residual, norm
from rungelab.errors import ConfigurationError, GeometryError, ParameterError
from rungelab.experiments import (cauchy_problem, cauchy_reconstruct, cauchy_solve,
                                  longest_decreasing_run, max_quotient, rayleigh_quotient,
                                  reference_wave, run_cauchy, run_experiment, run_localization,
                                  run_propagation, run_runge, run_three_balls, run_ucp,
                                  run_verify_solver)
from rungelab.geometry import BallChain, boundary_patch
from rungelab.solver import TangentialTrace, magnetic_trace, solve_bvp
from rungelab.store import list_cache

CAUCHY_SIDES = ['x-', 'y-', 'y+', 'z-', 'z+']
BALLS = {'r1': 0.12, 'r2': 0.22, 'r3': 0.45, 'samples': 5}


def test_every_experiment_has_a_driver():
    assert set(experiments.EXPERIMENTS) == set(config.EXPERIMENTS)


def test_longest_decreasing_run():
    assert longest_decreasing_run([]) == 0
    assert longest_decreasing_run([3.0]) == 1
    assert longest_decreasing_run([5, 4, 4, 3, 2, 1, 2]) == 4


def test_reference_wave_is_transverse():
    wave = reference_wave(2.0)
    assert np.dot(wave.k, wave.p) == pytest.approx(0.0, abs=1e-15)
    assert wave.wavenumber == pytest.approx(2.0)


# Runge approximation

def test_runge_ladder(make_config):
    report = run_runge(make_config(runge={'js': [1, 2, 3, 4, 5]}))
    assert report.column('j').tolist() == [1, 2, 3, 4, 5]
    assert report.flags['x_error_nonincreasing']
    assert report.flags['v_norm_nondecreasing']
    assert report.flags['termwise_bound']
    kept = report.column('kept')
    assert np.all(np.diff(kept) >= 0)
    assert report.extra['rank'] == len(report.extra['sigma'])
    assert report.extra['theta'] == pytest.approx(2.0 / 3.0)


def test_runge_operator_column_target_is_in_range(make_config):
    report = run_runge(make_config(runge={'js': [1, 6], 'target': 'operator_column'}))
    assert report.extra['out_of_span_residual'] <= 1e-8 * report.extra['target_norm']


def test_runge_reuses_the_cache(make_config, tmp_path):
    cache = str(tmp_path / 'cache')
    cfg = make_config(runge={'js': [1, 2, 3]})
    first = run_runge(cfg, cache_dir=cache)
    assert sorted(kind for _, kind, _, _ in list_cache(cache)) == ['operator', 'svd']
    second = run_runge(cfg, cache_dir=cache)
    assert first.to_csv() == second.to_csv()


def test_runge_rejects_a_region_touching_the_boundary(make_config):
    cfg = make_config(regions={'A': {'kind': 'ball', 'center': [0.1, 0.5, 0.5],
                                     'radius': 0.2}})
    with pytest.raises(GeometryError):
        run_runge(cfg)


# Cauchy problem

@pytest.fixture(scope='module')
def gamma8(grid8):
    return boundary_patch(grid8, CAUCHY_SIDES)


@pytest.fixture(scope='module')
def cauchy8(system8, gamma8):
    return cauchy_problem(system8, gamma8)


@pytest.fixture(scope='module')
def truth8(system8, cauchy8):
    rng = np.random.default_rng(5)
    n = cauchy8.full.n_dofs
    values = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return solve_bvp(system8, TangentialTrace(cauchy8.full, values))


def _cauchy_data(system8, gamma8, truth8):
    return (TangentialTrace(gamma8, truth8.E[gamma8.dofs]),
            magnetic_trace(system8, truth8, gamma8))


def test_cauchy_needs_a_proper_patch(system8, grid8):
    with pytest.raises(ConfigurationError):
        cauchy_problem(system8, boundary_patch(grid8, 'all'))


def test_cauchy_exact_data_are_fitted(system8, gamma8, cauchy8, truth8):
    f, g = _cauchy_data(system8, gamma8, truth8)
    result = cauchy_solve(system8, f, g, 'fixed', 1e-12, problem=cauchy8)
    size = math.hypot(cauchy8.gram.norm(f.values), cauchy8.gram.norm(g.values))
    assert result.misfit <= 1e-4 * size
    assert result.iterations == 0


def test_cauchy_reconstruct_returns_the_fitted_fields(system8, gamma8, cauchy8, truth8):
    f, g = _cauchy_data(system8, gamma8, truth8)
    fields = cauchy_reconstruct(system8, f, g, 'fixed', 1e-8, problem=cauchy8)
    result = cauchy_solve(system8, f, g, 'fixed', 1e-8, problem=cauchy8)
    np.testing.assert_array_equal(fields.E, result.fields.E)
    np.testing.assert_array_equal(fields.H, result.fields.H)


def test_cauchy_heavy_regularization_flattens(system8, gamma8, cauchy8, truth8):
    f, g = _cauchy_data(system8, gamma8, truth8)
    result = cauchy_solve(system8, f, g, 'fixed', 1e6, problem=cauchy8)
    assert norm(result.fields, kind='hcurl') < 1e-2 * norm(truth8, kind='hcurl')


def test_cauchy_discrepancy_principle(system8, gamma8, cauchy8, truth8):
    f, g = _cauchy_data(system8, gamma8, truth8)
    rng = np.random.default_rng(8)
    nf = rng.standard_normal(gamma8.n_dofs) + 1j * rng.standard_normal(gamma8.n_dofs)
    ng = rng.standard_normal(gamma8.n_dofs) + 1j * rng.standard_normal(gamma8.n_dofs)
    size = math.hypot(cauchy8.gram.norm(f.values), cauchy8.gram.norm(g.values))
    eta = 1e-2 * size
    scale = eta / math.hypot(cauchy8.gram.norm(nf), cauchy8.gram.norm(ng))
    result = cauchy_solve(system8, f + TangentialTrace(gamma8, scale * nf),
                          g + TangentialTrace(gamma8, scale * ng), 'morozov', eta=eta,
                          problem=cauchy8)
    assert result.iterations > 0
    assert abs(result.misfit - eta) <= 0.05 * eta


def test_cauchy_traces_on_another_patch(system8, grid8, gamma8, cauchy8, truth8):
    f, _ = _cauchy_data(system8, gamma8, truth8)
    other = boundary_patch(grid8, 'x-')
    g = TangentialTrace(other, np.zeros(other.n_dofs, dtype=complex))
    with pytest.raises(ParameterError):
        cauchy_solve(system8, f, g, problem=cauchy8)
    with pytest.raises(ParameterError):
        cauchy_solve(system8, f, f, strategy='tikhonov', problem=cauchy8)


def test_cauchy_run(make_config):
    cfg = make_config(grid={'n': 6}, noise={'etas': [0.0, 1e-1, 1e-2, 1e-3, 1e-4],
                                            'seeds': [1, 2]})
    report = run_cauchy(cfg)
    assert len(report.records) == 9
    assert report.column('zeta').min() > 0
    assert np.all(np.isfinite(report.column('error')))
    assert report.flags['monotone_in_eta']
    medians = report.extra['median_errors']
    assert medians[repr(0.0)] <= medians[repr(1e-1)]
    assert 'eta_zero_consistency' in report.flags
    assert report.extra['data_dofs'] < report.extra['unknowns']


# Three balls

def test_three_balls(make_config):
    report = run_three_balls(make_config(regions={'balls': BALLS}))
    assert len(report.records) == 5
    a1, a2, a3 = (report.column(c) for c in ('a1', 'a2', 'a3'))
    assert np.all(a1 <= a2) and np.all(a2 <= a3)
    assert report.flags['holds']
    assert report.flags['feasible']


def test_three_balls_with_sources(make_config):
    report = run_three_balls(make_config(regions={'balls': dict(BALLS, source_scale=1.0)}))
    assert 'offset_bound' in report.flags
    assert report.column('source_scale').tolist() == [1.0] * 5


def test_three_balls_independent_of_jobs(make_config):
    cfg = make_config(regions={'balls': BALLS})
    assert run_three_balls(cfg, jobs=1).to_csv() == run_three_balls(cfg, jobs=2).to_csv()


@pytest.mark.parametrize('balls', [
    dict(BALLS, r2=0.3),
    dict(BALLS, r1=0.25),
    dict(BALLS, x0=[0.3, 0.5, 0.5]),
])
def test_three_balls_geometry(make_config, balls):
    with pytest.raises(GeometryError):
        run_three_balls(make_config(regions={'balls': balls}))


# Propagation of smallness

def test_propagation(make_config):
    report = run_propagation(make_config(regions={'balls': {'samples': 4, 'max_paths': 2}}))
    assert len(report.records) == 4
    assert report.flags['chains_valid']
    assert report.flags['holds']
    fit = report.fits['propagation']
    assert fit.model == 'power'
    triples = np.column_stack([report.column(c) for c in ('ball_norm', 'g_norm', 'omega_norm')])
    assert holder_residual(triples, fit.C, fit.delta) <= 1e-9
    counts = report.extra['chain_counts']
    assert 1 <= len(counts) <= 2
    assert all(c <= report.extra['volume_bound'] for c in counts)


def test_propagation_reports_broken_chains(make_config, monkeypatch):
    monkeypatch.setattr(BallChain, 'is_nested', lambda self: False)
    report = run_propagation(make_config(regions={'balls': {'samples': 4, 'max_paths': 2}}))
    assert report.flags['chains_valid'] is False
    assert len(report.extra['chain_counts']) >= 1


@pytest.mark.parametrize('balls', [
    {'h': 0.2},
    {'x0': [0.2, 0.5, 0.5]},
])
def test_propagation_geometry(make_config, balls):
    with pytest.raises(GeometryError):
        run_propagation(make_config(regions={'balls': balls}))


# Localization

def test_localization(make_config):
    cfg = make_config(localization={'cutoffs': [5, 10], 'random_trials': 5})
    report = run_localization(cfg)
    assert len(report.records) == 3
    assert report.flags['maximizer']
    assert report.flags['monotone_cutoff']
    assert report.extra['top_quotient'] == report.column('quotient')[-1]


def test_localization_regions_must_be_disjoint(make_config):
    cfg = make_config(regions={'M': {'kind': 'ball', 'center': [0.75, 0.5, 0.5],
                                     'radius': 0.12}})
    with pytest.raises(GeometryError):
        run_localization(cfg)


def test_max_quotient_against_itself(operator6):
    q, f = max_quotient(operator6, operator6, 1e-6)
    assert 0.0 < q < 1.0
    assert rayleigh_quotient(operator6, operator6, 1e-6, f) == pytest.approx(q, rel=1e-6)


# Unique continuation

def test_ucp(make_config):
    report = run_ucp(make_config(ucp={'samples': 4}))
    assert len(report.records) == 4
    assert report.flags['nonvanishing']
    assert report.extra['kappa'] > 0
    k = report.column('wavenumber')
    assert k[0] == pytest.approx(1.0) and k[-1] == pytest.approx(12.0)


# Solver verification

def test_verify_solver_rows(make_config):
    report = run_verify_solver(make_config(verify={'n': 4}))
    assert report.column('n').tolist() == [4, 8, 16]
    assert report.records[0]['order'] is None
    assert all(r['order'] is not None for r in report.records[1:])
    assert np.all(np.diff(report.column('error')) < 0)


def test_verify_solver_needs_a_constant_material(make_config):
    cfg = make_config(material={'kind': 'smooth', 'params': {'amplitude': 0.2}, 'seed': 3})
    with pytest.raises(ConfigurationError):
        run_verify_solver(cfg)


@pytest.mark.slow
def test_verify_solver_reference_order(make_config):
    report = run_experiment(make_config(experiment='verify_solver', verify={'n': 8}))
    assert report.flags['convergence_order']


@pytest.mark.slow
def test_runge_reference_decay(make_config):
    report = run_runge(make_config(grid={'n': 12}, runge={'target': 'dipole'}))
    errors = report.column('x_error')
    assert report.column('j').tolist() == list(range(1, 11))
    assert report.flags['x_error_nonincreasing']
    assert longest_decreasing_run(errors) >= 6
    assert report.flags['strict_decrease_run']
    assert report.flags['v_norm_nondecreasing']
    assert report.flags['termwise_bound']


@pytest.mark.slow
def test_cauchy_reference_stability(make_config):
    cfg = make_config(noise={'etas': [0.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
                             'seeds': [1, 2, 3, 4, 5]})
    report = run_cauchy(cfg)
    fit = report.fits['log_modulus']
    assert fit.m > 0
    assert fit.r2 >= 0.8
    assert report.flags['log_modulus_fit']
    assert report.flags['monotone_in_eta']
    assert report.flags['eta_zero_consistency']


@pytest.mark.slow
def test_three_balls_reference_feasibility(make_config):
    report = run_three_balls(make_config(regions={'balls': dict(BALLS, samples=20)}))
    fit = report.fits['holder']
    assert 0.0 < fit.tau < 1.0
    assert report.flags['tau_in_unit']
    assert report.flags['holds']
    assert report.flags['feasible']
