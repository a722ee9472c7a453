import math

import numpy as np
import pytest

from rungelab.analysis import (boundary_gram, build_norm_weights, fit_exp_growth, fit_holder,
                               fit_log_modulus, fit_power, holder_residual, norm)
from rungelab.errors import ParameterError
from rungelab.geometry import boundary_patch, carve_region, omega_region
from rungelab.grid import build_grid
from rungelab.solver import FieldPair, TangentialTrace
from conftest import REGION_A


@pytest.fixture(scope='module')
def grid():
    return build_grid(4, 0.25)


def _x_field(grid, value):
    E = np.zeros(grid.n_edges, dtype=complex)
    E[:grid.edge_counts[0]] = value
    return FieldPair(grid, E, np.zeros(grid.n_faces, dtype=complex))


def test_unit_field_on_unit_volume(grid):
    assert norm(_x_field(grid, 1.0)) == pytest.approx(1.0)
    assert norm(_x_field(grid, 1.0), where=omega_region(grid), part='E') == pytest.approx(1.0)


def test_sup_norm(grid):
    assert norm(_x_field(grid, 3.0), p=np.inf) == pytest.approx(3.0)


def test_hcurl_of_constant_is_l2(grid):
    field = _x_field(grid, 2.0)
    assert norm(field, kind='hcurl') == pytest.approx(norm(field))


def test_norm_argument_errors(grid):
    field = _x_field(grid, 1.0)
    with pytest.raises(ParameterError):
        norm(field, kind='sobolev')
    with pytest.raises(ParameterError):
        norm(field, p=0.5)
    with pytest.raises(ParameterError):
        norm(field, kind='boundary')


def test_single_square_gram(grid):
    patch = boundary_patch(grid, 'x-', window=((0.1, 0.1), (0.15, 0.15)))
    gram = boundary_gram(patch)
    assert gram.gram.shape == (4, 4)
    np.testing.assert_allclose(gram.gram, gram.gram.T)
    assert np.linalg.eigvalsh(gram.gram).min() > 0


def test_gram_spectral_identity_and_contraction(grid, rng):
    patch = boundary_patch(grid, 'x-')
    gram = boundary_gram(patch)
    U, lam = gram.eigenvectors, gram.eigenvalues
    rebuilt = (U * lam) @ U.T
    assert np.abs(rebuilt - gram.operator).max() <= 1e-10
    assert lam.min() >= 1.0 - 1e-12

    ones = TangentialTrace(patch, np.ones(patch.n_dofs))
    assert norm(ones, kind='boundary', weights=gram) <= norm(ones) * (1 + 1e-12)
    y = rng.standard_normal(patch.n_dofs)
    np.testing.assert_allclose(gram.gram @ gram.riesz(y), y, atol=1e-10)


def test_boundary_norm_needs_matching_gram(grid):
    a = boundary_patch(grid, 'x-')
    b = boundary_patch(grid, 'y-')
    with pytest.raises(ParameterError):
        norm(TangentialTrace(a, np.ones(a.n_dofs)), kind='boundary', weights=boundary_gram(b))


def test_norm_weights_rows(grid):
    region = omega_region(grid)
    weights = build_norm_weights(boundary_patch(grid, 'x-'), region)
    assert weights.n_rows == grid.n_edges + grid.n_faces
    assert weights.gram_X.sum() == pytest.approx(6.0)


def test_holder_all_ones():
    fit = fit_holder([(1.0, 1.0, 1.0)] * 4)
    assert fit.C == pytest.approx(1.0)
    assert 0.0 < fit.tau < 1.0
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_holder_recovers_exact_exponent(rng):
    a1 = np.exp(rng.uniform(-3, 3, size=12))
    a3 = np.exp(rng.uniform(-3, 3, size=12))
    a2 = a1 ** 0.4 * a3 ** 0.6
    fit = fit_holder(np.column_stack([a1, a2, a3]))
    assert fit.tau == pytest.approx(0.4, abs=1e-6)
    assert fit.C == pytest.approx(1.0, abs=1e-6)
    assert holder_residual(np.column_stack([a1, a2, a3]), fit.C, fit.tau) <= 1e-9
    assert fit.flags == ()


def test_holder_flags_infeasible_data():
    fit = fit_holder([(1e-8, 1.0, 1e-8), (1e-6, 1.0, 1e-7), (1e-7, 2.0, 1e-9)])
    assert 'infeasible' in fit.flags
    assert fit.C > 1e6


def test_holder_rejects_nonpositive():
    with pytest.raises(ParameterError):
        fit_holder([(1.0, 0.0, 1.0)] * 3)


def test_log_modulus_exact_model():
    t = np.array([1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    e = np.log(1.0 / t) ** -2.0
    fit = fit_log_modulus(np.column_stack([t, e]))
    assert fit.C == pytest.approx(1.0, abs=1e-6)
    assert fit.m == pytest.approx(2.0, abs=1e-6)
    assert fit.r2 == pytest.approx(1.0)


def test_log_modulus_constant_error_is_non_decaying():
    fit = fit_log_modulus([(1e-1, 0.3), (1e-2, 0.3), (1e-3, 0.3), (1e-4, 0.3)])
    assert fit.m == pytest.approx(0.0, abs=1e-12)
    assert 'non_decaying' in fit.flags


def test_log_modulus_needs_four_pairs():
    with pytest.raises(ParameterError):
        fit_log_modulus([(1e-1, 0.3), (1e-2, 0.2), (1e-3, 0.1)])
    with pytest.raises(ParameterError):
        fit_log_modulus([(1.0, 0.3), (1e-2, 0.2), (1e-3, 0.1), (1e-4, 0.05)])


def test_power_and_growth_fits():
    x = np.arange(1.0, 8.0)
    power = fit_power(x, 2.0 * x ** -1.5)
    assert power.C == pytest.approx(2.0) and power.exponent == pytest.approx(1.5)
    growth = fit_exp_growth(x, 0.5 * np.exp(0.7 * x))
    assert growth.C == pytest.approx(0.5) and growth.exponent == pytest.approx(0.7)
    assert growth.to_row()['tau_or_delta_or_m'] == pytest.approx(0.7)
    with pytest.raises(ParameterError):
        fit_exp_growth([1.0, 1.0], [1.0, 2.0])


def _random_field(grid, rng):
    E = rng.normal(size=grid.n_edges) + 1j * rng.normal(size=grid.n_edges)
    H = rng.normal(size=grid.n_faces) + 1j * rng.normal(size=grid.n_faces)
    return FieldPair(grid, E, H)


@pytest.mark.parametrize('kind, p', [('lp', 2), ('lp', np.inf), ('hcurl', 2)])
def test_norm_is_absolutely_homogeneous(grid8, rng, kind, p):
    field = _random_field(grid8, rng)
    c = 2.0 - 3.0j
    scaled = FieldPair(grid8, c * field.E, c * field.H)
    assert norm(scaled, kind=kind, p=p) == pytest.approx(abs(c) * norm(field, kind=kind, p=p),
                                                         rel=1e-12)


@pytest.mark.parametrize('p', [2, np.inf])
def test_norm_grows_with_the_region(grid8, rng, p):
    small = carve_region(grid8, REGION_A, 'subdomain_A')
    large = carve_region(grid8, dict(REGION_A, radius=0.35), 'subdomain_A')
    assert small.is_subset_of(large)
    field = _random_field(grid8, rng)
    inner = norm(field, where=small, p=p)
    outer = norm(field, where=large, p=p)
    assert inner <= outer
    assert outer <= norm(field, p=p)


def test_holder_fit_ignores_triple_order(rng):
    a1 = np.exp(rng.uniform(-6.0, -1.0, size=12))
    a3 = np.exp(rng.uniform(0.0, 2.0, size=12))
    a2 = 1.7 * a1 ** 0.35 * a3 ** 0.65 * np.exp(rng.uniform(-0.3, 0.0, size=12))
    triples = np.column_stack([a1, a2, a3])
    base = fit_holder(triples)
    for _ in range(5):
        shuffled = fit_holder(triples[rng.permutation(len(triples))])
        assert shuffled.tau == pytest.approx(base.tau, rel=1e-12)
        assert shuffled.C == pytest.approx(base.C, rel=1e-12)
        assert shuffled.flags == base.flags
