import numpy as np
import pytest

from rungelab.errors import MaterialError
from rungelab.grid import build_grid
from rungelab.materials import ellipticity_check, from_tensors, lipschitz_bound, make_material


@pytest.fixture(scope='module')
def grid():
    return build_grid(4, 0.25)


def _uniform(grid, diag):
    return np.broadcast_to(np.diag(diag).astype(float), tuple(grid.n) + (3, 3)).copy()


def test_constant_identity(grid):
    mat = make_material(grid, {'kind': 'constant', 'params': {'eps': 1.0, 'mu': 1.0}})
    np.testing.assert_array_equal(mat.eps, _uniform(grid, [1, 1, 1]))
    assert mat.c == 1.0
    assert mat.M == 1.0
    assert mat.scalar_constants() == (1.0, 1.0)


def test_layered_jump_needs_smoothing(grid):
    params = {'axis': 'z', 'breakpoints': [0.5], 'eps_layers': [1.0, 4.0]}
    with pytest.raises(MaterialError):
        make_material(grid, {'kind': 'layered', 'params': dict(params, smoothing=0.1)})
    mat = make_material(grid, {'kind': 'layered', 'params': dict(params, smoothing=0.25)})
    assert mat.eps[..., 0, 0].min() == pytest.approx(1.0)
    assert mat.eps[..., 0, 0].max() == pytest.approx(4.0)
    assert mat.scalar_constants() is None


def test_smooth_is_deterministic(grid):
    spec = {'kind': 'smooth', 'params': {'amplitude': 0.2}, 'seed': 7}
    a = make_material(grid, spec)
    b = make_material(grid, spec)
    assert a.material_hash == b.material_hash
    assert a.material_hash != make_material(grid, dict(spec, seed=8)).material_hash
    np.testing.assert_allclose(a.eps, np.swapaxes(a.eps, -1, -2))


def test_smooth_amplitude_bounded(grid):
    with pytest.raises(MaterialError):
        make_material(grid, {'kind': 'smooth', 'params': {'amplitude': 1.5}, 'seed': 1})


def test_unknown_kind(grid):
    with pytest.raises(MaterialError):
        make_material(grid, {'kind': 'plasma'})


@pytest.mark.parametrize('diag, passed', [
    ([1.0, 1.0, 1.0], True),
    ([3.0, 1.0, 1.0], False),
    ([0.5, 1.0, 2.0], True),
])
def test_ellipticity(grid, diag, passed):
    mat = from_tensors(grid, _uniform(grid, diag), _uniform(grid, [1, 1, 1]))
    result = ellipticity_check(mat, 0.5)
    assert result.passed is passed
    if not passed:
        assert result.field == 'eps'
        assert result.worst_eigenvalue == pytest.approx(3.0)


def test_indefinite_tensor_rejected(grid):
    with pytest.raises(MaterialError):
        from_tensors(grid, _uniform(grid, [1.0, -1.0, 1.0]), _uniform(grid, [1, 1, 1]))


def test_lipschitz_bound_of_linear_profile():
    grid = build_grid(8, 0.125)
    x = grid.cell_centers[:, 0].reshape(grid.n)
    eps = (1.0 + 0.5 * x)[..., None, None] * np.eye(3)
    mat = from_tensors(grid, eps, _uniform(grid, [1, 1, 1]))
    assert abs(mat.M - 1.5) <= grid.h


def test_lipschitz_bound_stable_under_refinement():
    bounds = []
    for n in (8, 16):
        grid = build_grid(n, 1.0 / n)
        x = grid.cell_centers[:, 0].reshape(grid.n)
        eps = (1.0 + 0.2 * np.sin(np.pi * x))[..., None, None] * np.eye(3)
        bounds.append(from_tensors(grid, eps, _uniform(grid, [1, 1, 1])).M)
    assert abs(bounds[0] - bounds[1]) <= 0.125


def test_mass_matrices_positive_definite(grid):
    mat = make_material(grid, {'kind': 'smooth', 'params': {'amplitude': 0.3}, 'seed': 3})
    for mass in (mat.eps_mass, mat.nu_mass):
        dense = mass.toarray()
        np.testing.assert_allclose(dense, dense.T, atol=1e-14)
        assert np.linalg.eigvalsh(dense).min() > 0


def test_smooth_seeds_give_valid_tensors(grid):
    for seed in range(100):
        mat = make_material(grid, {'kind': 'smooth', 'params': {'amplitude': 0.4},
                                   'seed': seed})
        for tensors in (mat.eps, mat.mu):
            np.testing.assert_array_equal(tensors, np.swapaxes(tensors, -1, -2))
            assert np.linalg.eigvalsh(tensors).min() > 0
        assert 0 < mat.c <= 1.0
        assert ellipticity_check(mat, mat.c).passed


@pytest.mark.parametrize('origin', [(-1.3, 0.7, 2.0), (10.0, -4.25, 0.5)])
def test_lipschitz_bound_is_translation_invariant(origin):
    spec = {'kind': 'smooth', 'params': {'amplitude': 0.3, 'max_wavenumber': 3}, 'seed': 5}
    base = make_material(build_grid(8, 0.125), spec)
    moved = make_material(build_grid(8, 0.125, origin=origin), spec)
    np.testing.assert_allclose(moved.eps, base.eps, atol=1e-12)
    assert lipschitz_bound(moved) == pytest.approx(lipschitz_bound(base), rel=1e-10)
    assert moved.M == pytest.approx(base.M, rel=1e-10)
