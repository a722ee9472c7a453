import math

import numpy as np
import pytest

from rungelab.analysis import BoundaryGram, NormWeights, build_norm_weights
from rungelab.errors import CorruptFileError, ParameterError, ProvenanceError
from rungelab.geometry import carve_region
from rungelab.runge_op import (RestrictionOperator, SvdBundle, alpha_for_j, apply_adjoint,
                               assemble_restriction, cache_paths, cache_roundtrip,
                               describe_provenance, expand_target, j_for_alpha, load_operator,
                               reconstruct, save_operator, truncate, weighted_svd)
from rungelab.solver import TangentialTrace, solve_bvp


def _complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _identity_weights(n_rows, n_cols):
    eye = np.eye(n_cols)
    boundary = BoundaryGram(None, eye, eye, eye, np.ones(n_cols), eye)
    return NormWeights(None, None, boundary, np.ones(n_rows), np.arange(n_rows),
                       np.arange(0))


def test_columns_match_direct_solves(system6, patch6, weights6, operator6, rng):
    assert operator6.shape == (weights6.n_rows, patch6.n_dofs)
    f = _complex(rng, patch6.n_dofs)
    direct = weights6.restrict(solve_bvp(system6, TangentialTrace(patch6, f)))
    assert np.linalg.norm(operator6.apply(f) - direct) <= 1e-10 * np.linalg.norm(direct)
    assert not np.any(operator6.apply(np.zeros(patch6.n_dofs)))


def test_parallel_assembly_matches_serial(system6, patch6, region6, weights6, operator6):
    parallel = assemble_restriction(system6, patch6, region6, weights6, jobs=3)
    np.testing.assert_allclose(parallel.matrix, operator6.matrix, rtol=1e-12, atol=1e-12)


def test_smaller_region_has_fewer_rows(grid6, system6, patch6, weights6):
    box = {'kind': 'box', 'lo': [0.35, 0.35, 0.35], 'hi': [0.6, 0.6, 0.45]}
    small = carve_region(grid6, box, 'subdomain_A')
    w = build_norm_weights(patch6, small)
    assert w.n_rows < weights6.n_rows
    assert assemble_restriction(system6, patch6, small, w).shape[0] == w.n_rows


def test_weights_must_match(system6, patch6, grid6, weights6):
    other = carve_region(grid6, {'kind': 'ball', 'center': [0.5, 0.5, 0.5], 'radius': 0.2},
                         'subdomain_A')
    with pytest.raises(ParameterError):
        assemble_restriction(system6, patch6, other, weights6)


def test_adjoint_identity(system6, weights6, operator6, rng):
    for _ in range(20):
        f = _complex(rng, operator6.shape[1])
        F = _complex(rng, operator6.shape[0])
        lhs = weights6.x_inner(operator6.apply(f), F)
        rhs = weights6.v_inner(f, apply_adjoint(system6, F, weights6))
        assert abs(lhs - rhs) <= 1e-8 * abs(lhs)


def test_adjoint_of_zero_and_of_a_column(system6, weights6, operator6):
    assert not np.any(apply_adjoint(system6, np.zeros(weights6.n_rows), weights6))
    column = apply_adjoint(system6, operator6.matrix[:, 0], weights6)
    assert np.linalg.norm(column) > 0
    with pytest.raises(ParameterError):
        apply_adjoint(system6, np.zeros(3), weights6)


def test_svd_of_diagonal_matrix():
    weights = _identity_weights(2, 2)
    svd = weighted_svd(RestrictionOperator(np.diag([2.0, 1.0]), weights, {}))
    np.testing.assert_allclose(svd.sigma, [2.0, 1.0])
    np.testing.assert_allclose(np.abs(svd.phi), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(np.abs(svd.psi), np.eye(2), atol=1e-14)


def test_svd_structure(svd6, weights6, operator6):
    sigma = svd6.sigma
    assert np.all(np.diff(sigma) <= 0)
    gram_v = svd6.phi.conj().T @ weights6.gram_V @ svd6.phi
    gram_x = svd6.psi.conj().T @ (weights6.gram_X[:, None] * svd6.psi)
    np.testing.assert_allclose(gram_v, np.eye(svd6.rank), atol=1e-10)
    np.testing.assert_allclose(gram_x, np.eye(svd6.rank), atol=1e-10)
    error = np.linalg.norm(reconstruct(svd6) - operator6.matrix, 2)
    assert error <= 1e-10 * np.linalg.norm(operator6.matrix, 2)


@pytest.mark.slow
def test_singular_values_decay(svd6):
    assert np.any(svd6.sigma / svd6.sigma[0] < 1e-3)


def test_expansion_of_a_singular_vector(svd6, weights6):
    exp = expand_target(svd6, svd6.psi[:, 0])
    np.testing.assert_allclose(exp.coeffs[0], 1.0, atol=1e-10)
    np.testing.assert_allclose(exp.coeffs[1:], 0.0, atol=1e-10)
    assert exp.residual <= 1e-10


def test_expansion_parseval(svd6, weights6, rng):
    W = _complex(rng, weights6.n_rows)
    exp = expand_target(svd6, W)
    total = np.sum(np.abs(exp.coeffs) ** 2) + exp.residual ** 2
    assert total == pytest.approx(weights6.x_norm(W) ** 2, rel=1e-10)
    assert exp.norm == pytest.approx(weights6.x_norm(W))


def test_truncation_example():
    svd = SvdBundle(np.array([2.0, 1.0, 0.5]), np.eye(3), np.eye(3))
    approx = truncate(svd, np.ones(3), 0.8)
    assert approx.kept_count == 2
    assert approx.x_error == pytest.approx(1.0)
    np.testing.assert_allclose(approx.boundary_data, [0.5, 1.0, 0.0])
    assert approx.v_norm <= approx.v_bound
    assert approx.v_bound == pytest.approx(math.sqrt(3.0) / 0.8)


def test_truncation_above_the_spectrum():
    svd = SvdBundle(np.array([2.0, 1.0, 0.5]), np.eye(3), np.eye(3))
    approx = truncate(svd, np.array([1.0, 2.0, 2.0]), 3.0)
    assert approx.kept_count == 0
    assert not np.any(approx.boundary_data)
    assert approx.x_error == pytest.approx(3.0)


def test_operator_column_target_is_reproduced(svd6, operator6, rng):
    f = _complex(rng, operator6.shape[1])
    exp = expand_target(svd6, operator6.apply(f))
    approx = truncate(svd6, exp, svd6.sigma[-1] * 0.5)
    assert approx.x_error == pytest.approx(exp.residual, abs=1e-12 * exp.norm)
    assert exp.residual <= 1e-8 * exp.norm


def test_alpha_for_first_index():
    assert alpha_for_j(1, 1.0, 1e-12, 2.0) == pytest.approx(math.exp(-1.0), rel=1e-9)


def test_alpha_decreases_and_inverts():
    theta = 2.0 / 3.0
    alphas = [alpha_for_j(j, math.e, theta, 2.0) for j in range(1, 11)]
    assert all(b < a for a, b in zip(alphas, alphas[1:]))
    for j, alpha in enumerate(alphas, start=1):
        assert j_for_alpha(alpha, math.e, theta, 2.0) == pytest.approx(1.0 / j, rel=1e-12)


def test_alpha_preconditions():
    with pytest.raises(ParameterError):
        alpha_for_j(0, 1.0, 0.5, 2.0)
    with pytest.raises(ParameterError):
        alpha_for_j(1, 1.0, 1.0, 2.0)


def test_operator_cache_roundtrip(operator6, tmp_path):
    back = cache_roundtrip(operator6, tmp_path / 'op.rgfo')
    assert back.matrix.tobytes() == operator6.matrix.tobytes()


def test_svd_cache_roundtrip(svd6, tmp_path):
    back = cache_roundtrip(svd6, tmp_path / 'svd.rgfo')
    np.testing.assert_array_equal(back.sigma, svd6.sigma)
    np.testing.assert_array_equal(back.phi, svd6.phi)
    np.testing.assert_array_equal(back.psi, svd6.psi)


def test_truncated_cache_file(operator6, tmp_path):
    path = tmp_path / 'op.rgfo'
    save_operator(operator6, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(CorruptFileError):
        load_operator(path, operator6.weights, operator6.provenance)


def test_cache_rejects_another_material(operator6, tmp_path):
    path = tmp_path / 'op.rgfo'
    save_operator(operator6, path)
    provenance = dict(operator6.provenance, material=operator6.provenance['material'] + 1)
    with pytest.raises(ProvenanceError):
        load_operator(path, operator6.weights, provenance)


def test_cache_paths_follow_provenance(system6, patch6, region6, tmp_path):
    provenance = describe_provenance(system6, patch6, region6)
    op_path, svd_path = cache_paths(str(tmp_path), provenance)
    assert op_path.endswith('.rgfo') and 'operator-' in op_path
    assert svd_path.endswith('.rgfo') and 'svd-' in svd_path
    assert cache_paths(str(tmp_path), provenance) == (op_path, svd_path)


def test_error_grows_with_alpha(svd6, weights6, rng):
    exp = expand_target(svd6, _complex(rng, weights6.n_rows))
    alphas = np.logspace(np.log10(svd6.sigma[-1]) - 1, np.log10(svd6.sigma[0]) + 1, 40)
    errors = [truncate(svd6, exp, a).x_error for a in alphas]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(errors, errors[1:]))
    assert errors[0] == pytest.approx(exp.residual, abs=1e-10 * exp.norm)
    assert errors[-1] == pytest.approx(exp.norm, rel=1e-10)


@pytest.mark.parametrize('quantile', [0.5, 0.8, 1.0])
def test_approximant_is_realized_by_a_solution(system6, patch6, weights6, operator6, svd6,
                                               rng, quantile):
    exp = expand_target(svd6, _complex(rng, weights6.n_rows))
    alpha = float(np.quantile(svd6.sigma, quantile))
    approx = truncate(svd6, exp, alpha)
    fields = solve_bvp(system6, TangentialTrace(patch6, approx.boundary_data))
    restricted = weights6.restrict(fields)
    expected = operator6.apply(approx.boundary_data)
    assert np.linalg.norm(restricted - expected) <= 1e-9 * max(np.linalg.norm(expected), 1e-300)
    achieved = weights6.x_norm(restricted - svd6.psi @ exp.coeffs)
    assert achieved == pytest.approx(np.sqrt(approx.x_error ** 2 - exp.residual ** 2),
                                     rel=1e-6, abs=1e-8 * exp.norm)
