# encoding: utf-8
'''
The boundary-to-region restriction operator and its weighted singular system.

For tangential data f on a patch, A f is the restriction of the solution
(E_f, H_f) to the edges and faces of a region. Its domain carries the
boundary Gram G_V and its range the diagonal volume Gram G_X; the SVD is
taken in those inner products, and the truncated approximant of a target
W is

    R_alpha W = sum over sigma_k >= alpha of (c_k / sigma_k) phi_k,
    c_k = <psi_k, W>_X.
'''
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .analysis import MAX_PATCH_DOFS
from .errors import NumericError, ParameterError, SizeError
from .geometry import check_runge_geometry
from .pool import chunks, parallel_map
from .solver import SourceTerm, lift_boundary, solve_source, source_load
from .store import provenance_hash, read_envelope, write_envelope
from .validate import finite_array, in_open_interval, positive, type_integer, validate

log = logging.getLogger(__name__)

OPERATOR_HEADER = struct.Struct('<2Q')
SVD_HEADER = struct.Struct('<3Q')


def describe_provenance(sys, patch, region):
    return {
        'grid': sys.grid.grid_hash,
        'material': sys.material.material_hash,
        'omega': repr(float(sys.omega)),
        'patch': patch.describe(),
        'region': region.mask_hash,
    }


@dataclass(frozen=True, eq=False)
class RestrictionOperator(object):
    matrix: np.ndarray
    weights: object
    provenance: dict

    @property
    def provenance_hash(self):
        return provenance_hash(self.provenance)

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f):
        return self.matrix @ np.asarray(f, dtype=complex)


@dataclass(frozen=True, eq=False)
class SvdBundle(object):
    sigma: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    weights: object = None
    provenance: dict = None

    @property
    def rank(self):
        return int(len(self.sigma))

    @property
    def provenance_hash(self):
        return provenance_hash(self.provenance or {})


@dataclass(frozen=True)
class Expansion(object):
    coeffs: np.ndarray
    residual: float
    norm: float


@dataclass(frozen=True, eq=False)
class Approximant(object):
    alpha: float
    j_index: object
    coeffs: np.ndarray
    boundary_data: np.ndarray
    kept_count: int
    x_error: float
    v_norm: float
    coeff_norm: float

    @property
    def v_bound(self):
        '''alpha^-1 (sum |c_k|^2)^1/2.'''
        return self.coeff_norm / self.alpha


def assemble_restriction(sys, patch, regionA, weights, jobs=1):
    '''One forward solve per tangential dof of the patch, restricted to the region.'''
    check_runge_geometry(regionA)
    if patch.n_dofs > MAX_PATCH_DOFS:
        raise SizeError("Patch has {0} dofs; the dense operator is limited to {1}.".format(
            patch.n_dofs, MAX_PATCH_DOFS))
    if weights.patch is not patch or weights.region is not regionA:
        raise ParameterError("Norm weights were built for another patch or region.")

    grid = sys.grid
    scale = 1.0 / (1j * sys.omega * grid.h)

    def column_block(columns):
        B = lift_boundary(sys, patch.dofs[columns])
        H = (sys.material.nu_mass @ (sys.curl @ B)) / grid.face_volumes[:, None] * scale
        return np.vstack([B[weights.edge_rows].astype(complex), H[weights.face_rows]])

    blocks = parallel_map(column_block, chunks(np.arange(patch.n_dofs), max(1, jobs)), jobs)
    matrix = np.hstack(blocks)
    log.info("restriction operator %d x %d assembled", matrix.shape[0], matrix.shape[1])
    return RestrictionOperator(matrix, weights, describe_provenance(sys, patch, regionA))


def apply_adjoint(sys, F, weights):
    '''
    V-representative of A* F: the source problem driven by G_X F extended
    by zero, its boundary flux on the patch, then the Riesz map G_V^-1.
    '''
    grid = sys.grid
    F = np.asarray(F, dtype=complex)
    if F.shape != (weights.n_rows,):
        raise ParameterError("Adjoint input has {0} rows, the operator {1}.".format(
            F.size, weights.n_rows))
    n_e = len(weights.edge_rows)
    y_E = np.zeros(grid.n_edges, dtype=complex)
    y_E[weights.edge_rows] = weights.gram_X[:n_e] * F[:n_e]
    z_F = np.zeros(grid.n_faces, dtype=complex)
    z_F[weights.face_rows] = weights.gram_X[n_e:] * F[n_e:]

    omega = sys.omega
    src = SourceTerm(grid, y_E / (1j * omega * grid.edge_volumes),
                     (1j / omega) * z_F / grid.face_volumes, weights.region)
    U = solve_source(sys, src)
    flux = (source_load(sys, src) - sys.matrix @ U.E)[weights.patch.dofs]
    return weights.riesz_V(flux)


def weighted_svd(opA):
    '''SVD of L_X^H A L_V^-H, mapped back to V- and X-orthonormal vectors.'''
    weights = opA.weights
    sqrt_x = np.sqrt(weights.gram_X)
    if not np.all(sqrt_x > 0):
        raise NumericError("Volume Gram has zero weights; it is rank deficient.")
    L_V = weights.chol_V
    if not np.all(np.diag(L_V) > 0):
        raise NumericError("Boundary Gram factor is singular.")

    whitened = la.solve_triangular(L_V, (sqrt_x[:, None] * opA.matrix).T, lower=True).T
    try:
        U, s, Wh = la.svd(whitened, full_matrices=False)
    except la.LinAlgError as e:
        raise NumericError("SVD failed: {0}".format(e))
    phi = la.solve_triangular(L_V.T, Wh.conj().T, lower=False)
    psi = U / sqrt_x[:, None]
    log.info("weighted SVD: sigma_1=%.4e, sigma_min=%.4e, rank %d", s[0], s[-1], len(s))
    return SvdBundle(s, phi, psi, weights, opA.provenance)


def reconstruct(svd):
    '''Dense A rebuilt from the singular system: sum sigma_j psi_j phi_j^H G_V.'''
    return (svd.psi * svd.sigma[None, :]) @ (svd.phi.conj().T @ svd.weights.gram_V)


def expand_target(svd, W):
    '''X-coefficients of W and the X-norm of its part outside span{psi_k}.'''
    W = np.asarray(W, dtype=complex)
    validate({'W': [(finite_array, 'W', W)]})
    gram_X = svd.weights.gram_X
    coeffs = svd.psi.conj().T @ (gram_X * W)
    rest = W - svd.psi @ coeffs
    residual = float(np.sqrt(np.sum(gram_X * np.abs(rest) ** 2)))
    total = float(np.sqrt(np.sum(gram_X * np.abs(W) ** 2)))
    return Expansion(coeffs, residual, total)


def truncate(svd, coeffs, alpha, j_index=None):
    '''Keep sigma_k >= alpha; the X-error adds the out-of-span residual in quadrature.'''
    validate({'alpha': [(positive, 'alpha', alpha)]})
    residual = 0.0
    if isinstance(coeffs, Expansion):
        residual = coeffs.residual
        coeffs = coeffs.coeffs
    c = np.asarray(coeffs, dtype=complex)
    keep = svd.sigma >= alpha
    scaled = c[keep] / svd.sigma[keep]
    data = svd.phi[:, keep] @ scaled
    tail = float(np.sum(np.abs(c[~keep]) ** 2))
    return Approximant(float(alpha), j_index, c, data, int(keep.sum()),
                       float(np.sqrt(tail + residual ** 2)),
                       float(np.sqrt(np.sum(np.abs(scaled) ** 2))),
                       float(np.sqrt(np.sum(np.abs(c) ** 2))))


def alpha_for_j(j, C, theta, m):
    '''alpha = (C exp(-j^(2/m)))^(1/(1-theta)).'''
    validate({
        'j': [(type_integer, 'j', j), (positive, 'j', j)],
        'C': [(positive, 'C', C)],
        'theta': [(in_open_interval, 'theta', theta, 0.0, 1.0)],
        'm': [(positive, 'm', m)],
    })
    return float(np.exp((np.log(C) - j ** (2.0 / m)) / (1.0 - theta)))


def j_for_alpha(alpha, C, theta, m):
    '''Inverse of alpha_for_j: 1/j = (log(C / alpha^(1-theta)))^(-m/2).'''
    return float(np.log(C / alpha ** (1.0 - theta)) ** (-m / 2.0))


# Cache

def _complex_bytes(a):
    return np.ascontiguousarray(a, dtype='<c16').tobytes()


def save_operator(opA, path):
    rows, cols = opA.matrix.shape
    payload = OPERATOR_HEADER.pack(rows, cols) + _complex_bytes(opA.matrix)
    write_envelope('operator', opA.provenance_hash, payload, path)


def load_operator(path, weights, provenance):
    payload = read_envelope(path, 'operator', provenance_hash(provenance))
    rows, cols = OPERATOR_HEADER.unpack_from(payload)
    matrix = np.frombuffer(payload, dtype='<c16', count=rows * cols,
                           offset=OPERATOR_HEADER.size).reshape(rows, cols).astype(complex)
    return RestrictionOperator(matrix, weights, provenance)


def save_svd(svd, path):
    rows, rank = svd.psi.shape
    cols = svd.phi.shape[0]
    payload = (SVD_HEADER.pack(rows, cols, rank)
               + np.ascontiguousarray(svd.sigma, dtype='<f8').tobytes()
               + _complex_bytes(svd.phi) + _complex_bytes(svd.psi))
    write_envelope('svd', svd.provenance_hash, payload, path)


def load_svd(path, weights, provenance):
    payload = read_envelope(path, 'svd', provenance_hash(provenance))
    rows, cols, rank = SVD_HEADER.unpack_from(payload)
    offset = SVD_HEADER.size
    sigma = np.frombuffer(payload, dtype='<f8', count=rank, offset=offset).copy()
    offset += 8 * rank
    phi = np.frombuffer(payload, dtype='<c16', count=cols * rank,
                        offset=offset).reshape(cols, rank).astype(complex)
    offset += 16 * cols * rank
    psi = np.frombuffer(payload, dtype='<c16', count=rows * rank,
                        offset=offset).reshape(rows, rank).astype(complex)
    return SvdBundle(sigma, phi, psi, weights, provenance)


def cache_roundtrip(obj, path):
    '''Store `obj` and load it back against its own provenance.'''
    if isinstance(obj, RestrictionOperator):
        save_operator(obj, path)
        return load_operator(path, obj.weights, obj.provenance)
    if isinstance(obj, SvdBundle):
        save_svd(obj, path)
        return load_svd(path, obj.weights, obj.provenance)
    raise ParameterError("Cannot cache {0}.".format(type(obj).__name__))


def cache_paths(directory, provenance):
    key = '{0:016x}'.format(provenance_hash(provenance))
    return (os.path.join(directory, 'operator-{0}.rgfo'.format(key)),
            os.path.join(directory, 'svd-{0}.rgfo'.format(key)))
