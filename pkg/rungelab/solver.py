# encoding: utf-8
'''
Frequency-domain Maxwell solver on the staggered grid.

The first-order system

    curl E - i omega mu H = -Ftilde        (faces)
    curl H + i omega eps E = F             (edges)

is reduced to the curl-curl equation for E on interior edges,

    K = C^T M_nu C / h^2 - omega^2 M_eps,

with tangential boundary values of E lifted to the right-hand side. H is
recovered face by face from the discrete curl of E.
'''
import logging
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import MaterialError, NumericError, ParameterError, ResonanceError, SolverError
from .log import solver_log
from .materials import ellipticity_check
from .store import read_envelope, write_envelope
from .validate import positive, validate

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_THRESHOLD = 1e-6
DIRECT_LIMIT = 200000
MAX_ITERATIONS = 10000
FIELD_HEADER = struct.Struct('<3Q4d2Q')


@dataclass(frozen=True, eq=False)
class TangentialTrace(object):
    patch: object
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.patch.n_dofs,):
            raise ParameterError("Trace has {0} values for a patch of {1} dofs.".format(
                values.size, self.patch.n_dofs))
        object.__setattr__(self, 'values', values)

    def full(self):
        '''Values scattered onto all edges of the grid.'''
        out = np.zeros(self.patch.grid.n_edges, dtype=complex)
        out[self.patch.dofs] = self.values
        return out

    def __mul__(self, scale):
        return TangentialTrace(self.patch, self.values * scale)

    __rmul__ = __mul__

    def __add__(self, other):
        return TangentialTrace(self.patch, self.values + other.values)


@dataclass(frozen=True, eq=False)
class SourceTerm(object):
    grid: object
    F: np.ndarray
    Ftilde: np.ndarray
    region: object = None

    def __post_init__(self):
        F = np.asarray(self.F, dtype=complex)
        Ft = np.asarray(self.Ftilde, dtype=complex)
        if F.shape != (self.grid.n_edges,) or Ft.shape != (self.grid.n_faces,):
            raise ParameterError("Source sizes ({0}, {1}) do not match the grid ({2}, "
                                 "{3}).".format(F.size, Ft.size, self.grid.n_edges,
                                                self.grid.n_faces))
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(Ft))):
            raise ParameterError("Source term has non-finite entries.")
        if self.region is not None:
            outside_e = np.ones(self.grid.n_edges, dtype=bool)
            outside_e[self.region.edge_rows] = False
            outside_f = np.ones(self.grid.n_faces, dtype=bool)
            outside_f[self.region.face_rows] = False
            if np.any(F[outside_e]) or np.any(Ft[outside_f]):
                raise ParameterError("Source term is not supported in its region '{0}'.".format(
                    self.region.role))
        object.__setattr__(self, 'F', F)
        object.__setattr__(self, 'Ftilde', Ft)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.n_edges, dtype=complex),
                   np.zeros(grid.n_faces, dtype=complex))

    def is_zero(self):
        return not (np.any(self.F) or np.any(self.Ftilde))


@dataclass(frozen=True, eq=False)
class FieldPair(object):
    grid: object
    E: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        if self.E.shape != (self.grid.n_edges,) or self.H.shape != (self.grid.n_faces,):
            raise ParameterError("Field sizes ({0}, {1}) do not match the grid ({2}, "
                                 "{3}).".format(self.E.size, self.H.size, self.grid.n_edges,
                                                self.grid.n_faces))

    def __add__(self, other):
        return FieldPair(self.grid, self.E + other.E, self.H + other.H)

    def __sub__(self, other):
        return FieldPair(self.grid, self.E - other.E, self.H - other.H)

    def __mul__(self, scale):
        return FieldPair(self.grid, self.E * scale, self.H * scale)

    __rmul__ = __mul__

    def conj(self):
        return FieldPair(self.grid, self.E.conj(), self.H.conj())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.E)) and np.all(np.isfinite(self.H)))


# Linear solvers

def _split_solve(solve, rhs):
    '''Apply a real solver to a possibly complex right-hand side.'''
    if np.iscomplexobj(rhs):
        return solve(np.ascontiguousarray(rhs.real)) + 1j * solve(np.ascontiguousarray(rhs.imag))
    return solve(rhs)


class DirectFactor(object):
    '''Sparse LU of the real interior block.'''

    method = 'direct'

    def __init__(self, matrix):
        self.matrix = matrix
        self.lu = spla.splu(matrix.tocsc())

    def solve(self, rhs):
        return _split_solve(self.lu.solve, np.asarray(rhs))


class KrylovFactor(object):
    '''GMRES with an incomplete-LU preconditioner.'''

    method = 'krylov'

    def __init__(self, matrix, tolerance=DEFAULT_TOLERANCE, max_iterations=MAX_ITERATIONS):
        self.matrix = matrix.tocsr()
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        ilu = spla.spilu(matrix.tocsc(), drop_tol=1e-5, fill_factor=20)
        self.preconditioner = spla.LinearOperator(matrix.shape, ilu.solve, dtype=float)

    def _solve_vector(self, b):
        if not np.any(b):
            return np.zeros_like(b)
        history = []

        def monitor(residual):
            history.append(float(residual))
            solver_log.debug("gmres %d: %.3e", len(history), residual)

        x, info = spla.gmres(self.matrix, b, rtol=self.tolerance, atol=0.0,
                             maxiter=self.max_iterations, M=self.preconditioner,
                             callback=monitor, callback_type='pr_norm')
        if info != 0:
            raise SolverError("GMRES stopped after {0} steps without reaching rtol={1:g}.".format(
                len(history), self.tolerance), payload={'residuals': history})
        return x

    def _solve_real(self, rhs):
        if rhs.ndim == 1:
            return self._solve_vector(rhs)
        return np.column_stack([self._solve_vector(rhs[:, k]) for k in range(rhs.shape[1])])

    def solve(self, rhs):
        return _split_solve(self._solve_real, np.asarray(rhs))


class SystemMatrix(object):
    '''
    Assembled curl-curl operator at one frequency.

    `matrix` acts on all edges; `K_II` is its interior block, factored in
    `factor`. `margin` is the relative distance of omega^2 to the nearest
    discrete cavity eigenvalue, filled in by `resonance_guard`.
    '''

    def __init__(self, grid, material, omega, matrix, factor, tolerance, threshold):
        self.grid = grid
        self.material = material
        self.omega = float(omega)
        self.matrix = matrix
        self.interior = grid.interior_edges
        self.boundary = grid.boundary_edges
        self.K_II = matrix[self.interior][:, self.interior].tocsc()
        self.factor = factor
        self.tolerance = tolerance
        self.threshold = threshold
        self.margin = None
        self.eigen_shift = None
        self.curl = grid.curl.astype(float)

    @property
    def dimension(self):
        return int(len(self.interior))

    @property
    def edge_volumes(self):
        return self.grid.edge_volumes

    @property
    def face_volumes(self):
        return self.grid.face_volumes

    def solve_interior(self, rhs):
        '''Solve K_II x = rhs for one or several right-hand sides.'''
        rhs = np.asarray(rhs)
        x = self.factor.solve(rhs)
        self._check_residual(x, rhs)
        return x

    def _check_residual(self, x, rhs):
        scale = np.atleast_1d(np.linalg.norm(rhs, axis=0))
        err = np.atleast_1d(np.linalg.norm(self.K_II @ x - rhs, axis=0))
        nonzero = scale > 0
        if not np.any(nonzero):
            return
        worst = float(np.max(err[nonzero] / scale[nonzero]))
        solver_log.debug("solve (%s): relative residual %.3e", self.factor.method, worst)
        if worst <= 100.0 * self.tolerance:
            return
        if self.factor.method == 'krylov':
            raise SolverError("Linear solve residual {0:.3e} exceeds tolerance {1:g}.".format(
                worst, self.tolerance), payload={'residuals': [worst]})
        solver_log.warning("direct solve residual %.3e above tolerance %g (margin %s)",
                           worst, self.tolerance, self.margin)


def assemble(grid, mat, omega, threshold=DEFAULT_THRESHOLD, tolerance=DEFAULT_TOLERANCE,
             direct_limit=DIRECT_LIMIT, max_iterations=MAX_ITERATIONS, check=True):
    '''
    Assemble and factor the curl-curl system. Raises ResonanceError when
    omega^2 lies within `threshold` (relative) of a discrete cavity
    eigenvalue, unless `check` is False.
    '''
    validate({'omega': [(positive, 'omega', omega)],
              'threshold': [(positive, 'threshold', threshold)],
              'tolerance': [(positive, 'tolerance', tolerance)]})
    ellipticity = ellipticity_check(mat, mat.c)
    if not ellipticity.passed:
        raise MaterialError("Material fails the ellipticity bound in cell {0}.".format(
            ellipticity.worst_cell))
    if grid.structure_defect != 0:
        raise NumericError("Discrete div(curl) does not vanish on this grid.")

    C = grid.curl.astype(float)
    K = ((C.T @ mat.nu_mass @ C) / grid.h ** 2 - omega ** 2 * mat.eps_mass).tocsr()
    K_II = K[grid.interior_edges][:, grid.interior_edges]

    try:
        if K_II.shape[0] <= direct_limit:
            factor = DirectFactor(K_II)
        else:
            factor = KrylovFactor(K_II, tolerance, max_iterations)
    except RuntimeError as e:
        raise ResonanceError("Factorization failed at omega={0}: {1}".format(omega, e),
                             payload={'margin': 0.0, 'threshold': threshold,
                                      'suggested_omega': omega * 1.01})

    solver_log.info("assembled %d interior unknowns at omega=%g (%s)", K_II.shape[0],
                    omega, factor.method)
    system = SystemMatrix(grid, mat, omega, K, factor, tolerance, threshold)
    resonance_guard(system)
    if check and system.margin < threshold:
        below = system.eigen_shift < 0
        suggested = omega * (0.99 if below else 1.01)
        raise ResonanceError(
            "omega={0} is within {1:.3e} of a cavity resonance (threshold {2:g}); try "
            "omega={3:.6g}.".format(omega, system.margin, threshold, suggested),
            payload={'margin': system.margin, 'threshold': threshold,
                     'suggested_omega': suggested})
    return system


def resonance_guard(sys):
    '''
    Shift-invert Lanczos on (K_II, M_eps,II) for the eigenvalue nearest 0,
    reusing the factorization. Stores and returns the relative margin.
    '''
    n = sys.dimension
    M_II = sys.material.eps_mass[sys.interior][:, sys.interior].tocsc()
    op = spla.LinearOperator((n, n), matvec=sys.factor.solve, dtype=float)
    try:
        vals = spla.eigsh(sys.K_II, k=1, M=M_II, sigma=0.0, which='LM', OPinv=op,
                          v0=np.ones(n), return_eigenvectors=False)
    except spla.ArpackError as e:
        raise NumericError("Resonance estimate failed: {0}".format(e))
    shift = float(vals[0])
    sys.eigen_shift = shift
    sys.margin = abs(shift) / sys.omega ** 2
    solver_log.info("resonance margin %.3e at omega=%g (nearest cavity omega=%.6g)",
                    sys.margin, sys.omega, np.sqrt(max(shift + sys.omega ** 2, 0.0)))
    return sys.margin


def resonance_sweep(grid, mat, omegas, **kwargs):
    '''Margins for a list of frequencies, as (omega, margin) pairs.'''
    out = []
    for omega in omegas:
        system = assemble(grid, mat, omega, check=False, **kwargs)
        out.append((float(omega), system.margin))
    return out


# Loads and field recovery

def source_load(sys, src):
    '''Edge right-hand side i omega V_E F + C^T M_nu Ftilde / h.'''
    if src is None:
        return np.zeros(sys.grid.n_edges, dtype=complex)
    return (1j * sys.omega * sys.edge_volumes * src.F
            + sys.curl.T @ (sys.material.nu_mass @ src.Ftilde) / sys.grid.h)


def derive_H_from_E(E, mat, omega, Ftilde=None):
    '''H = V_F^-1 M_nu (C E / h - Ftilde) / (i omega).'''
    grid = mat.grid
    curl_E = grid.curl @ np.asarray(E, dtype=complex) / grid.h
    if Ftilde is not None:
        curl_E = curl_E - Ftilde
    return (mat.nu_mass @ curl_E) / grid.face_volumes / (1j * omega)


def solve(sys, boundary_values=None, src=None):
    '''
    Fields for tangential boundary values (all boundary edges, zero when
    None) and an optional source.
    '''
    grid = sys.grid
    E = np.zeros(grid.n_edges, dtype=complex)
    if boundary_values is not None:
        E[sys.boundary] = boundary_values[sys.boundary]
    rhs = source_load(sys, src) - sys.matrix @ E
    E[sys.interior] = sys.solve_interior(rhs[sys.interior])
    H = derive_H_from_E(E, sys.material, sys.omega, None if src is None else src.Ftilde)
    return FieldPair(grid, E, H)


def solve_bvp(sys, f):
    '''Solution with tangential trace `f` and no source.'''
    return solve(sys, boundary_values=f.full())


def solve_source(sys, src):
    '''Solution of the source problem with vanishing tangential trace.'''
    return solve(sys, src=src)


def lift_boundary(sys, dofs):
    '''
    Real E columns of the solutions whose boundary data is the unit vector
    on each listed boundary edge.
    '''
    dofs = np.asarray(dofs)
    B = np.zeros((sys.grid.n_edges, len(dofs)))
    B[dofs, np.arange(len(dofs))] = 1.0
    B[sys.interior] = sys.solve_interior(-(sys.matrix @ B)[sys.interior])
    return B


def magnetic_trace(sys, fields, patch, src=None):
    '''
    Weak tangential trace of H on the patch: (b - K E) on the patch edges
    divided by i omega times the edge area.
    '''
    flux = (source_load(sys, src) - sys.matrix @ fields.E)[patch.dofs]
    return TangentialTrace(patch, flux / (1j * sys.omega * patch.areas))


def residual(fields, sys, src=None):
    '''
    Relative residual of the first-order system: face equation on all faces,
    edge equation on interior edges, both in volume-weighted l2.
    '''
    grid = sys.grid
    mat = sys.material
    h = grid.h
    V_E = grid.edge_volumes
    V_F = grid.face_volumes
    F = np.zeros(grid.n_edges, dtype=complex) if src is None else src.F
    Ft = np.zeros(grid.n_faces, dtype=complex) if src is None else src.Ftilde
    interior = sys.interior

    eps_E = (mat.eps_mass @ fields.E) / V_E
    r1 = (mat.nu_mass @ (grid.curl @ fields.E / h - Ft)) / V_F - 1j * sys.omega * fields.H
    r2 = (grid.curl.T @ (V_F * fields.H)) / h / V_E + 1j * sys.omega * eps_E - F

    def wnorm(v, w):
        return float(np.sqrt(np.sum(w * np.abs(v) ** 2)))

    num = np.hypot(wnorm(r1, V_F), wnorm(r2[interior], V_E[interior]))
    scale = (wnorm(sys.omega * fields.H, V_F) + wnorm(sys.omega * eps_E[interior], V_E[interior])
             + wnorm(F, V_E) + wnorm(Ft, V_F))
    if scale == 0.0:
        return float(num)
    return float(num / scale)


# Snapshots

def save_fields(fields, path, provenance=0):
    grid = fields.grid
    header = FIELD_HEADER.pack(grid.n[0], grid.n[1], grid.n[2], grid.h, grid.origin[0],
                               grid.origin[1], grid.origin[2], grid.n_edges, grid.n_faces)
    payload = (header + fields.E.astype('<c16').tobytes()
               + fields.H.astype('<c16').tobytes())
    write_envelope('field', provenance, payload, path)


def load_fields(path, grid, provenance=0):
    payload = read_envelope(path, 'field', provenance)
    nx, ny, nz, h, _, _, _, n_edges, n_faces = FIELD_HEADER.unpack_from(payload)
    if (nx, ny, nz) != tuple(grid.n) or n_edges != grid.n_edges or h != grid.h:
        raise ParameterError("Snapshot grid {0} h={1} does not match {2} h={3}.".format(
            (nx, ny, nz), h, grid.n, grid.h))
    start = FIELD_HEADER.size
    E = np.frombuffer(payload, dtype='<c16', count=n_edges, offset=start).astype(complex)
    H = np.frombuffer(payload, dtype='<c16', count=n_faces,
                      offset=start + 16 * n_edges).astype(complex)
    return FieldPair(grid, E, H)
