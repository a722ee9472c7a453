# encoding: utf-8
'''
Closed-form time-harmonic fields in homogeneous media.

Both families solve curl E = i omega mu H, curl H = -i omega eps E, the
sign convention of the solver, away from their singularity.
'''
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError, SingularityError
from .geometry import boundary_patch
from .materials import make_material
from .solver import FieldPair, TangentialTrace, assemble, solve_bvp
from .validate import positive, validate, vector3

log = logging.getLogger(__name__)

DISPERSION_TOL = 1e-12


@dataclass(frozen=True)
class AnalyticSolution(object):
    kind: str
    omega: float
    eps0: float
    mu0: float
    k: tuple = None
    p: tuple = None
    x0: tuple = None
    moment: tuple = None
    conjugated: bool = False

    @property
    def wavenumber(self):
        return self.omega * np.sqrt(self.eps0 * self.mu0)

    def conjugate(self):
        return replace(self, conjugated=not self.conjugated)

    def _finish(self, values):
        return values.conj() if self.conjugated else values

    def E(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == 'plane_wave':
            phase = np.exp(1j * points @ np.asarray(self.k))
            return self._finish(phase[:, None] * np.asarray(self.p)[None, :])
        r, R, g, gp, _ = self._green(points)
        m = np.asarray(self.moment)
        return self._finish((gp / R)[:, None] * np.cross(r, m))

    def H(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == 'plane_wave':
            k = np.asarray(self.k)
            amplitude = np.cross(k, np.asarray(self.p)) / (self.omega * self.mu0)
            phase = np.exp(1j * points @ k)
            return self._finish(phase[:, None] * amplitude[None, :])
        r, R, g, gp, gpp = self._green(points)
        m = np.asarray(self.moment)
        kk = self.wavenumber ** 2
        phi = gp / R
        dphi = gpp / R - gp / R ** 2
        rhat = r / R[:, None]
        m_r = rhat @ m * R
        grad_div = phi[:, None] * m[None, :] + (m_r * dphi)[:, None] * rhat
        total = kk * g[:, None] * m[None, :] + grad_div
        return self._finish(total / (1j * self.omega * self.mu0))

    def _green(self, points):
        '''g = exp(-ikR)/(4 pi R) and its first two radial derivatives.'''
        r = points - np.asarray(self.x0, dtype=float)
        R = np.linalg.norm(r, axis=1)
        if np.any(R == 0):
            raise SingularityError("Dipole evaluated at its source point {0}.".format(self.x0))
        k = self.wavenumber
        g = np.exp(-1j * k * R) / (4.0 * np.pi * R)
        a = 1j * k + 1.0 / R
        gp = -a * g
        gpp = g * (a ** 2 + 1.0 / R ** 2)
        return r, R, g, gp, gpp


def plane_wave(k, p, omega, eps0=1.0, mu0=1.0):
    '''E = p exp(i k.x), H = (k x p)/(omega mu0) exp(i k.x).'''
    validate({
        'k': [(vector3, 'k', np.real(k))],
        'omega': [(positive, 'omega', omega)],
        'eps0': [(positive, 'eps0', eps0)],
        'mu0': [(positive, 'mu0', mu0)],
    })
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=complex)
    if p.shape != (3,):
        raise ParameterError("Polarization must have 3 components.")
    scale = max(1.0, float(np.linalg.norm(k)) * float(np.linalg.norm(p)))
    if abs(np.dot(k, p)) > DISPERSION_TOL * scale:
        raise ParameterError("Plane wave is not transverse: k.p = {0}.".format(np.dot(k, p)))
    target = omega ** 2 * eps0 * mu0
    if abs(np.dot(k, k) - target) > DISPERSION_TOL * max(1.0, target):
        raise ParameterError("Plane wave violates the dispersion relation: |k|^2 = {0}, "
                             "omega^2 eps mu = {1}.".format(np.dot(k, k), target))
    return AnalyticSolution('plane_wave', float(omega), float(eps0), float(mu0),
                            k=tuple(k.tolist()), p=tuple(p.tolist()))


def dipole_field(x0, m, omega, eps0=1.0, mu0=1.0):
    '''Magnetic dipole of moment `m` at `x0`: E = grad g x m.'''
    validate({
        'x0': [(vector3, 'x0', x0)],
        'omega': [(positive, 'omega', omega)],
        'eps0': [(positive, 'eps0', eps0)],
        'mu0': [(positive, 'mu0', mu0)],
    })
    m = np.asarray(m, dtype=complex)
    if m.shape != (3,):
        raise ParameterError("Dipole moment must have 3 components.")
    return AnalyticSolution('magnetic_dipole', float(omega), float(eps0), float(mu0),
                            x0=tuple(float(v) for v in x0), moment=tuple(m.tolist()))


def _check_distance(sol, points, grid):
    if sol.x0 is None or not len(points):
        return
    d = np.linalg.norm(points - np.asarray(sol.x0), axis=1).min()
    if d < 2.0 * grid.h:
        raise SingularityError("Sample point within {0:.3g} of the dipole at {1}; at least "
                               "2h = {2:.3g} is required.".format(d, sol.x0, 2.0 * grid.h))


def sample_on_grid(sol, grid, region=None):
    '''
    Tangential E at edge midpoints and normal H at face centres. With a
    region, only its edges and faces are evaluated; the rest are zero.
    '''
    edges = np.arange(grid.n_edges) if region is None else region.edge_rows
    faces = np.arange(grid.n_faces) if region is None else region.face_rows
    e_pts = grid.edge_positions[edges]
    f_pts = grid.face_positions[faces]
    _check_distance(sol, np.vstack([e_pts, f_pts]), grid)

    E = np.zeros(grid.n_edges, dtype=complex)
    H = np.zeros(grid.n_faces, dtype=complex)
    E[edges] = sol.E(e_pts)[np.arange(len(edges)), grid.edge_axis[edges]]
    H[faces] = sol.H(f_pts)[np.arange(len(faces)), grid.face_axis[faces]]
    return FieldPair(grid, E, H)


def tangential_trace(sol, patch):
    grid = patch.grid
    pts = patch.positions
    _check_distance(sol, pts, grid)
    values = sol.E(pts)[np.arange(patch.n_dofs), patch.axes]
    return TangentialTrace(patch, values)


@dataclass(frozen=True)
class ConvergencePoint(object):
    n: tuple
    h: float
    error: float
    order: float


def field_error(fields, exact):
    '''Dual-volume weighted l2 distance of two field pairs over the whole grid.'''
    grid = fields.grid
    d = fields - exact
    return float(np.sqrt(np.sum(grid.edge_volumes * np.abs(d.E) ** 2)
                         + np.sum(grid.face_volumes * np.abs(d.H) ** 2)))


def convergence_study(sol, grids, **solver_options):
    '''
    Solve with the solution's own tangential trace on nested grids and
    report L2 errors with observed orders log(e_i/e_i+1)/log(h_i/h_i+1).
    '''
    grids = list(grids)
    if len(grids) < 3:
        raise ParameterError("A convergence study needs at least 3 grids, got {0}.".format(
            len(grids)))
    for coarse, fine in zip(grids[:-1], grids[1:]):
        if not fine.h < coarse.h or not np.allclose(coarse.extent, fine.extent, rtol=1e-12) \
                or not np.allclose(coarse.origin, fine.origin, rtol=0, atol=1e-12):
            raise ParameterError("Convergence grids must refine the same box.")

    spec = {'kind': 'constant', 'params': {'eps': sol.eps0, 'mu': sol.mu0}}
    points = []
    for grid in grids:
        mat = make_material(grid, spec)
        system = assemble(grid, mat, sol.omega, **solver_options)
        patch = boundary_patch(grid, 'all')
        fields = solve_bvp(system, tangential_trace(sol, patch))
        error = field_error(fields, sample_on_grid(sol, grid))
        order = float('nan')
        if points:
            prev = points[-1]
            order = float(np.log(prev.error / error) / np.log(prev.h / grid.h))
        points.append(ConvergencePoint(tuple(grid.n), grid.h, error, order))
        log.info("convergence n=%s h=%g error=%.4e order=%.3f", grid.n, grid.h, error, order)
    return points
