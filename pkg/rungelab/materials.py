# encoding: utf-8
'''
Cellwise anisotropic permittivity and permeability.

Every cell carries a symmetric 3x3 tensor for eps and mu. The mass
matrices used by the solver come from corner quadrature: each cell splits
its volume into eight corners of weight h^3/8, and at every corner the
three edges (or faces) meeting there are coupled through the cell tensor.
'''
import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import MaterialError
from .grid import AXES
from .validate import nonnegative, positive, type_integer, validate

log = logging.getLogger(__name__)

KINDS = ('constant', 'layered', 'smooth')
SYMMETRY_TOL = 1e-12
CORNERS = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


@dataclass(frozen=True)
class EllipticityResult(object):
    passed: bool
    c: float
    field: str
    worst_cell: tuple
    worst_eigenvalue: float


@dataclass(frozen=True, eq=False)
class MaterialField(object):
    grid: object
    eps: np.ndarray
    mu: np.ndarray
    c: float
    M: float
    spec: dict

    @cached_property
    def material_hash(self):
        digest = hashlib.blake2b(digest_size=8)
        digest.update(np.ascontiguousarray(self.eps).tobytes())
        digest.update(np.ascontiguousarray(self.mu).tobytes())
        return int.from_bytes(digest.digest(), 'little')

    @cached_property
    def mu_inverse(self):
        return np.linalg.inv(self.mu)

    @cached_property
    def eps_mass(self):
        '''Edge mass matrix of eps.'''
        return edge_mass(self.grid, self.eps)

    @cached_property
    def nu_mass(self):
        '''Face mass matrix of mu^-1.'''
        return face_mass(self.grid, self.mu_inverse)

    def scalar_constants(self):
        '''(eps0, mu0) when both fields are the same multiple of I everywhere, else None.'''
        e = self.eps.reshape(-1, 3, 3)
        m = self.mu.reshape(-1, 3, 3)
        e0, m0 = e[0, 0, 0], m[0, 0, 0]
        if np.allclose(e, e0 * np.eye(3), rtol=0, atol=1e-14) and \
                np.allclose(m, m0 * np.eye(3), rtol=0, atol=1e-14):
            return float(e0), float(m0)
        return None


def _corner_edges(grid, cells, corner):
    idx = []
    for axis in AXES:
        m = [cells[d] + (corner[d] if d != axis else 0) for d in AXES]
        idx.append(grid.edge_index(axis, *m))
    return idx


def _corner_faces(grid, cells, corner):
    idx = []
    for axis in AXES:
        m = [cells[d] + (corner[d] if d == axis else 0) for d in AXES]
        idx.append(grid.face_index(axis, *m))
    return idx


def _corner_mass(grid, tensors, locate, size):
    cells = np.indices(grid.n).reshape(3, -1)
    t = tensors.reshape(-1, 3, 3)
    w = grid.h ** 3 / 8.0
    rows, cols, vals = [], [], []
    for corner in CORNERS:
        idx = locate(grid, cells, corner)
        for p in AXES:
            for q in AXES:
                rows.append(idx[p])
                cols.append(idx[q])
                vals.append(w * t[:, p, q])
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(size, size)).tocsr()


def edge_mass(grid, tensors):
    return _corner_mass(grid, tensors, _corner_edges, grid.n_edges)


def face_mass(grid, tensors):
    return _corner_mass(grid, tensors, _corner_faces, grid.n_faces)


# Tensor field construction

def _as_tensor(value, key):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(3)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise MaterialError("'{0}' must be a scalar, a diagonal 3-vector or a 3x3 "
                        "tensor.".format(key))


def _cell_field(grid, tensor):
    return np.broadcast_to(tensor, tuple(grid.n) + (3, 3)).copy()


def _constant(grid, params, seed):
    eps = _as_tensor(params.get('eps', 1.0), 'eps')
    mu = _as_tensor(params.get('mu', 1.0), 'mu')
    return _cell_field(grid, eps), _cell_field(grid, mu)


def _ramp(x):
    return np.clip(x + 0.5, 0.0, 1.0)


def _layered(grid, params, seed):
    axis = params.get('axis', 0)
    if isinstance(axis, str):
        axis = 'xyz'.index(axis)
    breakpoints = [float(b) for b in params.get('breakpoints', [])]
    eps_layers = [_as_tensor(v, 'eps_layers') for v in params.get('eps_layers', [1.0])]
    mu_layers = [_as_tensor(v, 'mu_layers') for v in
                 params.get('mu_layers', [1.0] * (len(breakpoints) + 1))]
    width = float(params.get('smoothing', grid.h))
    if len(eps_layers) != len(breakpoints) + 1 or len(mu_layers) != len(breakpoints) + 1:
        raise MaterialError("A layered material needs one tensor per layer: {0} breakpoints, "
                            "{1} eps layers, {2} mu layers.".format(
                                len(breakpoints), len(eps_layers), len(mu_layers)))
    jumps = any(not np.allclose(a, b) for layers in (eps_layers, mu_layers)
                for a, b in zip(layers[:-1], layers[1:]))
    if jumps and width < grid.h * (1.0 - 1e-12):
        raise MaterialError("Layer interfaces must be smoothed over at least one cell "
                            "(smoothing={0}, h={1}).".format(width, grid.h))

    s = grid.cell_centers[:, axis].reshape(grid.n)

    def profile(layers):
        out = np.broadcast_to(layers[0], tuple(grid.n) + (3, 3)).copy()
        for b, lo, hi in zip(breakpoints, layers[:-1], layers[1:]):
            out += _ramp((s - b) / width)[..., None, None] * (hi - lo)
        return out

    return profile(eps_layers), profile(mu_layers)


def _symmetric_perturbation(grid, rng, modes, max_wavenumber):
    '''Smooth symmetric matrix field with entries in [-1/3, 1/3].'''
    x = (grid.cell_centers - np.asarray(grid.origin)) / grid.extent
    out = np.zeros((grid.n_cells, 3, 3))
    for p in AXES:
        for q in range(p, 3):
            k = rng.integers(-max_wavenumber, max_wavenumber + 1, size=(modes, 3))
            phase = rng.uniform(0.0, 2.0 * np.pi, size=modes)
            weight = rng.uniform(-1.0, 1.0, size=modes)
            weight /= max(np.abs(weight).sum(), 1e-300)
            entry = np.cos(2.0 * np.pi * x @ k.T + phase) @ weight / 3.0
            out[:, p, q] = entry
            out[:, q, p] = entry
    return out.reshape(tuple(grid.n) + (3, 3))


def _smooth(grid, params, seed):
    amplitude = float(params.get('amplitude', 0.2))
    modes = params.get('modes', 4)
    max_wavenumber = params.get('max_wavenumber', 2)
    validate({
        'amplitude': [(nonnegative, 'amplitude', amplitude)],
        'modes': [(type_integer, 'modes', modes), (positive, 'modes', modes)],
        'max_wavenumber': [(type_integer, 'max_wavenumber', max_wavenumber)],
    }, error=MaterialError)
    if amplitude >= 1.0:
        raise MaterialError("Smooth material amplitude must be below 1, got {0}.".format(
            amplitude))

    rng = np.random.default_rng(seed)
    eye = np.eye(3)
    eps = float(params.get('eps', 1.0)) * (
        eye + amplitude * _symmetric_perturbation(grid, rng, modes, max_wavenumber))
    mu = float(params.get('mu', 1.0)) * (
        eye + amplitude * _symmetric_perturbation(grid, rng, modes, max_wavenumber))
    return eps, mu


BUILDERS = {'constant': _constant, 'layered': _layered, 'smooth': _smooth}


def _check_tensors(name, tensors):
    asym = np.abs(tensors - np.swapaxes(tensors, -1, -2)).max()
    scale = max(1.0, float(np.abs(tensors).max()))
    if asym > SYMMETRY_TOL * scale:
        raise MaterialError("Tensor field '{0}' is not symmetric (defect {1:.3e}).".format(
            name, asym))
    tensors = 0.5 * (tensors + np.swapaxes(tensors, -1, -2))
    lowest = np.linalg.eigvalsh(tensors)[..., 0]
    if np.any(lowest <= 0):
        cell = np.unravel_index(np.argmin(lowest), lowest.shape)
        raise MaterialError("Tensor field '{0}' has eigenvalue {1:.3e} <= 0 in cell "
                            "{2}.".format(name, lowest[cell], tuple(int(i) for i in cell)))
    return tensors


def _ellipticity_constant(tensors):
    vals = np.linalg.eigvalsh(tensors)
    return float(min(vals[..., 0].min(), (1.0 / vals[..., -1]).min()))


def from_tensors(grid, eps, mu, spec=None):
    '''MaterialField from explicit cell tensors of shape n + (3, 3).'''
    shape = tuple(grid.n) + (3, 3)
    eps = np.asarray(eps, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if eps.shape != shape or mu.shape != shape:
        raise MaterialError("Cell tensors must have shape {0}.".format(shape))
    eps = _check_tensors('eps', eps)
    mu = _check_tensors('mu', mu)
    c = min(_ellipticity_constant(eps), _ellipticity_constant(mu))
    mat = MaterialField(grid, eps, mu, c, 0.0, dict(spec or {'kind': 'tensors'}))
    object.__setattr__(mat, 'M', lipschitz_bound(mat))
    return mat


def make_material(grid, spec):
    '''
    Build eps and mu from a spec:

        {"kind": "constant", "params": {"eps": 1.0, "mu": 1.0}}
        {"kind": "layered", "params": {"axis": "z", "breakpoints": [0.5],
                                       "eps_layers": [1.0, 4.0], "smoothing": 0.25}}
        {"kind": "smooth", "params": {"amplitude": 0.2}, "seed": 7}
    '''
    spec = dict(spec or {})
    kind = spec.get('kind', 'constant')
    if kind not in BUILDERS:
        raise MaterialError("Unknown material kind '{0}'.".format(kind))
    eps, mu = BUILDERS[kind](grid, dict(spec.get('params') or {}), spec.get('seed'))
    mat = from_tensors(grid, eps, mu, spec)
    log.debug("material %s: c=%.4g M=%.4g", kind, mat.c, mat.M)
    return mat


def ellipticity_check(mat, c):
    '''Eigenvalues of every cell tensor of eps and mu within [c, 1/c].'''
    validate({'c': [(positive, 'c', c)]})
    worst = None
    for name, tensors in (('eps', mat.eps), ('mu', mat.mu)):
        vals = np.linalg.eigvalsh(tensors)
        low, high = vals[..., 0], vals[..., -1]
        violation = np.maximum(c - low, high - 1.0 / c)
        cell = np.unravel_index(np.argmax(violation), violation.shape)
        amount = float(violation[cell])
        value = float(low[cell] if c - low[cell] >= high[cell] - 1.0 / c else high[cell])
        if worst is None or amount > worst[0]:
            worst = (amount, name, tuple(int(i) for i in cell), value)

    amount, name, cell, value = worst
    passed = amount <= 1e-12 * max(1.0, 1.0 / c)
    if not passed:
        log.info("ellipticity fails for c=%g: %s eigenvalue %g in cell %s", c, name, value, cell)
    return EllipticityResult(passed, float(c), name, cell, value)


def lipschitz_bound(mat):
    '''Largest tensor entry or forward difference quotient over both fields.'''
    bound = 0.0
    for tensors in (mat.eps, mat.mu):
        bound = max(bound, float(np.abs(tensors).max()))
        for axis in AXES:
            if tensors.shape[axis] > 1:
                diff = np.abs(np.diff(tensors, axis=axis)).max() / mat.grid.h
                bound = max(bound, float(diff))
    return bound
