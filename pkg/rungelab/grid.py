# encoding: utf-8
'''
Uniform staggered grid on the box `origin + [0, n h]`.

The electric field lives on cell edges (one tangential component per edge),
the magnetic field on cell faces (one normal component per face). Edge,
face, node and cell arrays are ordered x-, then y-, then z-component, each
block C-ordered over its own index box, so

    x-edges  (nx,   ny+1, nz+1)      x-faces  (nx+1, ny,   nz)
    y-edges  (nx+1, ny,   nz+1)      y-faces  (nx,   ny+1, nz)
    z-edges  (nx+1, ny+1, nz)        z-faces  (nx,   ny,   nz+1)

The incidence operators (gradient, curl, divergence) are assembled from
Kronecker products of 1-D difference matrices with integer entries; the
1/h scaling is applied by their users.
'''
import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .validate import at_least, positive, type_integer, validate, vector3

log = logging.getLogger(__name__)

MIN_CELLS = 4
AXES = (0, 1, 2)
AXIS_NAMES = ('x', 'y', 'z')


def _diff(n):
    '''1-D forward difference, shape (n, n+1).'''
    return sp.diags([-np.ones(n, dtype=np.int64), np.ones(n, dtype=np.int64)],
                    [0, 1], shape=(n, n + 1), format='csr', dtype=np.int64)


def _eye(n):
    return sp.identity(n, dtype=np.int64, format='csr')


def _kron3(a, b, c):
    return sp.kron(a, sp.kron(b, c, format='csr'), format='csr')


def tangential_axes(axis):
    return tuple(d for d in AXES if d != axis)


@dataclass(frozen=True)
class Grid:
    n: tuple
    h: float
    origin: tuple = (0.0, 0.0, 0.0)

    @cached_property
    def extent(self):
        return np.asarray(self.n, dtype=float) * self.h

    @cached_property
    def upper(self):
        return np.asarray(self.origin, dtype=float) + self.extent

    @cached_property
    def grid_hash(self):
        text = '{0}|{1!r}|{2}'.format(tuple(self.n), float(self.h),
                                      tuple(float(o) for o in self.origin))
        return int.from_bytes(hashlib.blake2b(text.encode('utf8'),
                                              digest_size=8).digest(), 'little')

    # shapes and counts

    @property
    def n_cells(self):
        return int(np.prod(self.n))

    @property
    def node_shape(self):
        return tuple(k + 1 for k in self.n)

    def edge_shape(self, axis):
        return tuple(self.n[d] if d == axis else self.n[d] + 1 for d in AXES)

    def face_shape(self, axis):
        return tuple(self.n[d] + 1 if d == axis else self.n[d] for d in AXES)

    @cached_property
    def edge_counts(self):
        return tuple(int(np.prod(self.edge_shape(a))) for a in AXES)

    @cached_property
    def face_counts(self):
        return tuple(int(np.prod(self.face_shape(a))) for a in AXES)

    @cached_property
    def edge_offsets(self):
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.edge_counts)[:-1]]))

    @cached_property
    def face_offsets(self):
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.face_counts)[:-1]]))

    @property
    def n_edges(self):
        return int(sum(self.edge_counts))

    @property
    def n_faces(self):
        return int(sum(self.face_counts))

    # flat dof indexing

    def edge_index(self, axis, i, j, k):
        return self.edge_offsets[axis] + np.ravel_multi_index(
            (i, j, k), self.edge_shape(axis))

    def face_index(self, axis, i, j, k):
        return self.face_offsets[axis] + np.ravel_multi_index(
            (i, j, k), self.face_shape(axis))

    def dof_index(self, kind, axis, i, j, k):
        '''Flat index of an edge ("edge") or face ("face") location.'''
        if kind == 'edge':
            return self.edge_index(axis, i, j, k)
        if kind == 'face':
            return self.face_index(axis, i, j, k)
        raise ConfigurationError("Unknown dof kind '{0}'.".format(kind))

    def split_edges(self, values):
        '''Edge vector to its three component arrays, each on its index box.'''
        return [values[self.edge_offsets[a]:self.edge_offsets[a] + self.edge_counts[a]]
                .reshape(self.edge_shape(a)) for a in AXES]

    def split_faces(self, values):
        return [values[self.face_offsets[a]:self.face_offsets[a] + self.face_counts[a]]
                .reshape(self.face_shape(a)) for a in AXES]

    # locations

    @cached_property
    def edge_axis(self):
        return np.concatenate([np.full(c, a, dtype=np.int64)
                               for a, c in zip(AXES, self.edge_counts)])

    @cached_property
    def face_axis(self):
        return np.concatenate([np.full(c, a, dtype=np.int64)
                               for a, c in zip(AXES, self.face_counts)])

    def _positions(self, shape_of, half_on_axis):
        origin = np.asarray(self.origin, dtype=float)
        blocks = []
        for a in AXES:
            idx = np.indices(shape_of(a)).reshape(3, -1).T.astype(float)
            shift = np.full(3, 0.0 if half_on_axis else 0.5)
            shift[a] = 0.5 if half_on_axis else 0.0
            blocks.append(origin + self.h * (idx + shift))
        return np.vstack(blocks)

    @cached_property
    def edge_positions(self):
        '''Edge midpoints, shape (n_edges, 3).'''
        return self._positions(self.edge_shape, True)

    @cached_property
    def face_positions(self):
        '''Face centres, shape (n_faces, 3).'''
        return self._positions(self.face_shape, False)

    @cached_property
    def cell_centers(self):
        idx = np.indices(self.n).reshape(3, -1).T.astype(float)
        return np.asarray(self.origin, dtype=float) + self.h * (idx + 0.5)

    def cell_of(self, points):
        '''Cell multi-indices of points, and whether each point lies in the grid.'''
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (points - np.asarray(self.origin, dtype=float)) / self.h
        idx = np.floor(rel).astype(np.int64)
        n = np.asarray(self.n)
        # points on the upper faces belong to the last cell
        idx = np.where((rel >= n) & (rel <= n + 1e-9), n - 1, idx)
        inside = np.all((idx >= 0) & (idx < n), axis=1)
        return np.clip(idx, 0, n - 1), inside

    # boundary

    @cached_property
    def boundary_edge_mask(self):
        '''Edges lying in a boundary plane (tangential boundary edges).'''
        parts = []
        for a in AXES:
            idx = np.indices(self.edge_shape(a))
            on = np.zeros(self.edge_shape(a), dtype=bool)
            for d in tangential_axes(a):
                on |= (idx[d] == 0) | (idx[d] == self.n[d])
            parts.append(on.ravel())
        return np.concatenate(parts)

    @cached_property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary_edge_mask)

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.boundary_edge_mask)

    # incidence operators

    @cached_property
    def gradient(self):
        '''Nodes to edges.'''
        nx, ny, nz = self.n
        jx, jy, jz = _eye(nx + 1), _eye(ny + 1), _eye(nz + 1)
        return sp.vstack([_kron3(_diff(nx), jy, jz),
                          _kron3(jx, _diff(ny), jz),
                          _kron3(jx, jy, _diff(nz))], format='csr')

    @cached_property
    def curl(self):
        '''Edges to faces.'''
        nx, ny, nz = self.n
        dx, dy, dz = _diff(nx), _diff(ny), _diff(nz)
        ix, iy, iz = _eye(nx), _eye(ny), _eye(nz)
        jx, jy, jz = _eye(nx + 1), _eye(ny + 1), _eye(nz + 1)
        # x-faces: dy Ez - dz Ey
        dy_ez = _kron3(jx, dy, iz)
        dz_ey = _kron3(jx, iy, dz)
        # y-faces: dz Ex - dx Ez
        dz_ex = _kron3(ix, jy, dz)
        dx_ez = _kron3(dx, jy, iz)
        # z-faces: dx Ey - dy Ex
        dx_ey = _kron3(dx, iy, jz)
        dy_ex = _kron3(ix, dy, jz)
        return sp.bmat([[None, -dz_ey, dy_ez],
                        [dz_ex, None, -dx_ez],
                        [-dy_ex, dx_ey, None]], format='csr')

    @cached_property
    def divergence(self):
        '''Faces to cells.'''
        nx, ny, nz = self.n
        ix, iy, iz = _eye(nx), _eye(ny), _eye(nz)
        return sp.hstack([_kron3(_diff(nx), iy, iz),
                          _kron3(ix, _diff(ny), iz),
                          _kron3(ix, iy, _diff(nz))], format='csr')

    @cached_property
    def structure_defect(self):
        '''Largest entry of div∘curl and curl∘grad; zero on a consistent grid.'''
        dc = (self.divergence @ self.curl).tocoo()
        cg = (self.curl @ self.gradient).tocoo()
        worst = 0
        for m in (dc, cg):
            if m.nnz:
                worst = max(worst, int(np.abs(m.data).max()))
        return worst

    # dual volumes and cell averaging

    def edge_cell_counts(self, mask=None):
        '''Number of cells in `mask` incident to every edge (0..4).'''
        m = (np.ones(self.n, dtype=np.int64) if mask is None
             else np.asarray(mask, dtype=np.int64))
        parts = []
        for a in AXES:
            b, c = tangential_axes(a)
            pad = [(1, 1) if d != a else (0, 0) for d in AXES]
            mp = np.pad(m, pad)
            total = np.zeros(self.edge_shape(a), dtype=np.int64)
            for sb in (0, 1):
                for sc in (0, 1):
                    sl = [slice(None)] * 3
                    sl[b] = slice(sb, sb + self.n[b] + 1)
                    sl[c] = slice(sc, sc + self.n[c] + 1)
                    total += mp[tuple(sl)]
            parts.append(total.ravel())
        return np.concatenate(parts)

    def face_cell_counts(self, mask=None):
        '''Number of cells in `mask` incident to every face (0..2).'''
        m = (np.ones(self.n, dtype=np.int64) if mask is None
             else np.asarray(mask, dtype=np.int64))
        parts = []
        for a in AXES:
            pad = [(1, 1) if d == a else (0, 0) for d in AXES]
            mp = np.pad(m, pad)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(0, self.n[a] + 1)
            hi[a] = slice(1, self.n[a] + 2)
            parts.append((mp[tuple(lo)] + mp[tuple(hi)]).ravel())
        return np.concatenate(parts)

    @cached_property
    def edge_volumes(self):
        return self.edge_cell_counts() * (self.h ** 3 / 4.0)

    @cached_property
    def face_volumes(self):
        return self.face_cell_counts() * (self.h ** 3 / 2.0)

    def edges_to_cells(self, values, available=None):
        '''
        Average edge values onto cell centres, shape (n_cells, 3).

        `available` (bool per edge) restricts each average to the listed
        edges; a cell with no available edge of some axis gets 0 there.
        '''
        values = np.asarray(values)
        comps = self.split_edges(values)
        weights = (self.split_edges(np.ones(self.n_edges)) if available is None
                   else self.split_edges(np.asarray(available, dtype=float)))
        out = np.zeros((self.n_cells, 3), dtype=values.dtype)
        for a in AXES:
            b, c = tangential_axes(a)
            acc = np.zeros(self.n, dtype=values.dtype)
            wsum = np.zeros(self.n)
            for sb in (0, 1):
                for sc in (0, 1):
                    sl = [slice(None)] * 3
                    sl[b] = slice(sb, sb + self.n[b])
                    sl[c] = slice(sc, sc + self.n[c])
                    acc = acc + comps[a][tuple(sl)] * weights[a][tuple(sl)]
                    wsum = wsum + weights[a][tuple(sl)]
            with np.errstate(invalid='ignore', divide='ignore'):
                avg = np.where(wsum > 0, acc / np.where(wsum > 0, wsum, 1.0), 0.0)
            out[:, a] = avg.ravel()
        return out

    def faces_to_cells(self, values):
        '''Average face values onto cell centres, shape (n_cells, 3).'''
        values = np.asarray(values)
        comps = self.split_faces(values)
        out = np.zeros((self.n_cells, 3), dtype=values.dtype)
        for a in AXES:
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[a] = slice(0, self.n[a])
            hi[a] = slice(1, self.n[a] + 1)
            out[:, a] = (0.5 * (comps[a][tuple(lo)] + comps[a][tuple(hi)])).ravel()
        return out

    def interior_edge_count(self):
        return int(len(self.interior_edges))


def build_grid(n, h, origin=(0.0, 0.0, 0.0)):
    '''Build a uniform staggered grid with `n` cells per axis of width `h`.'''
    if isinstance(n, (int, np.integer)):
        n = (n, n, n)
    validate({
        'n': [(vector3, 'n', n)],
        'h': [(positive, 'h', h)],
        'origin': [(vector3, 'origin', origin)],
    }, error=ConfigurationError)
    for axis, k in zip(AXIS_NAMES, n):
        type_integer('n.{0}'.format(axis), k, error=ConfigurationError)
        at_least('n.{0}'.format(axis), k, MIN_CELLS, error=ConfigurationError)

    grid = Grid(tuple(int(k) for k in n), float(h), tuple(float(o) for o in origin))
    log.debug("grid %s h=%g: %d edges (%d interior), %d faces",
              grid.n, grid.h, grid.n_edges, grid.interior_edge_count(), grid.n_faces)
    return grid
