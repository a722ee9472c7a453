# encoding: utf-8
'''
Regions, boundary patches and covering constructions on a staggered grid.

Regions are voxel masks built by a cell-centre test against a shape:

    >>> region = carve_region(grid, Ball((0.5, 0.5, 0.5), 0.3), role='subdomain_A')

Boundary patches list the tangential boundary edges of a set of boundary
squares together with their area weights. Ball chains and cube covers
reproduce the covering arguments used for propagation of smallness.
'''
import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DegenerateRegionError, GeometryError, ParameterError
from .grid import tangential_axes
from .validate import positive, validate, vector3

log = logging.getLogger(__name__)

ROLES = ('omega', 'subdomain_A', 'exclusion_D', 'probe_G', 'ball', 'margin')
SIDES = {'x-': (0, 0), 'x+': (0, 1), 'y-': (1, 0), 'y+': (1, 1), 'z-': (2, 0), 'z+': (2, 1)}
FACE_NEIGHBOURS = ndimage.generate_binary_structure(3, 1)
MAX_CUBES = 1000000


# Shapes

@dataclass(frozen=True)
class Omega(object):
    '''The whole computational box.'''

    def contains(self, points):
        return np.ones(len(points), dtype=bool)


@dataclass(frozen=True)
class Ball(object):
    center: tuple
    radius: float

    def contains(self, points):
        d = np.linalg.norm(points - np.asarray(self.center, dtype=float), axis=1)
        return d <= self.radius


@dataclass(frozen=True)
class Box(object):
    lo: tuple
    hi: tuple

    def contains(self, points):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass(frozen=True)
class Union(object):
    parts: tuple

    def contains(self, points):
        out = np.zeros(len(points), dtype=bool)
        for part in self.parts:
            out |= part.contains(points)
        return out


@dataclass(frozen=True)
class Intersection(object):
    parts: tuple

    def contains(self, points):
        out = np.ones(len(points), dtype=bool)
        for part in self.parts:
            out &= part.contains(points)
        return out


@dataclass(frozen=True)
class Complement(object):
    '''Everything in the box outside `part`.'''
    part: object

    def contains(self, points):
        return ~self.part.contains(points)


def shape_from_spec(spec):
    '''
    Build a shape from its JSON form, e.g.
    {"kind": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.2}.
    '''
    if hasattr(spec, 'contains'):
        return spec
    if not isinstance(spec, dict) or 'kind' not in spec:
        raise ConfigurationError("Shape spec must be an object with a 'kind' key.")

    kind = spec['kind']
    try:
        if kind == 'omega':
            return Omega()
        if kind == 'ball':
            vector3('center', spec['center'], error=ConfigurationError)
            return Ball(tuple(float(v) for v in spec['center']), float(spec['radius']))
        if kind == 'box':
            vector3('lo', spec['lo'], error=ConfigurationError)
            vector3('hi', spec['hi'], error=ConfigurationError)
            return Box(tuple(float(v) for v in spec['lo']), tuple(float(v) for v in spec['hi']))
        if kind == 'union':
            return Union(tuple(shape_from_spec(p) for p in spec['parts']))
        if kind == 'intersection':
            return Intersection(tuple(shape_from_spec(p) for p in spec['parts']))
        if kind == 'complement':
            return Complement(shape_from_spec(spec['part']))
    except KeyError as e:
        raise ConfigurationError("Shape '{0}' is missing the key {1}.".format(kind, e))
    raise ConfigurationError("Unknown shape kind '{0}'.".format(kind))


# Regions

@dataclass(frozen=True, eq=False)
class Region(object):
    grid: object
    mask: np.ndarray
    role: str = 'omega'

    @property
    def cell_count(self):
        return int(self.mask.sum())

    @property
    def volume(self):
        return self.cell_count * self.grid.h ** 3

    @cached_property
    def mask_hash(self):
        digest = hashlib.blake2b(np.packbits(self.mask.ravel()).tobytes(), digest_size=8)
        return int.from_bytes(digest.digest(), 'little')

    @cached_property
    def edge_counts(self):
        return self.grid.edge_cell_counts(self.mask)

    @cached_property
    def face_counts(self):
        return self.grid.face_cell_counts(self.mask)

    @cached_property
    def edge_rows(self):
        '''Edges with at least one incident cell in the region.'''
        return np.flatnonzero(self.edge_counts > 0)

    @cached_property
    def face_rows(self):
        return np.flatnonzero(self.face_counts > 0)

    @cached_property
    def edge_weights(self):
        '''In-region share of every edge's dual volume.'''
        return self.edge_counts * (self.grid.h ** 3 / 4.0)

    @cached_property
    def face_weights(self):
        return self.face_counts * (self.grid.h ** 3 / 2.0)

    @cached_property
    def centers(self):
        return self.grid.cell_centers[self.mask.ravel()]

    @cached_property
    def diameter(self):
        '''Diagonal of the bounding box of the region's cells.'''
        pts = self.centers
        span = pts.max(axis=0) - pts.min(axis=0) + self.grid.h
        return float(np.linalg.norm(span))

    def contains_points(self, points):
        idx, inside = self.grid.cell_of(points)
        return inside & self.mask[idx[:, 0], idx[:, 1], idx[:, 2]]

    def is_subset_of(self, other):
        return bool(np.all(other.mask[self.mask]))

    def is_compactly_contained(self):
        '''At least one cell of clearance from the boundary of the box.'''
        m = self.mask
        return not (m[0].any() or m[-1].any() or m[:, 0].any() or m[:, -1].any()
                    or m[:, :, 0].any() or m[:, :, -1].any())

    def is_connected(self):
        _, count = ndimage.label(self.mask, structure=FACE_NEIGHBOURS)
        return count == 1

    def complement_is_connected(self):
        _, count = ndimage.label(~self.mask, structure=FACE_NEIGHBOURS)
        return count == 1

    def with_role(self, role):
        return make_region(self.grid, self.mask, role)


def make_region(grid, mask, role='omega'):
    if role not in ROLES:
        raise ConfigurationError("Unknown region role '{0}'.".format(role))
    mask = np.array(mask, dtype=bool).reshape(grid.n)
    if not mask.any():
        raise DegenerateRegionError("Region '{0}' contains no cells.".format(role))
    mask.setflags(write=False)
    return Region(grid, mask, role)


def carve_region(grid, shape, role='omega'):
    '''Cells whose centres satisfy the shape predicate.'''
    shape = shape_from_spec(shape)
    mask = shape.contains(grid.cell_centers)
    region = make_region(grid, mask, role)
    log.debug("carved %s region: %d cells", role, region.cell_count)
    return region


def omega_region(grid):
    return carve_region(grid, Omega(), 'omega')


def check_runge_geometry(region):
    '''Hypotheses on the observation region of the restriction operator.'''
    if not region.is_compactly_contained():
        raise GeometryError("Region '{0}' touches the boundary; one cell of clearance "
                            "is required.".format(region.role))
    if not region.complement_is_connected():
        raise GeometryError("The complement of region '{0}' is not connected.".format(
            region.role))


def interior_margin(region, r):
    '''Cells of `region` whose centre is farther than `r` from its boundary.'''
    validate({'r': [(positive, 'r', r)]})
    if r >= region.diameter / 2.0:
        raise ParameterError("Margin r={0} must be below half the region diameter "
                             "{1}.".format(r, region.diameter / 2.0))

    h = region.grid.h
    padded = np.pad(region.mask, 1)
    distance = ndimage.distance_transform_edt(padded, sampling=h)[1:-1, 1:-1, 1:-1]
    # distance to the nearest outside centre, minus the half cell to its face
    mask = region.mask & (distance - h / 2.0 > r)
    return make_region(region.grid, mask, 'margin')


# Boundary patches

def _side_squares(grid, axis, upper):
    '''Centres and the four tangential edges of every boundary square on a side.'''
    b, c = tangential_axes(axis)
    u, v = np.meshgrid(np.arange(grid.n[b]), np.arange(grid.n[c]), indexing='ij')
    u = u.ravel()
    v = v.ravel()
    plane = np.full(u.shape, grid.n[axis] if upper else 0)

    centers = np.zeros((len(u), 3))
    centers[:, axis] = grid.origin[axis] + plane * grid.h
    centers[:, b] = grid.origin[b] + (u + 0.5) * grid.h
    centers[:, c] = grid.origin[c] + (v + 0.5) * grid.h

    def edge(along, du, dv):
        idx = [None, None, None]
        idx[axis] = plane
        idx[b] = u + du
        idx[c] = v + dv
        return grid.edge_index(along, *idx)

    edges = np.stack([edge(b, 0, 0), edge(b, 0, 1), edge(c, 0, 0), edge(c, 1, 0)], axis=1)
    return centers, edges


def _side_names(side):
    if isinstance(side, str):
        if side == 'all':
            return tuple(SIDES)
        return (side,)
    return tuple(side)


@dataclass(frozen=True, eq=False)
class BoundaryPatch(object):
    grid: object
    side: tuple
    window: object
    collar: str
    squares: np.ndarray
    dofs: np.ndarray
    areas: np.ndarray

    @property
    def n_dofs(self):
        return int(len(self.dofs))

    @property
    def positions(self):
        return self.grid.edge_positions[self.dofs]

    @property
    def axes(self):
        return self.grid.edge_axis[self.dofs]

    def describe(self):
        return {'side': list(self.side), 'window': self.window,
                'collar': self.collar, 'n_dofs': self.n_dofs}


def boundary_patch(grid, side='x-', window=None, collar='include'):
    '''
    Tangential edge dofs of the boundary squares on `side` whose centres
    lie in `window`.

    `side` is one of x-, x+, y-, y+, z-, z+, "all", or a list of sides.
    `window` is ((lo_b, lo_c), (hi_b, hi_c)) in the two tangential
    coordinates of a single side; it is ignored for several sides.
    `collar="exclude"` drops rim edges, those contained in fewer than two
    of the listed squares.
    '''
    names = _side_names(side)
    for name in names:
        if name not in SIDES:
            raise ConfigurationError("Unknown boundary side '{0}'.".format(name))
    if collar not in ('include', 'exclude'):
        raise ConfigurationError("Unknown collar convention '{0}'.".format(collar))
    if len(names) > 1:
        window = None

    all_centers = []
    all_edges = []
    for name in names:
        axis, upper = SIDES[name]
        centers, edges = _side_squares(grid, axis, upper)
        if window is not None:
            b, c = tangential_axes(axis)
            lo, hi = np.asarray(window, dtype=float)
            keep = ((centers[:, b] >= lo[0]) & (centers[:, b] <= hi[0])
                    & (centers[:, c] >= lo[1]) & (centers[:, c] <= hi[1]))
            centers, edges = centers[keep], edges[keep]
        all_centers.append(centers)
        all_edges.append(edges)

    squares = np.vstack(all_centers)
    if not len(squares):
        raise ConfigurationError("Patch window {0} selects no boundary face on "
                                 "side {1}.".format(window, '/'.join(names)))

    dofs, counts = np.unique(np.concatenate(all_edges, axis=0).ravel(), return_counts=True)
    if collar == 'exclude':
        keep = counts >= 2
        dofs, counts = dofs[keep], counts[keep]
        if not len(dofs):
            raise ConfigurationError("Patch has no dofs once its collar is excluded.")

    window = None if window is None else [list(map(float, w)) for w in window]
    patch = BoundaryPatch(grid, names, window, collar, squares, dofs,
                          counts * (grid.h ** 2 / 2.0))
    log.debug("boundary patch %s: %d squares, %d dofs", '/'.join(names),
              len(squares), patch.n_dofs)
    return patch


# Chains of balls

@dataclass(frozen=True, eq=False)
class BallChain(object):
    centers: np.ndarray
    params: np.ndarray
    r1: float
    r2: float
    r3: float
    path: np.ndarray

    @property
    def count(self):
        return int(len(self.centers))

    def is_disjoint(self):
        if self.count < 2:
            return True
        d = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=2)
        off = d[~np.eye(self.count, dtype=bool)]
        return bool(np.all(off >= 2.0 * self.r1 * (1.0 - 1e-9)))

    def is_nested(self):
        step = np.linalg.norm(np.diff(self.centers, axis=0), axis=1)
        return bool(np.all(step + self.r1 <= self.r2 * (1.0 + 1e-9)))

    def volume_bound(self, host):
        return host.volume / (4.0 / 3.0 * math.pi * self.r1 ** 3) + 1.0

    def check_invariants(self, host):
        if not self.is_disjoint():
            raise GeometryError("Chain balls of radius r1 overlap.")
        if not self.is_nested():
            raise GeometryError("Chain violates B(x_k+1, r1) in B(x_k, r2).")
        if self.count > self.volume_bound(host):
            raise GeometryError("Chain has {0} balls, above the volume bound {1:.1f}.".format(
                self.count, self.volume_bound(host)))


def _arclength(path):
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _point_at(path, cum, t):
    s = int(np.clip(np.searchsorted(cum, t, side='right') - 1, 0, len(path) - 2))
    length = cum[s + 1] - cum[s]
    if length == 0.0:
        return path[s].copy()
    return path[s] + (path[s + 1] - path[s]) * ((t - cum[s]) / length)


def _last_crossing(path, cum, x, rho):
    '''Largest arclength t with |path(t) - x| = rho, or None.'''
    for s in range(len(path) - 2, -1, -1):
        a = path[s]
        d = path[s + 1] - a
        length = float(np.linalg.norm(d))
        if length == 0.0:
            continue
        u = d / length
        w = a - x
        uw = float(np.dot(u, w))
        disc = uw * uw - (float(np.dot(w, w)) - rho * rho)
        if disc < 0.0:
            continue
        slack = 1e-12 * max(1.0, length)
        roots = [tau for tau in (-uw + math.sqrt(disc), -uw - math.sqrt(disc))
                 if -slack <= tau <= length + slack]
        if roots:
            return cum[s] + min(max(max(roots), 0.0), length)
    return None


def chain_of_balls(path, r1, host, r2=None, r3=None):
    '''
    Centres x_0 = path(0), x_k+1 = path(t_k+1) with
    t_k+1 = max{t : |path(t) - x_k| = 2 r1}.

    Stepping stops when the parameter no longer advances or the next centre
    would come within 2 r1 of an earlier one. Default radii are r2 = 3 r1,
    r3 = 9 r1.
    '''
    r2 = 3.0 * r1 if r2 is None else r2
    r3 = 9.0 * r1 if r3 is None else r3
    validate({
        'r1': [(positive, 'r1', r1)],
        'r2': [(positive, 'r2', r2)],
        'r3': [(positive, 'r3', r3)],
    })
    if not (r1 < r2 < r3) or r2 < 3.0 * r1 * (1.0 - 1e-12):
        raise ParameterError("Chain radii need r1 < r2 < r3 and r2 >= 3 r1, got "
                             "({0}, {1}, {2}).".format(r1, r2, r3))

    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.ndim != 2 or path.shape[1] != 3:
        raise ParameterError("Path must be a polyline of 3-D points.")
    if len(path) == 1:
        path = np.vstack([path, path])

    try:
        eroded = interior_margin(host, r3)
    except (DegenerateRegionError, ParameterError):
        raise GeometryError("Host region has no points farther than r3={0} from its "
                            "boundary.".format(r3))

    cum = _arclength(path)
    samples = [path[:1]]
    step = host.grid.h / 4.0
    for s in range(len(path) - 1):
        count = max(2, int(math.ceil((cum[s + 1] - cum[s]) / step)) + 1)
        samples.append(np.linspace(path[s], path[s + 1], count))
    if not np.all(eroded.contains_points(np.vstack(samples))):
        raise GeometryError("Path leaves the host region eroded by r3={0}.".format(r3))

    tol = 1e-9 * r1
    centers = [path[0].copy()]
    params = [0.0]
    while True:
        t = _last_crossing(path, cum, centers[-1], 2.0 * r1)
        if t is None or t <= params[-1] + tol:
            break
        x = _point_at(path, cum, t)
        if len(centers) > 1:
            earlier = np.linalg.norm(np.asarray(centers[:-1]) - x, axis=1)
            if np.any(earlier < 2.0 * r1 - tol):
                break
        centers.append(x)
        params.append(t)

    chain = BallChain(np.asarray(centers), np.asarray(params), float(r1), float(r2),
                      float(r3), path)
    log.debug("chain of %d balls, r1=%g", chain.count, r1)
    return chain


# Cube covers

@dataclass(frozen=True)
class Cube(object):
    index: tuple
    lo: np.ndarray = field(compare=False)
    side: float

    @property
    def center(self):
        return self.lo + self.side / 2.0

    @property
    def diagonal(self):
        return self.side * math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class CubeCover(object):
    '''Lattice cubes [m l, (m+1) l) anchored at the grid origin.'''
    indices: np.ndarray
    side: float
    origin: np.ndarray

    def __len__(self):
        return int(len(self.indices))

    def __iter__(self):
        for m in self.indices:
            yield Cube(tuple(int(k) for k in m), self.origin + m * self.side, self.side)

    def __getitem__(self, k):
        m = self.indices[k]
        return Cube(tuple(int(v) for v in m), self.origin + m * self.side, self.side)

    @property
    def centers(self):
        return self.origin + (self.indices + 0.5) * self.side


def cube_cover(region, r1):
    '''Every cube of side 2 r1 / sqrt(3) meeting a cell of the region.'''
    validate({'r1': [(positive, 'r1', r1)]})
    side = 2.0 * r1 / math.sqrt(3.0)
    grid = region.grid
    origin = np.asarray(grid.origin, dtype=float)
    lo = (region.centers - grid.h / 2.0 - origin) / side
    hi = (region.centers + grid.h / 2.0 - origin) / side
    # open intersections, with slack for lattice planes on voxel faces
    m_lo = np.floor(lo + 1e-9).astype(np.int64)
    m_hi = np.ceil(hi - 1e-9).astype(np.int64) - 1
    spans = m_hi - m_lo + 1

    estimate = float(np.prod(spans, axis=1).sum())
    if estimate > MAX_CUBES * 8:
        raise ParameterError("Cube cover with r1={0} would enumerate about {1:.0f} "
                             "cubes.".format(r1, estimate))

    found = []
    width = spans.max(axis=0)
    for dx in range(width[0]):
        for dy in range(width[1]):
            for dz in range(width[2]):
                m = m_lo + np.array([dx, dy, dz])
                ok = np.all(m <= m_hi, axis=1)
                if ok.any():
                    found.append(m[ok])
    indices = np.unique(np.vstack(found), axis=0)
    if len(indices) > MAX_CUBES:
        raise ParameterError("Cube cover with r1={0} has {1} cubes.".format(r1, len(indices)))
    log.debug("cube cover: %d cubes of side %g", len(indices), side)
    return CubeCover(indices, side, origin)
