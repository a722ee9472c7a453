# encoding: utf-8
'''
Discrete norms and the fitting of stability constants.

Boundary data on a patch are measured by a surrogate of a negative-order
trace norm: with M = diag(area) and S the graph Laplacian linking parallel
neighbouring patch edges,

    T = M^-1/2 (M + S) M^-1/2,     G_V = M^1/2 T^-1/2 M^1/2.

T has spectrum >= 1, so the surrogate never exceeds the plain L2 norm on
the patch. Volume data on a region use diagonal dual-volume weights.
'''
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import stats
from scipy.spatial import cKDTree

from .errors import NumericError, ParameterError, SizeError
from .solver import FieldPair, TangentialTrace
from .validate import array_length, validate

log = logging.getLogger(__name__)

MAX_PATCH_DOFS = 4000
HOLDER_EDGE = 1e-9
MAX_HOLDER_CONSTANT = 1e6
KINDS = ('lp', 'hcurl', 'boundary')
PARTS = ('E', 'H', 'both')


@dataclass(frozen=True, eq=False)
class BoundaryGram(object):
    patch: object
    gram: np.ndarray
    chol: np.ndarray
    operator: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def inner(self, f, g):
        return np.vdot(f, self.gram @ g)

    def norm(self, f):
        return float(np.sqrt(max(self.inner(f, f).real, 0.0)))

    def riesz(self, y):
        '''Solve G_V x = y.'''
        return la.cho_solve((self.chol, True), y)


def _boundary_laplacian(patch):
    grid = patch.grid
    pos = patch.positions
    axes = patch.axes
    pairs = cKDTree(pos).query_pairs(r=grid.h * (1.0 + 1e-9), output_type='ndarray')
    n = patch.n_dofs
    S = np.zeros((n, n))
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        d = np.linalg.norm(pos[i] - pos[j], axis=1)
        keep = (axes[i] == axes[j]) & (np.abs(d - grid.h) <= 1e-9 * grid.h)
        i, j = i[keep], j[keep]
        w = (patch.areas[i] + patch.areas[j]) / (2.0 * grid.h ** 2)
        np.add.at(S, (i, j), -w)
        np.add.at(S, (j, i), -w)
        np.add.at(S, (i, i), w)
        np.add.at(S, (j, j), w)
    return S


def boundary_gram(patch):
    '''Surrogate Gram matrix on the tangential dofs of a patch.'''
    n = patch.n_dofs
    if n > MAX_PATCH_DOFS:
        raise SizeError("Patch has {0} dofs; dense boundary norms are limited to {1}. "
                        "Coarsen the grid or shrink the window.".format(n, MAX_PATCH_DOFS))
    sqrt_m = np.sqrt(patch.areas)
    T = (np.diag(patch.areas) + _boundary_laplacian(patch)) / np.outer(sqrt_m, sqrt_m)
    T = 0.5 * (T + T.T)
    lam, U = la.eigh(T)
    if lam[0] <= 0:
        raise NumericError("Boundary operator is not positive definite (min eigenvalue "
                           "{0:.3e}).".format(lam[0]))
    inv_sqrt = (U / np.sqrt(lam)) @ U.T
    G = sqrt_m[:, None] * inv_sqrt * sqrt_m[None, :]
    G = 0.5 * (G + G.T)
    try:
        L = la.cholesky(G, lower=True)
    except la.LinAlgError as e:
        raise NumericError("Boundary Gram is not positive definite: {0}".format(e))
    log.debug("boundary gram on %d dofs, spectrum [%.3g, %.3g]", n, lam[0], lam[-1])
    return BoundaryGram(patch, G, L, T, lam, U)


@dataclass(frozen=True, eq=False)
class NormWeights(object):
    '''Gram data of the boundary space on a patch and the volume space on a region.'''
    patch: object
    region: object
    boundary: BoundaryGram
    gram_X: np.ndarray
    edge_rows: np.ndarray
    face_rows: np.ndarray

    @property
    def gram_V(self):
        return self.boundary.gram

    @property
    def chol_V(self):
        return self.boundary.chol

    @property
    def chol_X(self):
        return np.sqrt(self.gram_X)

    @property
    def n_rows(self):
        return int(len(self.gram_X))

    @property
    def n_cols(self):
        return self.patch.n_dofs

    def x_inner(self, u, v):
        return np.vdot(u, self.gram_X * v)

    def x_norm(self, u):
        return float(np.sqrt(max(self.x_inner(u, u).real, 0.0)))

    def v_inner(self, f, g):
        return self.boundary.inner(f, g)

    def v_norm(self, f):
        return self.boundary.norm(f)

    def riesz_V(self, y):
        return self.boundary.riesz(y)

    def restrict(self, fields):
        '''The region's rows of a field pair, E rows first.'''
        return np.concatenate([fields.E[self.edge_rows], fields.H[self.face_rows]])


def build_norm_weights(patch, regionA, boundary=None):
    boundary = boundary_gram(patch) if boundary is None else boundary
    edge_rows = regionA.edge_rows
    face_rows = regionA.face_rows
    gram_X = np.concatenate([regionA.edge_weights[edge_rows], regionA.face_weights[face_rows]])
    return NormWeights(patch, regionA, boundary, gram_X, edge_rows, face_rows)


# Norms

def _cell_magnitude(grid, fields, part, curl=False):
    '''Pointwise Euclidean magnitude per cell of E, H or both (or their curls).'''
    total = np.zeros(grid.n_cells)
    if part in ('E', 'both'):
        if curl:
            cells = grid.faces_to_cells(grid.curl @ fields.E / grid.h)
        else:
            cells = grid.edges_to_cells(fields.E)
        total += np.sum(np.abs(cells) ** 2, axis=1)
    if part in ('H', 'both'):
        if curl:
            interior = ~grid.boundary_edge_mask
            dual = np.zeros(grid.n_edges, dtype=complex)
            dual[interior] = ((grid.curl.T @ (grid.face_volumes * fields.H))
                              / grid.h / grid.edge_volumes)[interior]
            cells = grid.edges_to_cells(dual, available=interior)
        else:
            cells = grid.faces_to_cells(fields.H)
        total += np.sum(np.abs(cells) ** 2, axis=1)
    return np.sqrt(total)


def _lp(values, weights, p):
    if np.isinf(p):
        return float(values.max()) if len(values) else 0.0
    return float(np.sum(weights * values ** p) ** (1.0 / p))


def norm(value, where=None, kind='lp', p=2, part='both', weights=None):
    '''
    Discrete norm of a FieldPair or a TangentialTrace.

        kind='lp'        volume-weighted l^p of the cellwise magnitude
                         (patch-area weighted for traces)
        kind='hcurl'     sqrt(L2^2 + L2(curl)^2) of a field pair
        kind='boundary'  sqrt(v^H G_V v) of a trace; `weights` is a
                         NormWeights or BoundaryGram on its patch
    '''
    if kind not in KINDS:
        raise ParameterError("Unknown norm kind '{0}'.".format(kind))
    if part not in PARTS:
        raise ParameterError("Unknown field part '{0}'.".format(part))
    p = float(p)
    if not (p >= 1.0):
        raise ParameterError("Exponent p must lie in [1, inf], got {0}.".format(p))

    if isinstance(value, TangentialTrace):
        if kind == 'hcurl':
            raise ParameterError("H(curl) norms apply to field pairs, not traces.")
        if kind == 'boundary':
            if weights is None:
                raise ParameterError("Boundary norms need the patch Gram.")
            gram = weights.boundary if isinstance(weights, NormWeights) else weights
            if gram.patch is not value.patch:
                raise ParameterError("Boundary Gram belongs to another patch.")
            return gram.norm(value.values)
        return _lp(np.abs(value.values), value.patch.areas, p)

    if not isinstance(value, FieldPair):
        raise ParameterError("Cannot take a norm of {0}.".format(type(value).__name__))
    if kind == 'boundary':
        raise ParameterError("Boundary norms apply to traces, not field pairs.")

    grid = value.grid
    mask = np.ones(grid.n_cells, dtype=bool) if where is None else where.mask.ravel()
    cell_volume = np.full(int(mask.sum()), grid.h ** 3)
    base = _cell_magnitude(grid, value, part)[mask]
    if kind == 'lp':
        return _lp(base, cell_volume, p)
    curl = _cell_magnitude(grid, value, part, curl=True)[mask]
    return float(np.hypot(_lp(base, cell_volume, 2.0), _lp(curl, cell_volume, 2.0)))


# Fits

@dataclass(frozen=True)
class FitResult(object):
    '''
    `exponent` is tau (holder), delta (power-type Holder fits), m
    (log_modulus), s (decay) or the rate (exp_growth).
    '''
    model: str
    C: float
    exponent: float
    r2: float
    n: int
    flags: tuple = ()
    residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def tau(self):
        return self.exponent

    @property
    def delta(self):
        return self.exponent

    @property
    def m(self):
        return self.exponent

    def to_row(self):
        return {'model': self.model, 'C': self.C, 'tau_or_delta_or_m': self.exponent,
                'r2': self.r2, 'n': self.n}

    def to_dict(self):
        return {'model': self.model, 'C': self.C, 'tau_or_delta_or_m': self.exponent,
                'r2': self.r2, 'n': self.n, 'flags': list(self.flags),
                'residual': self.residual}


def _r_squared(y, predicted):
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))


def _positive_rows(data, width, key, minimum):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ParameterError("'{0}' must be a list of {1}-tuples.".format(key, width))
    validate({key: [(array_length, key, arr, minimum)]})
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError("'{0}' must hold finite positive values.".format(key))
    return arr


def holder_residual(triples, C, tau):
    '''max_i log a2 - tau log a1 - (1 - tau) log a3 - log C.'''
    arr = np.log(np.asarray(triples, dtype=float))
    return float(np.max(arr[:, 1] - tau * arr[:, 0] - (1.0 - tau) * arr[:, 2]) - np.log(C))


def fit_holder(triples, model='holder', max_constant=MAX_HOLDER_CONSTANT):
    '''
    Smallest C with a2 <= C a1^tau a3^(1-tau) for every triple, minimized
    over tau in (0, 1). log C(tau) is a maximum of affine functions of tau,
    so its minimum sits at an end point or a pairwise crossing.
    '''
    arr = np.log(_positive_rows(triples, 3, 'triples', 3))
    x = arr[:, 0] - arr[:, 2]
    y = arr[:, 1] - arr[:, 2]

    lo, hi = HOLDER_EDGE, 1.0 - HOLDER_EDGE
    candidates = [lo, hi]
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    with np.errstate(divide='ignore', invalid='ignore'):
        cross = dy / dx
    cross = cross[np.isfinite(cross)]
    candidates = np.unique(np.concatenate([candidates, cross[(cross > lo) & (cross < hi)]]))

    values = np.max(y[None, :] - candidates[:, None] * x[None, :], axis=1)
    best = values.min()
    ties = candidates[values <= best + 1e-12 * (1.0 + abs(best))]
    tau = float(0.5 * (ties.min() + ties.max()))
    log_c = float(np.max(y - tau * x))
    C = float(np.exp(log_c))

    predicted = tau * arr[:, 0] + (1.0 - tau) * arr[:, 2]
    r2 = _r_squared(arr[:, 1], predicted + np.mean(arr[:, 1] - predicted))
    flags = ('infeasible',) if C > max_constant else ()
    if flags:
        log.info("holder fit infeasible: best C=%.3e at tau=%.4f", C, tau)
    return FitResult(model, C, tau, r2, len(arr), flags,
                     holder_residual(np.exp(arr), C, tau))


def _regress(x, y, key):
    if np.ptp(x) == 0.0:
        raise ParameterError("'{0}' has no spread in its abscissae.".format(key))
    return stats.linregress(x, y)


def fit_log_modulus(pairs):
    '''Least squares of log e against log log(1/t): slope -m, intercept log C.'''
    arr = _positive_rows(pairs, 2, 'pairs', 4)
    t, e = arr[:, 0], arr[:, 1]
    if np.any(t >= 1.0):
        raise ParameterError("Log-modulus abscissae t must lie strictly inside (0, 1).")
    X = np.log(np.log(1.0 / t))
    Y = np.log(e)
    fit = _regress(X, Y, 'pairs')
    m = -float(fit.slope)
    C = float(np.exp(fit.intercept))
    r2 = _r_squared(Y, fit.intercept + fit.slope * X)
    flags = ('non_decaying',) if m <= 1e-9 else ()
    return FitResult('log_modulus', C, m, r2, len(arr), flags)


def fit_power(xs, ys):
    '''y ~ C x^-s.'''
    arr = _positive_rows(np.column_stack([xs, ys]), 2, 'points', 2)
    X, Y = np.log(arr[:, 0]), np.log(arr[:, 1])
    fit = _regress(X, Y, 'points')
    return FitResult('power', float(np.exp(fit.intercept)), -float(fit.slope),
                     _r_squared(Y, fit.intercept + fit.slope * X), len(arr))


def fit_exp_growth(xs, ys):
    '''log y ~ log C + b x.'''
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    validate({'points': [(array_length, 'points', xs, 2)]})
    if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ParameterError("'points' must hold finite positive values.")
    Y = np.log(ys)
    fit = _regress(xs, Y, 'points')
    return FitResult('exp_growth', float(np.exp(fit.intercept)), float(fit.slope),
                     _r_squared(Y, fit.intercept + fit.slope * xs), len(xs))

