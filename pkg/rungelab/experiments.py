# encoding: utf-8
'''
Experiment drivers. Each takes a validated config and returns a Report:

    runge          truncated approximants of a target on A, j = 1, 2, ...
    cauchy         regularized reconstruction from noisy Cauchy data on a patch
    three_balls    Holder interpolation of H(curl) norms on concentric balls
    propagation    smallness carried from a ball to a region G along chains
    localization   boundary data concentrating their field on M away from D
    ucp            size of sources in D seen through their boundary flux
    verify_solver  plane-wave convergence of the forward solver
'''
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import factory
from .analysis import (boundary_gram, fit_exp_growth, fit_holder, fit_log_modulus, fit_power,
                       holder_residual, norm)
from .config import with_seeds
from .errors import (ConfigurationError, DegenerateRegionError, GeometryError, NumericError,
                     ParameterError)
from .geometry import (Ball, boundary_patch, carve_region, chain_of_balls, cube_cover,
                       interior_margin, make_region)
from .grid import build_grid
from .log import LogPoint
from .materials import make_material
from .oracle import convergence_study, dipole_field, plane_wave, sample_on_grid, tangential_trace
from .pool import chunks, parallel_map
from .report import Report
from .runge_op import alpha_for_j, expand_target, truncate
from .solver import (FieldPair, SourceTerm, TangentialTrace, lift_boundary, magnetic_trace,
                     save_fields, solve, solve_bvp, solve_source)

log = logging.getLogger(__name__)

# generator streams, one per stage of a run
STAGES = {'target': 1, 'truth': 2, 'samples': 3, 'paths': 4, 'trials': 5, 'sources': 6}
LOG_LAMBDA_RANGE = (-16.0, 6.0)
MOROZOV_RTOL = 0.05
MOROZOV_STEPS = 80
MONOTONE_RTOL = 1e-10


# Helpers

def _complex_normal(rng, size):
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)


def _medium(mat):
    '''(eps0, mu0) of a constant scalar material, else cell averages with a warning.'''
    constants = mat.scalar_constants()
    if constants is not None:
        return constants
    eps0 = float(np.mean(np.trace(mat.eps, axis1=-2, axis2=-1)) / 3.0)
    mu0 = float(np.mean(np.trace(mat.mu, axis1=-2, axis2=-1)) / 3.0)
    log.warning("material is not constant; analytic fields use eps0=%.4g, mu0=%.4g",
                eps0, mu0)
    return eps0, mu0


def reference_wave(omega, eps0=1.0, mu0=1.0):
    '''Plane wave along (1, 1, 1) polarized along (1, -1, 0).'''
    k = omega * math.sqrt(eps0 * mu0) * np.ones(3) / math.sqrt(3.0)
    p = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    return plane_wave(k, p, omega, eps0, mu0)


def _monotone(values, increasing=False):
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return True
    step = np.diff(v) if increasing else -np.diff(v)
    return bool(np.all(step >= -MONOTONE_RTOL * np.maximum(np.abs(v[:-1]), 1e-300)))


def longest_decreasing_run(values):
    '''Length of the longest stretch of strictly decreasing consecutive values.'''
    best = run = 1 if len(values) else 0
    for prev, cur in zip(values[:-1], values[1:]):
        run = run + 1 if cur < prev else 1
        best = max(best, run)
    return best


def _try_fit(report, name, fit, *args):
    try:
        report.fits[name] = fit(*args)
    except ParameterError as e:
        log.info("skipping %s fit: %s", name, e)
    return report.fits.get(name)


def _snapshot(cfg, report, name, fields):
    if not cfg.output.snapshots:
        return
    path = os.path.join(cfg.output.dir, 'snapshots', '{0}.rgfo'.format(name))
    save_fields(fields, path)
    report.snapshots[name] = path


def _finish(report, start):
    report.wall_clock = time.perf_counter() - start
    log.info("%s finished in %.2fs: %s", report.tag, report.wall_clock,
             'pass' if report.passed else 'FAIL ' + ', '.join(report.failures))
    return report


# Runge approximation

def runge_target(lab, opA, weights, rng):
    '''The X-vector of the configured target on the observation region.'''
    spec = lab.cfg.runge
    if spec.target == 'operator_column':
        return opA.apply(_complex_normal(rng, opA.shape[1]))
    eps0, mu0 = _medium(lab.material)
    if spec.target == 'dipole':
        sol = dipole_field(spec.x0, spec.moment, lab.cfg.omega, eps0, mu0)
    else:
        sol = reference_wave(lab.cfg.omega, eps0, mu0)
    return weights.restrict(sample_on_grid(sol, lab.grid, weights.region))


def run_runge(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=('A',))
    cfg = lab.cfg
    spec = cfg.runge
    region = lab.regions['A']
    weights = factory.weights_for(lab, region)
    opA, svd = factory.restriction_for(lab, region, weights)
    if svd.rank == 0 or not svd.sigma[0] > 0:
        raise NumericError("Restriction operator has an empty spectrum.")

    (rng,) = lab.generators(1, STAGES['target'])
    expansion = expand_target(svd, runge_target(lab, opA, weights, rng))
    theta = cfg.exponents.theta
    sigma_1 = float(svd.sigma[0])

    def point(j):
        alpha = min(alpha_for_j(j, spec.C, theta, spec.m), sigma_1)
        approx = truncate(svd, expansion, alpha, j)
        fields = solve_bvp(lab.system, TangentialTrace(lab.patch, approx.boundary_data))
        return approx, fields

    report = Report('runge', cfg.echo())
    with LogPoint('runge ladder', log):
        results = parallel_map(point, spec.js, jobs)
    for approx, fields in results:
        report.add(j=approx.j_index, alpha=approx.alpha, kept=approx.kept_count,
                   x_error=approx.x_error, v_norm=approx.v_norm, v_bound=approx.v_bound,
                   hcurl_norm=norm(fields, kind='hcurl'))
    _snapshot(cfg, report, 'runge-j{0}'.format(results[-1][0].j_index), results[-1][1])

    js = report.column('j')
    errors = report.column('x_error')
    v_norms = report.column('v_norm')
    if np.all(errors > 0):
        _try_fit(report, 'decay', fit_power, js, errors)
    positive = v_norms > 0
    growth = None
    if positive.sum() >= 2:
        growth = _try_fit(report, 'growth', fit_exp_growth,
                          js[positive] ** (2.0 / spec.m), v_norms[positive])

    tol = cfg.tolerances
    report.flags.update({
        'x_error_nonincreasing': _monotone(errors),
        'strict_decrease_run': longest_decreasing_run(errors) >= min(tol.strict_run, len(js)),
        'v_norm_nondecreasing': _monotone(v_norms, increasing=True),
        'termwise_bound': bool(np.all(v_norms <= report.column('v_bound') * (1 + 1e-12))),
    })
    if growth is not None:
        report.flags['growth_fit'] = bool(growth.exponent > 0 and growth.r2 >= tol.growth_min_r2)
    report.extra.update({
        'sigma': svd.sigma.tolist(),
        'rank': svd.rank,
        'out_of_span_residual': expansion.residual,
        'target_norm': expansion.norm,
        'theta': theta,
        'patch_dofs': lab.patch.n_dofs,
        'material_seed': lab.material.spec.get('seed'),
    })
    return _finish(report, start)


# Cauchy problem

@dataclass(frozen=True, eq=False)
class CauchyProblem(object):
    '''
    Discrete solutions parametrized by all tangential boundary data b:
    E = L b, H = curl_lift b / (i omega). Data on the patch are S b (the
    patch entries of b) and T b (the weak magnetic trace). The normal
    equations N + lam s R are diagonalized once by eigh(N, R).
    '''
    system: object
    gamma: object
    full: object
    gram: object
    lift: np.ndarray
    curl_lift: np.ndarray
    positions: np.ndarray
    T: np.ndarray
    scale: float
    mu: np.ndarray
    vectors: np.ndarray

    @property
    def n_unknowns(self):
        return self.full.n_dofs

    def fields(self, b):
        E = self.lift @ b
        H = (self.curl_lift @ b) / (1j * self.system.omega)
        return FieldPair(self.system.grid, E, H)

    def project(self, f, g):
        G = self.gram.gram
        rhs = self.T.conj().T @ (G @ g)
        rhs[self.positions] += G @ f
        return self.vectors.conj().T @ rhs

    def coefficients(self, projected, lam):
        return self.vectors @ (projected / (self.mu + lam * self.scale))

    def misfit(self, b, f, g):
        df = b[self.positions] - f
        dg = self.T @ b - g
        return float(math.sqrt(max(self.gram.inner(df, df).real, 0.0)
                               + max(self.gram.inner(dg, dg).real, 0.0)))


@dataclass(frozen=True)
class CauchyResult(object):
    fields: FieldPair
    lam: float
    misfit: float
    iterations: int


def cauchy_problem(sys, gamma, jobs=1):
    grid = sys.grid
    full = boundary_patch(grid, 'all')
    if gamma.n_dofs >= full.n_dofs:
        raise ConfigurationError("The Cauchy data patch must be strictly smaller than the "
                                 "boundary.")
    positions = np.searchsorted(full.dofs, gamma.dofs)
    if not np.array_equal(full.dofs[np.minimum(positions, full.n_dofs - 1)], gamma.dofs):
        raise ParameterError("Cauchy patch dofs are not boundary edges.")

    with LogPoint('cauchy lift', log):
        blocks = parallel_map(lambda cols: lift_boundary(sys, full.dofs[cols]),
                              chunks(np.arange(full.n_dofs), max(1, jobs)), jobs)
    L = np.hstack(blocks)
    curl_lift = (sys.material.nu_mass @ (sys.curl @ L)) / grid.h / grid.face_volumes[:, None]
    omega = sys.omega
    R = (L.T @ (grid.edge_volumes[:, None] * L)
         + curl_lift.T @ (grid.face_volumes[:, None] * curl_lift) / omega ** 2)
    T = -(sys.matrix @ L)[gamma.dofs] / (1j * omega * gamma.areas[:, None])

    gram = boundary_gram(gamma)
    G = gram.gram
    N = T.conj().T @ (G @ T)
    N[np.ix_(positions, positions)] += G
    N = 0.5 * (N + N.conj().T)
    R = 0.5 * (R + R.T)
    scale = float(np.trace(N).real / np.trace(R))
    try:
        mu, vectors = la.eigh(N, R)
    except la.LinAlgError as e:
        raise NumericError("Cauchy normal equations break down: {0}".format(e))
    mu = np.maximum(mu, 0.0)
    log.info("cauchy problem: %d unknowns, %d data dofs, spectrum [%.3e, %.3e]",
             full.n_dofs, gamma.n_dofs, mu[0], mu[-1])
    return CauchyProblem(sys, gamma, full, gram, L, curl_lift, positions, T, scale, mu,
                         vectors)


def _morozov(problem, projected, f, g, eta):
    '''Bisect log10 lambda until the misfit is within 5% of eta.'''
    def misfit_at(log_lam):
        return problem.misfit(problem.coefficients(projected, 10.0 ** log_lam), f, g)

    lo, hi = LOG_LAMBDA_RANGE
    m_lo = misfit_at(lo)
    if m_lo >= eta:
        log.info("morozov: misfit %.3e at the smallest lambda already exceeds eta %.3e",
                 m_lo, eta)
        return 10.0 ** lo, m_lo, 0
    m_hi = misfit_at(hi)
    if m_hi <= eta:
        return 10.0 ** hi, m_hi, 0
    mid, m = lo, m_lo
    for step in range(1, MOROZOV_STEPS + 1):
        mid = 0.5 * (lo + hi)
        m = misfit_at(mid)
        if abs(m - eta) <= MOROZOV_RTOL * eta:
            log.debug("morozov: lambda=%.3e misfit=%.3e after %d steps", 10.0 ** mid, m, step)
            return 10.0 ** mid, m, step
        if m < eta:
            lo = mid
        else:
            hi = mid
    log.warning("morozov did not reach 5%% of eta=%.3e (misfit %.3e)", eta, m)
    return 10.0 ** mid, m, MOROZOV_STEPS


def cauchy_solve(sys, noisy_f, noisy_g, strategy='morozov', lam=1e-12, eta=0.0, problem=None):
    '''
    Least squares fit of Cauchy data over discrete solutions,

        min |S b - f|_V^2 + |T b - g|_V^2 + lam s |(E, H)|^2,

    with lam from the discrepancy principle (strategy "morozov", eta > 0)
    or fixed.
    '''
    if noisy_f.patch is not noisy_g.patch:
        raise ParameterError("Cauchy traces must live on the same patch.")
    if strategy not in ('morozov', 'fixed'):
        raise ParameterError("Unknown regularization strategy '{0}'.".format(strategy))
    problem = problem or cauchy_problem(sys, noisy_f.patch)
    if problem.gamma is not noisy_f.patch:
        raise ParameterError("Cauchy traces belong to another patch than the problem.")

    f, g = noisy_f.values, noisy_g.values
    projected = problem.project(f, g)
    steps = 0
    if strategy == 'morozov' and eta > 0:
        lam, misfit, steps = _morozov(problem, projected, f, g, eta)
        b = problem.coefficients(projected, lam)
    else:
        b = problem.coefficients(projected, lam)
        misfit = problem.misfit(b, f, g)
    return CauchyResult(problem.fields(b), float(lam), misfit, steps)


def cauchy_reconstruct(sys, noisy_f, noisy_g, strategy='morozov', lam=1e-12, eta=0.0,
                       problem=None):
    return cauchy_solve(sys, noisy_f, noisy_g, strategy, lam, eta, problem).fields


def cauchy_truth(lab, problem):
    '''Ground truth and, for a dipole, its analytic samples.'''
    spec = lab.cfg.cauchy
    grid = lab.grid
    if spec.truth == 'dipole':
        x0 = spec.x0
        if x0 is None:
            x0 = tuple(np.asarray(grid.origin) + grid.extent * np.array([1.5, 0.5, 0.5]))
        eps0, mu0 = _medium(lab.material)
        sol = dipole_field(x0, spec.moment, lab.cfg.omega, eps0, mu0)
        truth = solve_bvp(lab.system, tangential_trace(sol, problem.full))
        return truth, sample_on_grid(sol, grid)

    (rng,) = lab.generators(1, STAGES['truth'])
    free = np.ones(problem.full.n_dofs, dtype=bool)
    free[problem.positions] = False
    values = np.zeros(problem.full.n_dofs, dtype=complex)
    values[free] = _complex_normal(rng, int(free.sum()))
    return solve_bvp(lab.system, TangentialTrace(problem.full, values)), None


def run_cauchy(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=(), patch=cfg.cauchy.patch)
    cfg = lab.cfg
    sys = lab.system
    gamma = lab.patch
    problem = cauchy_problem(sys, gamma, jobs)
    truth, reference = cauchy_truth(lab, problem)

    f = TangentialTrace(gamma, truth.E[gamma.dofs])
    g = magnetic_trace(sys, truth, gamma)
    zeta = norm(truth, kind='hcurl')
    forward_error = None if reference is None else norm(truth - reference, kind='hcurl')
    reg = cfg.regularization
    seeds = cfg.noise.seeds
    levels = sorted(set(cfg.noise.etas))
    tasks = [(level, s) for level in levels for s in (seeds if level > 0 else seeds[:1])]

    def point(task):
        level, seed = task
        eta = level * zeta / (1.0 - level)
        rng = np.random.default_rng(seed)
        nf = _complex_normal(rng, gamma.n_dofs)
        ng = _complex_normal(rng, gamma.n_dofs)
        size = math.hypot(problem.gram.norm(nf), problem.gram.norm(ng))
        scale = eta / size if eta > 0 else 0.0
        result = cauchy_solve(sys, f + TangentialTrace(gamma, scale * nf),
                              g + TangentialTrace(gamma, scale * ng), reg.strategy, reg.lam,
                              eta, problem)
        return level, eta, seed, result, norm(result.fields - truth, kind='hcurl')

    report = Report('cauchy', cfg.echo())
    with LogPoint('cauchy ladder', log):
        results = parallel_map(point, tasks, jobs)
    medians = {}
    for level, eta, seed, result, error in results:
        report.add(eta=eta, seed=seed, lam=result.lam, misfit=result.misfit, error=error,
                   zeta=zeta)
        medians.setdefault(level, []).append(error)
    medians = {level: float(np.median(v)) for level, v in medians.items()}
    _snapshot(cfg, report, 'cauchy-truth', truth)

    noisy = [level for level in levels if level > 0]
    fit = None
    if len(noisy) >= 4:
        eta_of = {level: level * zeta / (1.0 - level) for level in noisy}
        pairs = [(eta_of[level] / (zeta + eta_of[level]),
                  medians[level] / (zeta + eta_of[level])) for level in noisy]
        fit = _try_fit(report, 'log_modulus', fit_log_modulus, pairs)

    tol = cfg.tolerances
    report.flags['monotone_in_eta'] = _monotone([medians[level] for level in levels],
                                                increasing=True)
    if fit is not None:
        report.flags['log_modulus_fit'] = bool(fit.m > 0 and fit.r2 >= tol.min_r2)
    if 0.0 in medians and forward_error is not None:
        report.flags['eta_zero_consistency'] = bool(
            medians[0.0] <= tol.eta_zero_factor * forward_error)
    report.extra.update({
        'zeta': zeta,
        'forward_error': forward_error,
        'median_errors': {repr(k): v for k, v in medians.items()},
        'unknowns': problem.n_unknowns,
        'data_dofs': gamma.n_dofs,
        'truth': cfg.cauchy.truth,
    })
    return _finish(report, start)


# Three balls

def _check_three_balls(grid, balls):
    if not balls.r1 < balls.r2 < balls.r3 / 2.0:
        raise GeometryError("Three-ball radii need r1 < r2 < r3/2, got ({0}, {1}, "
                            "{2}).".format(balls.r1, balls.r2, balls.r3))
    x0 = np.asarray(balls.x0, dtype=float)
    if np.any(x0 - balls.r3 < np.asarray(grid.origin)) or np.any(x0 + balls.r3 > grid.upper):
        raise GeometryError("Ball B(x0, r3) of radius {0} leaves the domain.".format(balls.r3))


def _ball_source(grid, region, rng, size):
    '''Random F, Ftilde supported in `region` with |F| + |Ftilde| = size.'''
    F = np.zeros(grid.n_edges, dtype=complex)
    Ft = np.zeros(grid.n_faces, dtype=complex)
    F[region.edge_rows] = _complex_normal(rng, len(region.edge_rows))
    Ft[region.face_rows] = _complex_normal(rng, len(region.face_rows))
    total = (math.sqrt(np.sum(grid.edge_volumes * np.abs(F) ** 2))
             + math.sqrt(np.sum(grid.face_volumes * np.abs(Ft) ** 2)))
    return SourceTerm(grid, F * (size / total), Ft * (size / total), region)


def run_three_balls(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=())
    cfg = lab.cfg
    spec = cfg.regions.balls
    grid = lab.grid
    _check_three_balls(grid, spec)
    balls = [carve_region(grid, Ball(tuple(spec.x0), r), 'ball')
             for r in (spec.r1, spec.r2, spec.r3)]
    full = boundary_patch(grid, 'all')
    M0 = spec.source_scale

    def sample(rng):
        data = _complex_normal(rng, full.n_dofs)
        src = _ball_source(grid, balls[2], rng, M0) if M0 > 0 else None
        fields = solve(lab.system, TangentialTrace(full, data).full(), src)
        return [norm(fields, where=ball, kind='hcurl', part='E') for ball in balls]

    report = Report('three_balls', cfg.echo())
    with LogPoint('three balls', log):
        norms = parallel_map(sample, lab.generators(spec.samples, STAGES['samples']), jobs)
    for k, (a1, a2, a3) in enumerate(norms):
        report.add(sample=k, a1=a1, a2=a2, a3=a3, source_scale=M0)

    raw = np.asarray(norms)
    triples = raw + M0
    fit = fit_holder(triples)
    report.fits['holder'] = fit
    tol = cfg.tolerances
    report.flags.update({
        'tau_in_unit': bool(0.0 < fit.tau < 1.0),
        'holds': holder_residual(triples, fit.C, fit.tau) <= tol.holder_slack,
        'feasible': 'infeasible' not in fit.flags,
    })
    if M0 > 0:
        # the geometric mean is superadditive, so the offset cannot raise C above max(C, 1)
        plain = _try_fit(report, 'holder_plain', fit_holder, raw)
        if plain is not None:
            report.flags['offset_bound'] = bool(fit.C <= max(plain.C, 1.0) * (1 + 1e-9))
    report.extra.update({'radii': [spec.r1, spec.r2, spec.r3], 'x0': list(spec.x0),
                         'ball_cells': [b.cell_count for b in balls]})
    return _finish(report, start)


# Propagation of smallness

def check_propagation_geometry(lab, G, spec):
    '''G connected, B(x0, r0/2) in G, h <= min(2 rho, r0/2), dist(G, boundary) > h.'''
    grid = lab.grid
    rho = spec.rho or spec.r0
    if not G.is_connected():
        raise GeometryError("Region G is not connected.")
    try:
        half = carve_region(grid, Ball(tuple(spec.x0), spec.r0 / 2.0), 'ball')
    except DegenerateRegionError:
        raise GeometryError("B(x0, r0/2) contains no cells at this resolution.")
    if not half.is_subset_of(G):
        raise GeometryError("B(x0, r0/2) is not contained in G.")
    if spec.h > min(2.0 * rho, spec.r0 / 2.0):
        raise GeometryError("h={0} exceeds min(2 rho, r0/2) = {1}.".format(
            spec.h, min(2.0 * rho, spec.r0 / 2.0)))
    try:
        margin = interior_margin(lab.omega, spec.h)
    except (DegenerateRegionError, ParameterError):
        raise GeometryError("The domain has no points farther than h={0} from its "
                            "boundary.".format(spec.h))
    if not G.is_subset_of(margin):
        raise GeometryError("dist(G, boundary) must exceed h={0}.".format(spec.h))


def propagation_chains(lab, G, spec):
    '''Cube cover of G and ball chains from x0 to sampled cube centres.'''
    r3 = spec.h / 2.0
    r2 = r3 / 3.0
    r1 = r2 / 3.0
    cover = cube_cover(G, r1)
    try:
        eroded = interior_margin(G, r3)
    except (DegenerateRegionError, ParameterError):
        raise GeometryError("G has no points farther than r3={0} from its boundary.".format(r3))
    centers = cover.centers
    candidates = centers[eroded.contains_points(centers)]
    if not len(candidates):
        raise GeometryError("No cube centre of the cover lies in G eroded by r3.")

    (rng,) = lab.generators(1, STAGES['paths'])
    pick = np.sort(rng.choice(len(candidates), size=min(spec.max_paths, len(candidates)),
                              replace=False))
    x0 = np.asarray(spec.x0, dtype=float)
    chains = []
    for target in candidates[pick]:
        try:
            chain = chain_of_balls(np.vstack([x0, target]), r1, G, r2, r3)
        except GeometryError as e:
            log.debug("skipping path to %s: %s", target, e)
            continue
        try:
            chain.check_invariants(G)
        except GeometryError as e:
            log.warning("chain to %s breaks its invariants: %s", target, e)
        chains.append(chain)
    if not chains:
        raise GeometryError("No chain of balls fits inside G from x0={0}.".format(spec.x0))
    return cover, chains


def run_propagation(cfg, jobs=1, cache_dir=None):
    '''
    Smallness on G from the ball B(x0, r0). The constants come from one
    two-factor Holder fit over the (ball, G, Omega) norms of each sample;
    the chains only certify the geometry and are not iterated.
    '''
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=('G',))
    cfg = lab.cfg
    spec = cfg.regions.balls
    G = lab.regions['G']
    check_propagation_geometry(lab, G, spec)
    with LogPoint('chains', log):
        cover, chains = propagation_chains(lab, G, spec)

    ball = carve_region(lab.grid, Ball(tuple(spec.x0), spec.r0), 'ball')
    patch = lab.patch

    def sample(rng):
        fields = solve_bvp(lab.system, TangentialTrace(patch, _complex_normal(rng, patch.n_dofs)))
        return (norm(fields, where=ball, kind='hcurl', part='E'),
                norm(fields, kind='hcurl', part='E'),
                norm(fields, where=G, kind='hcurl', part='E'))

    report = Report('propagation', cfg.echo())
    norms = parallel_map(sample, lab.generators(spec.samples, STAGES['samples']), jobs)
    for k, (b, o, g) in enumerate(norms):
        report.add(sample=k, ball_norm=b, omega_norm=o, g_norm=g)

    triples = np.array([(b, g, o) for b, o, g in norms])
    fit = fit_holder(triples, model='power')
    report.fits['propagation'] = fit
    report.flags.update({
        'chains_valid': all(c.is_disjoint() and c.is_nested()
                            and c.count <= c.volume_bound(G) for c in chains),
        'delta_in_unit': bool(0.0 < fit.delta < 1.0),
        'holds': holder_residual(triples, fit.C, fit.delta) <= cfg.tolerances.holder_slack,
        'feasible': 'infeasible' not in fit.flags,
    })
    report.extra.update({
        'radii': [chains[0].r1, chains[0].r2, chains[0].r3],
        'rho': spec.rho or spec.r0,
        'cubes': len(cover),
        'chain_counts': [c.count for c in chains],
        'volume_bound': chains[0].volume_bound(G),
    })
    return _finish(report, start)


# Localization

def max_quotient(opM, opD, eps_reg, basis=None):
    '''
    Largest |A_M f|_X^2 / (|A_D f|_X^2 + eps |f|_V^2) over f in the span of
    `basis` (all of V when None), with its maximizer normalized so the
    denominator is 1.
    '''
    wM, wD = opM.weights, opD.weights
    if wM.patch is not wD.patch:
        raise ParameterError("Both restriction operators must share one boundary patch.")
    if basis is None:
        basis = np.eye(opM.shape[1])
    AM = opM.matrix @ basis
    AD = opD.matrix @ basis
    P = AM.conj().T @ (wM.gram_X[:, None] * AM)
    Q = (AD.conj().T @ (wD.gram_X[:, None] * AD)
         + eps_reg * (basis.conj().T @ (wM.gram_V @ basis)))
    try:
        vals, vecs = la.eigh(0.5 * (P + P.conj().T), 0.5 * (Q + Q.conj().T))
    except la.LinAlgError as e:
        raise NumericError("Localization denominator is degenerate: {0}".format(e))
    return float(vals[-1]), basis @ vecs[:, -1]


def rayleigh_quotient(opM, opD, eps_reg, f):
    wM, wD = opM.weights, opD.weights
    num = wM.x_norm(opM.apply(f)) ** 2
    den = wD.x_norm(opD.apply(f)) ** 2 + eps_reg * wM.v_norm(f) ** 2
    return num / den


def run_localization(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=('M', 'D'))
    cfg = lab.cfg
    spec = cfg.localization
    M, D = lab.regions['M'], lab.regions['D']
    if np.any(M.mask & D.mask):
        raise GeometryError("Regions M and D must be disjoint.")
    opM, svdM = factory.restriction_for(lab, M)
    opD, _ = factory.restriction_for(lab, D)

    n = lab.patch.n_dofs
    cutoffs = sorted({min(c, svdM.rank) for c in spec.cutoffs if c >= 1})
    bases = [(c, svdM.phi[:, :c]) for c in cutoffs] + [(n, None)]
    report = Report('localization', cfg.echo())
    quotients = []
    for cutoff, basis in bases:
        q, f = max_quotient(opM, opD, spec.eps_reg, basis)
        fields = solve_bvp(lab.system, TangentialTrace(lab.patch, f))
        report.add(cutoff=cutoff, quotient=q, norm_M=norm(fields, where=M),
                   norm_D=norm(fields, where=D), norm_omega=norm(fields),
                   v_norm=opM.weights.v_norm(f))
        quotients.append(q)

    trials = [rayleigh_quotient(opM, opD, spec.eps_reg, _complex_normal(rng, n))
              for rng in lab.generators(spec.random_trials, STAGES['trials'])]
    best_random = max(trials) if trials else 0.0
    report.flags.update({
        'maximizer': bool(quotients[-1] >= best_random * (1 - 1e-9)),
        'monotone_cutoff': _monotone(quotients, increasing=True),
    })
    report.extra.update({'top_quotient': quotients[-1], 'random_max': best_random,
                         'eps_reg': spec.eps_reg, 'rank_M': svdM.rank})
    return _finish(report, start)


# Unique continuation from boundary flux

def run_ucp(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    lab = factory.create_lab(cfg, cache_dir, jobs, regions=('D',))
    cfg = lab.cfg
    spec = cfg.ucp
    grid = lab.grid
    D = lab.regions['D']
    outside = make_region(grid, ~D.mask, 'omega')
    factory.setup_weights(lab)
    gram = lab.grams[id(lab.patch)]

    rows = D.edge_rows
    points = grid.edge_positions[rows]
    axes = grid.edge_axis[rows]
    lo, hi = sorted((spec.k_min, spec.k_max))
    wavenumbers = np.geomspace(lo, hi, spec.samples)

    def sample(task):
        k, rng = task
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        p = _complex_normal(rng, 3)
        p -= d * np.dot(d, p)
        F = np.zeros(grid.n_edges, dtype=complex)
        F[rows] = p[axes] * np.exp(1j * k * (points @ d))
        src = SourceTerm(grid, F, np.zeros(grid.n_faces, dtype=complex), D)
        fields = solve_source(lab.system, src)
        size = math.sqrt(np.sum(grid.edge_volumes[rows] * np.abs(F[rows]) ** 2))
        trace = norm(magnetic_trace(lab.system, fields, lab.patch, src), kind='boundary',
                     weights=gram)
        return k, size, trace, norm(fields, where=outside, kind='hcurl')

    tasks = list(zip(wavenumbers, lab.generators(spec.samples, STAGES['sources'])))
    report = Report('ucp', cfg.echo())
    with LogPoint('ucp sources', log):
        results = parallel_map(sample, tasks, jobs)
    for i, (k, size, trace, interior) in enumerate(results):
        report.add(sample=i, wavenumber=k, source=size, trace=trace, interior=interior)

    sizes = report.column('source')
    ratios = report.column('trace') / sizes
    interiors = report.column('interior')
    report.flags['nonvanishing'] = bool(np.all(ratios > 0) and np.all(interiors > 0))
    if report.flags['nonvanishing']:
        kappa = 2.0 * float(ratios.max())
        _try_fit(report, 'log_modulus', fit_log_modulus,
                 np.column_stack([ratios / kappa, interiors / sizes]))
        report.extra['kappa'] = kappa
    return _finish(report, start)


# Solver verification

def run_verify_solver(cfg, jobs=1, cache_dir=None):
    start = time.perf_counter()
    if cfg.seed is None:
        cfg = with_seeds(cfg)
    n = cfg.verify.n
    side = cfg.grid.spacing * max(cfg.grid.cells)
    grids = [build_grid(n * 2 ** i, side / (n * 2 ** i), cfg.grid.origin) for i in range(3)]
    spec = cfg.material.model_dump()
    mat = make_material(grids[0], spec)
    constants = mat.scalar_constants()
    if constants is None:
        raise ConfigurationError("verify_solver needs a constant scalar material.")

    sol = reference_wave(cfg.omega, *constants)
    with LogPoint('convergence study', log):
        points = convergence_study(sol, grids, **cfg.solver.options())
    report = Report('verify_solver', cfg.echo())
    for point in points:
        report.add(n=point.n[0], h=point.h, error=point.error,
                   order=None if math.isnan(point.order) else point.order)
    orders = [p.order for p in points[1:]]
    report.flags['convergence_order'] = bool(all(o >= cfg.tolerances.min_order for o in orders))
    report.extra['orders'] = orders
    return _finish(report, start)


EXPERIMENTS = {
    'runge': run_runge,
    'cauchy': run_cauchy,
    'three_balls': run_three_balls,
    'propagation': run_propagation,
    'localization': run_localization,
    'ucp': run_ucp,
    'verify_solver': run_verify_solver,
}


def run_experiment(cfg, jobs=1, cache_dir=None):
    try:
        driver = EXPERIMENTS[cfg.experiment]
    except KeyError:
        raise ConfigurationError("Unknown experiment '{0}'.".format(cfg.experiment))
    log.info("running %s (seed %s, jobs %d)", cfg.experiment, cfg.seed, jobs)
    return driver(cfg, jobs=jobs, cache_dir=cache_dir)
