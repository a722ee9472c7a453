# encoding: utf-8
'''
Build the run context of an experiment from its config, one step at a time.
'''
import logging
import os
from dataclasses import dataclass, field

from .analysis import boundary_gram, build_norm_weights
from .config import ExperimentConfig, load_config_file, with_seeds
from .errors import ConfigurationError, CorruptFileError, ProvenanceError, StoreError
from .geometry import boundary_patch, carve_region, omega_region
from .grid import build_grid
from .log import LogPoint
from .materials import make_material
from .pool import spawn_generators
from .runge_op import (assemble_restriction, cache_paths, describe_provenance, load_operator,
                       load_svd, save_operator, save_svd, weighted_svd)
from .solver import assemble

log = logging.getLogger(__name__)

ROLES = {'A': 'subdomain_A', 'D': 'exclusion_D', 'G': 'probe_G', 'M': 'subdomain_A'}


@dataclass(eq=False)
class Lab(object):
    '''Everything an experiment driver needs, built lazily by the setup steps.'''
    cfg: ExperimentConfig
    cache_dir: str = None
    jobs: int = 1
    grid: object = None
    material: object = None
    omega: object = None
    regions: dict = field(default_factory=dict)
    patch: object = None
    system: object = None
    grams: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.cfg.seed

    def generators(self, count, offset=0):
        '''`count` generators for one stage; `offset` keeps stages independent.'''
        return spawn_generators([self.seed, offset], count)


def load_config(config, seed=None):
    if isinstance(config, ExperimentConfig):
        cfg = config
    elif isinstance(config, (str, os.PathLike)):
        cfg = load_config_file(config)
    else:
        raise ConfigurationError("Cannot load a config from {0}.".format(
            type(config).__name__))
    return with_seeds(cfg, seed)


def setup_grid(lab):
    spec = lab.cfg.grid
    lab.grid = build_grid(spec.cells, spec.spacing, spec.origin)
    lab.omega = omega_region(lab.grid)
    return lab


def setup_material(lab):
    spec = lab.cfg.material.model_dump()
    if spec['kind'] == 'smooth' and spec['seed'] is None:
        spec['seed'] = lab.seed
    lab.material = make_material(lab.grid, spec)
    return lab


def setup_regions(lab, names=('A', 'D', 'G', 'M')):
    shapes = lab.cfg.regions
    for name in names:
        lab.regions[name] = carve_region(lab.grid, getattr(shapes, name), ROLES[name])
    return lab


def setup_patch(lab, spec=None):
    spec = spec or lab.cfg.patch
    lab.patch = boundary_patch(lab.grid, spec.side, spec.window, spec.collar)
    return lab


def setup_system(lab):
    with LogPoint('assemble', log):
        lab.system = assemble(lab.grid, lab.material, lab.cfg.omega,
                              **lab.cfg.solver.options())
    return lab


def setup_weights(lab, patch=None):
    '''Boundary Gram of a patch, shared by every region it is paired with.'''
    patch = patch or lab.patch
    key = id(patch)
    if key not in lab.grams:
        lab.grams[key] = boundary_gram(patch)
    return lab


def weights_for(lab, region, patch=None):
    patch = patch or lab.patch
    setup_weights(lab, patch)
    return build_norm_weights(patch, region, lab.grams[id(patch)])


def create_lab(cfg, cache_dir=None, jobs=1, regions=('A', 'D', 'G', 'M'), patch=None,
               system=True):
    '''Grid, material, regions, patch and (optionally) the factored system.'''
    cfg = with_seeds(cfg)
    lab = Lab(cfg, cache_dir=cache_dir or cfg.cache_dir, jobs=jobs)
    lab = setup_grid(lab)
    lab = setup_material(lab)
    lab = setup_regions(lab, regions)
    lab = setup_patch(lab, patch)
    if system:
        lab = setup_system(lab)
    return lab


def _load_cached(loader, path, weights, provenance):
    if not os.path.exists(path):
        return None
    try:
        obj = loader(path, weights, provenance)
    except (CorruptFileError, ProvenanceError) as e:
        log.warning("discarding cache entry %s: %s", path, e)
        return None
    log.info("cache hit %s", os.path.basename(path))
    return obj


def restriction_for(lab, region, weights=None, patch=None):
    '''Restriction operator and its SVD, from the cache when one is configured.'''
    patch = patch or lab.patch
    weights = weights or weights_for(lab, region, patch)
    provenance = describe_provenance(lab.system, patch, region)

    op_path = svd_path = None
    opA = svd = None
    if lab.cache_dir:
        op_path, svd_path = cache_paths(lab.cache_dir, provenance)
        opA = _load_cached(load_operator, op_path, weights, provenance)
        svd = _load_cached(load_svd, svd_path, weights, provenance)

    if opA is None:
        with LogPoint('restriction {0}'.format(region.role), log):
            opA = assemble_restriction(lab.system, patch, region, weights, lab.jobs)
        if op_path:
            _store(save_operator, opA, op_path)
    if svd is None:
        svd = weighted_svd(opA)
        if svd_path:
            _store(save_svd, svd, svd_path)
    return opA, svd


def _store(saver, obj, path):
    try:
        saver(obj, path)
        log.info("cached %s", os.path.basename(path))
    except StoreError as e:
        log.warning("could not cache %s: %s", path, e)
