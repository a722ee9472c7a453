# encoding: utf-8
'''
Experiment configuration: a JSON document validated against pydantic models.

Missing sections take their defaults, the reference configuration on the
unit cube:

    {"experiment": "runge", "omega": 2.0, "grid": {"n": 12}}
'''
import json
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, ValidationError, field_validator,
                      model_validator)

from .errors import ConfigurationError

log = logging.getLogger(__name__)

EXPERIMENTS = ('runge', 'cauchy', 'three_balls', 'propagation', 'localization', 'ucp',
               'verify_solver')
SHAPE_KINDS = ('omega', 'ball', 'box', 'union', 'intersection', 'complement')
THETA_TOL = 1e-9
Vector = Tuple[float, float, float]


class Spec(BaseModel):
    model_config = ConfigDict(extra='forbid', populate_by_name=True)


class GridSpec(Spec):
    n: Union[int, Tuple[int, int, int]] = 12
    h: Optional[float] = Field(default=None, gt=0)
    origin: Vector = (0.0, 0.0, 0.0)

    @field_validator('n')
    @classmethod
    def at_least_four(cls, v):
        cells = (v,) * 3 if isinstance(v, int) else v
        if min(cells) < 4:
            raise ValueError('every axis needs at least 4 cells')
        return v

    @property
    def cells(self):
        return (self.n,) * 3 if isinstance(self.n, int) else tuple(self.n)

    @property
    def spacing(self):
        '''h, defaulting to the unit cube along the longest axis.'''
        return self.h if self.h is not None else 1.0 / max(self.cells)


class MaterialSpec(Spec):
    kind: Literal['constant', 'layered', 'smooth'] = 'constant'
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None


class PatchSpec(Spec):
    side: Union[str, List[str]] = 'x-'
    window: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    collar: Literal['include', 'exclude'] = 'include'


def _shape(kind, **kw):
    return dict(kind=kind, **kw)


class BallsSpec(Spec):
    x0: Vector = (0.5, 0.5, 0.5)
    r1: float = Field(default=0.1, gt=0)
    r2: float = Field(default=0.2, gt=0)
    r3: float = Field(default=0.45, gt=0)
    r0: float = Field(default=0.3, gt=0)
    h: float = Field(default=0.1, gt=0)
    rho: Optional[float] = Field(default=None, gt=0)
    samples: int = Field(default=20, ge=3)
    source_scale: float = Field(default=0.0, ge=0)
    max_paths: int = Field(default=8, ge=1)


class RegionsSpec(Spec):
    A: Dict[str, Any] = Field(
        default_factory=lambda: _shape('ball', center=[0.45, 0.5, 0.5], radius=0.18))
    D: Dict[str, Any] = Field(
        default_factory=lambda: _shape('box', lo=[0.65, 0.2, 0.2], hi=[0.9, 0.8, 0.8]))
    G: Dict[str, Any] = Field(
        default_factory=lambda: _shape('box', lo=[0.3, 0.3, 0.3], hi=[0.7, 0.7, 0.7]))
    M: Dict[str, Any] = Field(
        default_factory=lambda: _shape('ball', center=[0.3, 0.5, 0.5], radius=0.12))
    balls: BallsSpec = Field(default_factory=BallsSpec)

    @field_validator('A', 'D', 'G', 'M')
    @classmethod
    def known_shape(cls, v):
        if v.get('kind') not in SHAPE_KINDS:
            raise ValueError("shape kind must be one of {0}".format(', '.join(SHAPE_KINDS)))
        return v


class ExponentsSpec(Spec):
    p: float = 4.0
    q: float = 3.0
    q0: float = 4.0
    theta: Optional[float] = None
    relaxed: bool = False

    @model_validator(mode='after')
    def consistent(self):
        if not 2.0 < self.q < self.q0:
            raise ValueError("exponents need 2 < q < q0, got q={0}, q0={1}".format(
                self.q, self.q0))
        if self.q0 > self.p:
            raise ValueError("exponents need q0 <= p, got q0={0}, p={1}".format(
                self.q0, self.p))
        if not self.relaxed and self.q0 > 6.0:
            raise ValueError("exponents need q0 <= 6 unless 'relaxed' is set")
        theta = expected_theta(self.q, self.q0)
        if self.theta is not None and abs(self.theta - theta) > THETA_TOL:
            raise ValueError("theta={0} violates 1/q = (1 - theta)/2 + theta/q0, which "
                             "gives theta={1}".format(self.theta, theta))
        self.theta = theta
        return self


def expected_theta(q, q0):
    '''theta solving 1/q = (1 - theta)/2 + theta/q0.'''
    return (0.5 - 1.0 / q) / (0.5 - 1.0 / q0)


class NoiseSpec(Spec):
    etas: List[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    seeds: Optional[List[int]] = None

    @field_validator('etas')
    @classmethod
    def relative_levels(cls, v):
        if not v or any(not 0.0 <= e < 1.0 for e in v):
            raise ValueError('noise levels must lie in [0, 1)')
        return v


class RungeSpec(Spec):
    js: List[int] = Field(default_factory=lambda: list(range(1, 11)))
    C: float = Field(default=float(np.e), gt=0)
    m: float = Field(default=2.0, gt=0)
    target: Literal['dipole', 'plane_wave', 'operator_column'] = 'dipole'
    x0: Vector = (0.9, 0.5, 0.5)
    moment: Vector = (0.0, 0.0, 1.0)

    @field_validator('js')
    @classmethod
    def positive_indices(cls, v):
        if not v or any(j < 1 for j in v):
            raise ValueError('j values must be positive integers')
        return sorted(set(v))


class RegularizationSpec(Spec):
    strategy: Literal['morozov', 'fixed'] = 'morozov'
    lam: float = Field(default=1e-12, gt=0, alias='lambda')


class CauchySpec(Spec):
    patch: PatchSpec = Field(
        default_factory=lambda: PatchSpec(side=['x-', 'y-', 'y+', 'z-', 'z+']))
    truth: Literal['dipole', 'boundary'] = 'dipole'
    x0: Optional[Vector] = None
    moment: Vector = (0.0, 0.0, 1.0)


class LocalizationSpec(Spec):
    cutoffs: List[int] = Field(default_factory=lambda: [5, 10, 20, 50])
    eps_reg: float = Field(default=1e-6, gt=0)
    random_trials: int = Field(default=20, ge=0)


class UcpSpec(Spec):
    samples: int = Field(default=12, ge=4)
    k_min: float = Field(default=1.0, gt=0)
    k_max: float = Field(default=12.0, gt=0)


class VerifySpec(Spec):
    n: int = Field(default=8, ge=4)


class SolverSpec(Spec):
    tolerance: float = Field(default=1e-10, gt=0)
    resonance_threshold: float = Field(default=1e-6, gt=0)
    direct_limit: int = Field(default=200000, ge=1)
    max_iterations: int = Field(default=10000, ge=1)

    def options(self):
        return {'tolerance': self.tolerance, 'threshold': self.resonance_threshold,
                'direct_limit': self.direct_limit, 'max_iterations': self.max_iterations}


class OutputSpec(Spec):
    dir: str = 'out'
    snapshots: bool = False


class Tolerances(Spec):
    min_order: float = 1.8
    strict_run: int = Field(default=6, ge=1)
    min_r2: float = Field(default=0.8, ge=0, le=1)
    growth_min_r2: float = Field(default=0.9, ge=0, le=1)
    holder_slack: float = Field(default=1e-9, ge=0)
    eta_zero_factor: float = Field(default=10.0, gt=0)


class ExperimentConfig(Spec):
    experiment: Literal[EXPERIMENTS] = 'runge'
    seed: Optional[int] = Field(default=None, ge=0)
    omega: float = Field(default=2.0, gt=0)
    cache_dir: Optional[str] = None
    grid: GridSpec = Field(default_factory=GridSpec)
    material: MaterialSpec = Field(default_factory=MaterialSpec)
    patch: PatchSpec = Field(default_factory=PatchSpec)
    regions: RegionsSpec = Field(default_factory=RegionsSpec)
    exponents: ExponentsSpec = Field(default_factory=ExponentsSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    runge: RungeSpec = Field(default_factory=RungeSpec)
    regularization: RegularizationSpec = Field(default_factory=RegularizationSpec)
    cauchy: CauchySpec = Field(default_factory=CauchySpec)
    localization: LocalizationSpec = Field(default_factory=LocalizationSpec)
    ucp: UcpSpec = Field(default_factory=UcpSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    def echo(self):
        '''JSON-ready dump that parses back to an equal config.'''
        return self.model_dump(mode='json', by_alias=True)


def _field_path(error):
    loc = [str(part) for part in error.get('loc', ())]
    return '.'.join(loc) or '<root>'


def parse_config(text):
    '''Decode and validate a JSON config; errors name the line or field at fault.'''
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError("Malformed config JSON at line {0}, column {1}: {2}".format(
            e.lineno, e.colno, e.msg), payload={'line': e.lineno, 'column': e.colno})
    if not isinstance(data, dict):
        raise ConfigurationError("Config must be a JSON object.")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = _field_path(first)
        raise ConfigurationError("Invalid config field '{0}': {1}".format(path, first['msg']),
                                 payload={'field': path, 'errors': len(e.errors())})


def load_config_file(path):
    try:
        with open(path, encoding='utf8') as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigurationError("Cannot read config {0}: {1}".format(path, e))
    return parse_config(text)


def with_seeds(cfg, seed=None):
    '''
    A copy of `cfg` with every seed explicit: `seed` overrides the master
    seed, a missing master seed is drawn from fresh entropy, and missing
    noise seeds are spawned from the master seed.
    '''
    master = seed if seed is not None else cfg.seed
    if master is None:
        master = int(np.random.SeedSequence().entropy % (2 ** 63))
        log.info("no seed configured, using %d", master)
    noise = cfg.noise
    if noise.seeds is None or seed is not None:
        spawned = np.random.SeedSequence(master).generate_state(5)
        noise = noise.model_copy(update={'seeds': [int(s) for s in spawned]})
    return cfg.model_copy(update={'seed': int(master), 'noise': noise})
