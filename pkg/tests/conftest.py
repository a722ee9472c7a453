import json

import numpy as np
import pytest

from rungelab.analysis import build_norm_weights
from rungelab.config import parse_config
from rungelab.geometry import boundary_patch, carve_region
from rungelab.grid import build_grid
from rungelab.materials import make_material
from rungelab.runge_op import assemble_restriction, weighted_svd
from rungelab.solver import assemble

VACUUM = {'kind': 'constant', 'params': {'eps': 1.0, 'mu': 1.0}}
REGION_A = {'kind': 'ball', 'center': [0.45, 0.5, 0.5], 'radius': 0.18}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope='session')
def grid6():
    return build_grid(6, 1.0 / 6.0)


@pytest.fixture(scope='session')
def grid8():
    return build_grid(8, 0.125)


@pytest.fixture(scope='session')
def system6(grid6):
    return assemble(grid6, make_material(grid6, VACUUM), 2.0)


@pytest.fixture(scope='session')
def system8(grid8):
    return assemble(grid8, make_material(grid8, VACUUM), 2.0)


@pytest.fixture(scope='session')
def patch6(grid6):
    return boundary_patch(grid6, 'x-')


@pytest.fixture(scope='session')
def region6(grid6):
    return carve_region(grid6, REGION_A, 'subdomain_A')


@pytest.fixture(scope='session')
def weights6(patch6, region6):
    return build_norm_weights(patch6, region6)


@pytest.fixture(scope='session')
def operator6(system6, patch6, region6, weights6):
    return assemble_restriction(system6, patch6, region6, weights6)


@pytest.fixture(scope='session')
def svd6(operator6):
    return weighted_svd(operator6)


@pytest.fixture
def make_config(tmp_path):
    '''Validated config on a small vacuum grid, writing reports under tmp_path.'''
    def factory(**sections):
        data = {'seed': 11, 'omega': 2.0, 'grid': {'n': 8},
                'output': {'dir': str(tmp_path / 'out')}}
        data.update(sections)
        return parse_config(json.dumps(data))
    return factory
