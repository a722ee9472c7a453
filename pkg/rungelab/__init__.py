__version__ = '0.1.0'

from . import (
    errors,
    log,
    validate,
    pool,
    store,
    grid,
    geometry,
    materials,
    solver,
    analysis,
    oracle,
    runge_op,
    report,
    config,
    factory,
    experiments,
)
