# encoding: utf-8
'''
Order-preserving parallel map used by the experiment drivers and the
restriction-operator assembly.
'''
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

log = logging.getLogger(__name__)


def parallel_map(func, items, jobs=1):
    '''
    Apply `func` to every item and return the results in input order.

    `jobs <= 1` runs inline; otherwise the items run on a thread pool that
    shares the caller's factorizations.
    '''
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(int(jobs), len(items))
    log.debug("parallel map over %d items with %d workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def spawn_generators(seed, count):
    '''Independent generators, one per task, reproducible from `seed`.'''
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def chunks(sequence, count):
    '''Split `sequence` into at most `count` contiguous, nonempty slices.'''
    sequence = np.asarray(sequence)
    count = max(1, min(int(count), len(sequence)))
    return [part for part in np.array_split(sequence, count) if len(part)]
