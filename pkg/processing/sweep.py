"""
Bounded worker pool for independent simulations, and the seeded generator
every random draw goes through.
"""
import logging
from multiprocessing import Pool
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 bit generator; named here so a numpy default change cannot alter runs."""
    return np.random.Generator(np.random.PCG64(seed))


def run_all(func: Callable[[T], R], tasks: Iterable[T], workers: int = 1) -> List[R]:
    """Map func over tasks; results come back in submission order.

    func must be a module-level callable so it can be pickled.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    processes = min(workers, len(tasks))
    logger.info('sweep: %d tasks on %d workers', len(tasks), processes)
    with Pool(processes) as pool:
        return pool.map(func, tasks)
