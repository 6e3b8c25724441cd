"""
Long-time sampling, correlation dimension and exponential attraction rates.

Cloud coordinates are (mu_k^1/2 u_k, v_k), so Euclidean distance equals the
energy-space distance.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import linregress

from processing.delay import InitialHistory, random_history
from processing.diagnostics import energy_norms
from processing.errors import ConfigurationError, InsufficientDataError, PreconditionError
from processing.integrator import Problem, StepperConfig, Trace, simulate_task
from processing.sweep import run_all, seeded_rng

logger = logging.getLogger(__name__)

MIN_CLOUD = 100
FULL_PAIRS_LIMIT = 2000
MAX_PAIRS = 2_000_000
RADII = 24
RADII_QUANTILES = (1e-3, 0.1)
PLATEAU_TOL = 0.15
PLATEAU_MIN = 5


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    burn_in: float = 0.0
    stride: int = 1

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def diameter(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.max(pdist(self.points))) if len(self) <= FULL_PAIRS_LIMIT else float(
            2.0 * np.max(np.linalg.norm(self.points - self.points.mean(axis=0), axis=1)))


@dataclass(frozen=True)
class DimensionEstimate:
    radii: np.ndarray
    correlation: np.ndarray
    local_slopes: np.ndarray
    slope: float
    window: Optional[Tuple[int, int]]     # [start, stop) into radii
    confidence: float

    @property
    def plateau(self) -> bool:
        return self.window is not None


def sample_cloud(trace: Trace, burn_in: float, stride: int) -> PointCloud:
    """Energy-weighted phase points every stride steps after burn_in."""
    if not trace.completed:
        raise PreconditionError(f'trace ended early ({trace.status})')
    if stride < 1 or stride >= len(trace):
        raise PreconditionError('stride must be positive and shorter than the trace')
    if burn_in >= trace.times[-1]:
        raise PreconditionError('burn-in must end before the trace')
    start = int(np.searchsorted(trace.times, burn_in - 1e-12))
    rows = np.arange(start, len(trace), stride)
    if rows.size < MIN_CLOUD:
        raise InsufficientDataError(f'{rows.size} points after burn-in, need {MIN_CLOUD}')
    root_mu = np.sqrt(trace.basis.mu)
    points = np.hstack([trace.u[rows] * root_mu, trace.v[rows]])
    return PointCloud(points, float(burn_in), int(stride))


def synthetic_cloud(shape: str, points: int, dim: int, seed: int = 0) -> PointCloud:
    """Uniform samples of the unit circle (dimension 1) or unit square (dimension 2),
    placed in R^dim by a random isometric embedding."""
    if dim < 2:
        raise PreconditionError('synthetic clouds need an embedding dimension of at least 2')
    rng = seeded_rng(seed)
    if shape == 'circle':
        angle = rng.uniform(0.0, 2.0 * np.pi, points)
        flat = np.column_stack([np.cos(angle), np.sin(angle)])
    elif shape == 'square':
        flat = rng.uniform(0.0, 1.0, size=(points, 2))
    else:
        raise ConfigurationError(f"unknown synthetic shape '{shape}'")
    frame, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
    return PointCloud(flat @ frame.T)


def pair_distances(cloud: PointCloud, seed: int = 0, max_pairs: int = MAX_PAIRS) -> np.ndarray:
    """All pair distances, or a fixed-seed random sample of pairs for large clouds."""
    n = len(cloud)
    if n <= FULL_PAIRS_LIMIT:
        return pdist(cloud.points)
    rng = seeded_rng(seed)
    count = min(max_pairs, n * (n - 1) // 2)
    i = rng.integers(0, n, size=count)
    j = rng.integers(0, n - 1, size=count)
    j = j + (j >= i)
    return np.linalg.norm(cloud.points[i] - cloud.points[j], axis=1)


def default_radii(distances: np.ndarray, count: int = RADII) -> np.ndarray:
    lo, hi = np.quantile(distances, RADII_QUANTILES)
    if not hi > 0:
        return np.zeros(0)
    lo = lo if lo > 0 else hi * 1e-2
    return np.geomspace(lo, hi, count)


def _plateau(slopes: np.ndarray, valid: np.ndarray) -> Optional[Tuple[int, int]]:
    """Longest run of >= PLATEAU_MIN radii whose slope spread is below PLATEAU_TOL."""
    best = None
    n = slopes.size
    for start in range(n):
        for stop in range(start + PLATEAU_MIN, n + 1):
            if not np.all(valid[start:stop]):
                break
            window = slopes[start:stop]
            median = float(np.median(window))
            if median <= 0 or (window.max() - window.min()) / median >= PLATEAU_TOL:
                continue
            if best is None or stop - start > best[1] - best[0]:
                best = (start, stop)
    return best


def correlation_dimension(cloud: PointCloud, radii: Optional[Sequence[float]] = None,
                          seed: int = 0) -> DimensionEstimate:
    """Grassberger-Procaccia sums with a least-squares slope on the scaling plateau."""
    if len(cloud) < 2:
        raise InsufficientDataError('correlation sums need at least two points')
    distances = np.sort(pair_distances(cloud, seed))
    radii = default_radii(distances) if radii is None else np.asarray(radii, dtype=float)
    if radii.size == 0:
        logger.info('degenerate cloud: all pair distances vanish')
        return DimensionEstimate(radii, np.zeros(0), np.zeros(0), 0.0, None, 0.0)

    correlation = np.searchsorted(distances, radii, side='left') / distances.size
    valid = correlation > 0
    log_r = np.log(radii)
    log_c = np.log(np.where(valid, correlation, 1.0))
    slopes = np.gradient(log_c, log_r) if radii.size > 1 else np.zeros(1)
    slopes = np.where(valid, slopes, np.nan)
    if radii.size > 1:
        # one-sided neighbours of an invalid radius are not slopes either
        valid = valid & np.concatenate([[True], valid[:-1]]) & np.concatenate([valid[1:], [True]])

    window = _plateau(np.nan_to_num(slopes), valid)
    if window is None:
        logger.info('no scaling plateau among %d radii', radii.size)
        return DimensionEstimate(radii, correlation, slopes, math.nan, None, math.nan)
    start, stop = window
    fit = linregress(log_r[start:stop], log_c[start:stop])
    return DimensionEstimate(radii, correlation, slopes, float(fit.slope), window,
                             float(1.96 * fit.stderr))


# -- exponential attraction -------------------------------------------------

@dataclass(frozen=True)
class AttractionFit:
    rate: float            # gamma_D
    onset: float           # t_D
    constant: float        # C_D
    flagged: bool
    times: np.ndarray
    distances: np.ndarray


def bundle_histories(problem: Problem, m: int, spread: float, seed: int = 0) -> List[InitialHistory]:
    """m perturbations of the initial history at W-distance spread."""
    rng = seeded_rng(seed)
    bundle = []
    for _ in range(m):
        psi = random_history(problem.basis, rng)
        scale = psi.w_norm(problem.basis, problem.horizon)
        bundle.append(problem.initial.plus(psi.scaled(spread / scale)))
    return bundle


def fit_attraction(times: np.ndarray, distances: np.ndarray, floor: float = 1e-11) -> AttractionFit:
    """Fit D(t) ~ C_D exp(-gamma_D (t - t_D)) from the peak of the first half down to the floor."""
    if distances.size < 4 or np.max(distances) <= 0:
        return AttractionFit(math.nan, 0.0, 0.0, True, times, distances)
    half = max(2, distances.size // 2)
    onset = int(np.argmax(distances[:half]))
    peak = distances[onset]
    below = np.flatnonzero(distances[onset:] < floor * peak)
    stop = onset + (int(below[0]) if below.size else distances.size - onset)
    if stop - onset < 4:
        return AttractionFit(math.nan, float(times[onset]), float(peak), True, times, distances)
    fit = linregress(times[onset:stop] - times[onset], np.log(distances[onset:stop]))
    rate = -float(fit.slope)
    return AttractionFit(rate, float(times[onset]), float(np.exp(fit.intercept)),
                         not rate > 0, times, distances)


def attraction_rate(problem: Problem, stepper: StepperConfig, m: int = 4, spread: float = 1e-3,
                    seed: int = 0, workers: int = 1) -> AttractionFit:
    """Reference plus m perturbed trajectories; max energy distance fitted to an exponential."""
    if m < 4:
        raise PreconditionError('attraction bundles need at least four members')
    if spread == 0:
        times = np.arange(stepper.steps + 1) * stepper.dt
        return AttractionFit(math.nan, 0.0, 0.0, True, times, np.zeros_like(times))
    bundle = bundle_histories(problem, m, spread, seed)
    tasks = [(problem, stepper)] + [(problem.with_initial(h), stepper) for h in bundle]
    reference, *members = run_all(simulate_task, tasks, workers)
    rows = min(len(t) for t in [reference] + members)
    distances = np.zeros(rows)
    for member in members:
        gap = energy_norms(problem.basis, member.u[:rows] - reference.u[:rows],
                           member.v[:rows] - reference.v[:rows])
        distances = np.maximum(distances, gap)
    result = fit_attraction(reference.times[:rows], distances)
    if result.flagged:
        logger.warning('attraction bundle does not decay (spread=%g)', spread)
    return result
