"""
Measured counterparts of the energy equality, the Lyapunov functional,
dissipativity, quasi-stability, Lipschitz dependence and the equation
residual. Every function here reads completed traces only.

All time integrals are trapezoid sums on the step grid.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from processing.delay import HistorySegment, InitialHistory, SegmentHistory, eval_M
from processing.errors import ConfigurationError, PreconditionError
from processing.integrator import (STATUS_CONTRACT, Problem, StepperConfig, Trace, simulate,
                                   simulate_task)
from processing.nonlinearity import eval_F
from processing.spectral import SpectralBasis, norm_alpha
from processing.sweep import run_all

logger = logging.getLogger(__name__)

DRIVER_DELTA = 0.25
TAIL_FRACTION = 0.25
DEGENERATE_LEVEL = 1e-28
FLOOR_RTOL = 1e-12


def energy_norms(basis: SpectralBasis, du: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Row-wise sqrt(||A^1/2 du||^2 + ||dv||^2) for stacked coefficient rows."""
    return np.sqrt(np.sum(basis.mu * du * du, axis=-1) + np.sum(dv * dv, axis=-1))


def trace_history(trace: Trace) -> HistorySegment:
    """Rebuild the full history segment of a trace (initial prefix included)."""
    problem = trace.problem
    history = HistorySegment(trace.dt, problem.horizon, problem.basis.size, t0=0.0,
                             prefix=problem.initial,
                             capacity=len(trace) + int(np.ceil(problem.horizon / trace.dt)) + 4)
    for u, v in zip(trace.u, trace.v):
        history.push(u, v)
    return history


def tail_history(trace: Trace) -> SegmentHistory:
    """The newest h of a completed trace as initial data for a restart."""
    dt, horizon = trace.dt, trace.problem.horizon
    count = int(np.ceil(horizon / dt - 1e-9)) + 1
    t_end = float(trace.times[-1])
    if len(trace) < count:
        return SegmentHistory(trace_history(trace), t_end)
    start = len(trace) - count
    segment = HistorySegment(dt, horizon, trace.basis.size, t0=float(trace.times[start]),
                             capacity=count + 4)
    for u, v in zip(trace.u[start:], trace.v[start:]):
        segment.push(u, v)
    return SegmentHistory(segment, t_end)


# -- energy equality --------------------------------------------------------

@dataclass(frozen=True)
class EnergyLedger:
    times: np.ndarray
    energy: np.ndarray
    cal_energy: np.ndarray
    damping: np.ndarray          # k int ||v||^2
    nonconservative: np.ndarray  # int (F*(u), v)
    delay: np.ndarray            # int (M(u_s), v)
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def energy_ledger(trace: Trace) -> EnergyLedger:
    t = trace.times
    damping = trace.problem.k_damp * cumulative_trapezoid(trace.speed_sq, t, initial=0.0)
    nonconservative = cumulative_trapezoid(trace.fstar_work, t, initial=0.0)
    delay = cumulative_trapezoid(trace.delay_work, t, initial=0.0)
    residual = trace.cal_energy + damping - trace.cal_energy[0] + nonconservative + delay
    return EnergyLedger(t, trace.energy, trace.cal_energy, damping, nonconservative, delay, residual)


def energy_residual(trace: Trace) -> Tuple[float, np.ndarray]:
    """(max |r|, r) with r(t) = calE(t) + k int|v|^2 - calE(0) + int(F*,v) + int(M,v)."""
    ledger = energy_ledger(trace)
    return ledger.max_residual, ledger.residual


# -- Lyapunov functional ----------------------------------------------------

@dataclass(frozen=True)
class LyapunovParams:
    gamma: float
    mu_l: float
    sigma: float = 0.25

    @classmethod
    def for_damping(cls, k_damp: float, sigma: float = 0.25) -> 'LyapunovParams':
        params = cls(sigma * k_damp / (4.0 + 2.0 * k_damp ** 2), k_damp / 4.0, sigma)
        if not (params.gamma * k_damp < 0.5 and params.gamma < 0.5):
            raise PreconditionError(f'sigma={sigma} violates gamma k < 1/2')
        return params


def delayed_speed_integrals(trace: Trace) -> Tuple[np.ndarray, np.ndarray]:
    """Per trace time: int_{t-h}^t |v|^2 and int_0^h int_{t-s}^t |v|^2 dxi ds."""
    h = trace.problem.horizon
    times = np.concatenate([trace.pre_times, trace.times])
    speed = np.concatenate([trace.pre_speed_sq, trace.speed_sq])
    plain_cum = cumulative_trapezoid(speed, times, initial=0.0)
    moment_cum = cumulative_trapezoid(times * speed, times, initial=0.0)
    offset = trace.pre_times.size
    start = trace.times - h
    plain = plain_cum[offset:] - np.interp(start, times, plain_cum)
    moment = moment_cum[offset:] - np.interp(start, times, moment_cum)
    # int_{t-h}^t (xi - t + h) |v|^2 dxi
    weighted = moment - start * plain
    return plain, weighted


def lyapunov_series(trace: Trace, params: LyapunovParams) -> np.ndarray:
    """V~ = calE + gamma (u, v) + (mu_L / h) int_0^h int_{t-s}^t |v|^2."""
    _, weighted = delayed_speed_integrals(trace)
    return (trace.cal_energy + params.gamma * trace.cross
            + params.mu_l / trace.problem.horizon * weighted)


@dataclass(frozen=True)
class BeltReport:
    lower: float   # max(E/2 - V~)
    upper: float   # max(V~ - 2E - mu_L int |v|^2)
    c: float


def lyapunov_belt(trace: Trace, params: LyapunovParams) -> BeltReport:
    """Smallest c with E/2 - c <= V~ <= 2E + mu_L int_0^h |v(t-xi)|^2 + c along the trace."""
    plain, _ = delayed_speed_integrals(trace)
    series = lyapunov_series(trace, params)
    lower = float(np.max(0.5 * trace.energy - series))
    upper = float(np.max(series - 2.0 * trace.energy - params.mu_l * plain))
    return BeltReport(lower, upper, max(0.0, lower, upper))


# -- dissipativity ----------------------------------------------------------

@dataclass(frozen=True)
class SweepEntry:
    k_damp: float
    horizon: float
    radius: float
    status: str


def tail_radius(trace: Trace, tail_fraction: float = TAIL_FRACTION) -> float:
    """sup over the final tail of sqrt(2 E); infinite for incomplete traces."""
    if not trace.completed:
        return math.inf
    start = int(np.floor((1.0 - tail_fraction) * (len(trace) - 1)))
    return float(np.sqrt(2.0 * np.max(np.maximum(trace.energy[start:], 0.0))))


def _sweep_cell(task: Tuple[Problem, StepperConfig, float, float, float]) -> SweepEntry:
    """One (k, h) cell; a cell the delay contract rejects is an infinite entry."""
    problem, stepper, k_damp, horizon, tail_fraction = task
    try:
        trace = simulate(problem.with_damping(k_damp).with_horizon(horizon), stepper)
    except ConfigurationError as exc:
        logger.warning('dissipativity k=%g h=%g rejected: %s', k_damp, horizon, exc)
        return SweepEntry(k_damp, horizon, math.inf, STATUS_CONTRACT)
    return SweepEntry(k_damp, horizon, tail_radius(trace, tail_fraction), trace.status)


def dissipativity_sweep(problem: Problem, stepper: StepperConfig, k_list: Sequence[float],
                        h_list: Sequence[float], t_long: Optional[float] = None,
                        tail_fraction: float = TAIL_FRACTION, workers: int = 1) -> List[SweepEntry]:
    """Tail radii R(k, h); rows ordered by h then k."""
    long_stepper = stepper if t_long is None else StepperConfig(
        stepper.dt, t_long, stepper.stride, stepper.snapshot_stride, stepper.traced_modes)
    tasks = [(problem, long_stepper, float(k), float(h), tail_fraction) for h in h_list for k in k_list]
    entries = run_all(_sweep_cell, tasks, workers)
    for entry in entries:
        logger.debug('dissipativity k=%g h=%g R=%g (%s)', entry.k_damp, entry.horizon,
                     entry.radius, entry.status)
    return entries


def radius_spread(entries: Sequence[SweepEntry]) -> float:
    """max R / min R over the sweep."""
    radii = np.array([e.radius for e in entries])
    if radii.size == 0:
        return 1.0
    if not np.all(np.isfinite(radii)):
        return math.inf
    if np.min(radii) <= 0:
        return 1.0 if np.max(radii) <= 0 else math.inf
    return float(np.max(radii) / np.min(radii))


# -- quasi-stability --------------------------------------------------------

@dataclass(frozen=True)
class QuasiStabilityFit:
    rate: float          # lambda~
    c1: float
    floor: float         # mean tail excess over the fitted envelope
    driver: float        # max ||A^(1/2 - delta)(u1 - u2)||
    c2: float            # fitted before the tail, so the tail is held out
    fit_residual: float
    degenerate: bool
    delta: float = DRIVER_DELTA
    floor_limit: float = math.inf

    @property
    def floor_bounded(self) -> bool:
        if self.degenerate:
            return True
        return math.isfinite(self.c2) and self.floor <= self.floor_limit


def separation(first: Trace, second: Trace, delta: float = DRIVER_DELTA) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, d, driver) with d = |v1 - v2|^2 + |A^1/2 (u1 - u2)|^2."""
    rows = min(len(first), len(second))
    du = first.u[:rows] - second.u[:rows]
    dv = first.v[:rows] - second.v[:rows]
    basis = first.basis
    d = np.sum(basis.mu * du * du, axis=1) + np.sum(dv * dv, axis=1)
    driver = np.sqrt(np.sum(basis.mu ** (1.0 - 2.0 * delta) * du * du, axis=1))
    return first.times[:rows], d, driver


def fit_quasi_stability(times: np.ndarray, d: np.ndarray, driver: np.ndarray,
                        window_fraction: float = 0.5, delta: float = DRIVER_DELTA) -> QuasiStabilityFit:
    """Least-squares fit of log d against -lambda~ t on the initial window."""
    if d.size < 4 or np.max(d) < DEGENERATE_LEVEL:
        return QuasiStabilityFit(math.nan, math.nan, 0.0, float(np.max(driver, initial=0.0)),
                                 math.nan, math.nan, True, delta)
    end = max(4, int(window_fraction * d.size))
    keep = d[:end] > DEGENERATE_LEVEL
    slope, intercept = np.polyfit(times[:end][keep], np.log(d[:end][keep]), 1)
    fitted = intercept + slope * times[:end][keep]
    fit_residual = float(np.sqrt(np.mean((np.log(d[:end][keep]) - fitted) ** 2)))
    rate = -float(slope)
    c1 = float(np.exp(intercept) / d[0]) if d[0] > 0 else math.inf

    running = np.maximum.accumulate(driver)
    envelope = np.exp(intercept + slope * times)
    excess = np.maximum(d - envelope, 0.0)
    # floor: what the exponential envelope leaves unexplained at late times
    tail = int(np.floor((1.0 - TAIL_FRACTION) * (d.size - 1)))
    floor = float(np.mean(excess[tail:]))
    positive = running[:tail] > 0
    if np.any(positive):
        c2 = float(np.max(excess[:tail][positive] / running[:tail][positive] ** 2))
    else:
        c2 = math.inf
    # round-off allowance
    limit = c2 * running[-1] ** 2 + FLOOR_RTOL * float(np.max(d))
    return QuasiStabilityFit(rate, c1, floor, float(running[-1]), c2, fit_residual, False, delta,
                             limit)


def quasi_stability_pairs(problem: Problem, stepper: StepperConfig,
                          pairs: Sequence[Tuple[InitialHistory, InitialHistory]],
                          delta: float = DRIVER_DELTA, window_fraction: float = 0.5,
                          workers: int = 1) -> List[QuasiStabilityFit]:
    """One fit per (phi1, phi2) pair; all runs share one worker pool."""
    tasks = [(problem.with_initial(h), stepper) for pair in pairs for h in pair]
    traces = run_all(simulate_task, tasks, workers)
    fits = []
    for first, second in zip(traces[::2], traces[1::2]):
        if not (first.completed and second.completed):
            raise PreconditionError('quasi-stability pair left the absorbing set '
                                    f'({first.status}, {second.status})')
        times, d, driver = separation(first, second, delta)
        fits.append(fit_quasi_stability(times, d, driver, window_fraction, delta))
    return fits


def quasi_stability_fit(problem: Problem, stepper: StepperConfig, first: InitialHistory,
                        second: InitialHistory, delta: float = DRIVER_DELTA,
                        window_fraction: float = 0.5, workers: int = 1) -> QuasiStabilityFit:
    return quasi_stability_pairs(problem, stepper, [(first, second)], delta, window_fraction,
                                 workers)[0]


# -- Lipschitz dependence ---------------------------------------------------

@dataclass(frozen=True)
class LipschitzReport:
    eps: Tuple[float, ...]
    ratios: Tuple[float, ...]

    @property
    def spread(self) -> float:
        return max(self.ratios) / min(self.ratios) if min(self.ratios) > 0 else math.inf


def lipschitz_ratio(problem: Problem, stepper: StepperConfig, psi: InitialHistory,
                    eps_list: Sequence[float], workers: int = 1) -> LipschitzReport:
    """sup_t |S_t(phi + eps psi) - S_t(phi)| / |eps psi|_W for each eps."""
    scale = psi.w_norm(problem.basis, problem.horizon)
    if scale == 0:
        raise PreconditionError('perturbation psi has zero W-norm')
    if any(eps <= 0 for eps in eps_list):
        raise PreconditionError('eps must be positive')
    tasks = [(problem, stepper)] + [
        (problem.with_initial(problem.initial.plus(psi.scaled(eps))), stepper) for eps in eps_list]
    reference, *perturbed = run_all(simulate_task, tasks, workers)
    ratios = []
    for eps, trace in zip(eps_list, perturbed):
        rows = min(len(reference), len(trace))
        gap = energy_norms(problem.basis, trace.u[:rows] - reference.u[:rows],
                           trace.v[:rows] - reference.v[:rows])
        ratios.append(float(np.max(gap)) / (eps * scale))
    return LipschitzReport(tuple(float(e) for e in eps_list), tuple(ratios))


# -- regularity -------------------------------------------------------------

def equation_residual(trace: Trace, t: float, history: Optional[HistorySegment] = None) -> float:
    """||(v(t+dt) - v(t-dt)) / 2dt + k v + A u + F(u) + M(u_t)|| at an interior time."""
    problem = trace.problem
    dt = trace.dt
    if t < problem.horizon + 2.0 * dt - 1e-9 * dt:
        raise PreconditionError(f't={t} must be at least h + 2 dt')
    i = trace.index_of(t)
    if i + 1 >= len(trace):
        raise PreconditionError(f't={t} needs a trace sample after it')
    history = history or trace_history(trace)
    basis = problem.basis
    u, v = trace.u[i], trace.v[i]
    acceleration = (trace.v[i + 1] - trace.v[i - 1]) / (2.0 * dt)
    value = acceleration + problem.k_damp * v + basis.mu * u + eval_F(problem.nonlinearity, basis, u)
    if problem.delay.terms:
        value = value + eval_M(problem.delay, basis, history, t)
    return norm_alpha(basis, value, 0.0)


def compatibility_residual(trace: Trace, t: float) -> float:
    """||(u(t+dt) - u(t-dt)) / 2dt - v(t)|| in D(A^1/2): the trace keeps u' = v."""
    i = trace.index_of(t)
    if i < 1 or i + 1 >= len(trace):
        raise PreconditionError(f't={t} needs trace samples on both sides')
    derivative = (trace.u[i + 1] - trace.u[i - 1]) / (2.0 * trace.dt)
    return norm_alpha(trace.basis, derivative - trace.v[i], 0.5)


def sup_tail_A_norm(trace: Trace, tail_fraction: float = TAIL_FRACTION) -> float:
    """sup over the tail of ||A u(t)||."""
    start = int(np.floor((1.0 - tail_fraction) * (len(trace) - 1)))
    mu = trace.basis.mu
    return float(np.max(np.sqrt(np.sum((mu * trace.u[start:]) ** 2, axis=1))))


# -- convergence ------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    dts: Tuple[float, ...]
    gaps: Tuple[float, ...]

    @property
    def ratios(self) -> Tuple[float, ...]:
        return tuple(a / b if b > 0 else math.inf for a, b in zip(self.gaps, self.gaps[1:]))

    @property
    def orders(self) -> Tuple[float, ...]:
        return tuple(math.log2(r) if 0 < r < math.inf else math.nan for r in self.ratios)


def trace_gap(basis: SpectralBasis, coarse, fine) -> float:
    """L-infinity energy-norm gap on the coarse grid; fine.dt must divide coarse.dt."""
    factor = int(round(coarse.dt / fine.dt))
    if factor < 1 or abs(factor * fine.dt - coarse.dt) > 1e-9 * coarse.dt:
        raise PreconditionError('step sizes are not nested')
    rows = min(coarse.u.shape[0], (fine.u.shape[0] - 1) // factor + 1)
    du = coarse.u[:rows] - fine.u[::factor][:rows]
    dv = coarse.v[:rows] - fine.v[::factor][:rows]
    return float(np.max(energy_norms(basis, du, dv)))


def self_convergence(problem: Problem, stepper: StepperConfig, levels: int = 3,
                     workers: int = 1) -> Tuple[ConvergenceReport, List[Trace]]:
    """Richardson self-differences between dt, dt/2, ..., dt/2^(levels-1)."""
    if levels < 3:
        raise PreconditionError('self-convergence needs at least three levels')
    steppers = [stepper]
    for _ in range(levels - 1):
        steppers.append(steppers[-1].refined())
    traces = run_all(simulate_task, [(problem, s) for s in steppers], workers)
    gaps = tuple(trace_gap(problem.basis, a, b) for a, b in zip(traces, traces[1:]))
    return ConvergenceReport(tuple(s.dt for s in steppers[:-1]), gaps), traces


def reference_convergence(problem: Problem, dts: Sequence[float], t_end: float, reference,
                          workers: int = 1) -> Tuple[ConvergenceReport, List[Trace]]:
    """Gaps of integrator runs at each dt against a fine reference solution."""
    tasks = [(problem, StepperConfig(dt, t_end)) for dt in dts]
    traces = run_all(simulate_task, tasks, workers)
    gaps = tuple(trace_gap(problem.basis, trace, reference) for trace in traces)
    return ConvergenceReport(tuple(float(dt) for dt in dts), gaps), traces
