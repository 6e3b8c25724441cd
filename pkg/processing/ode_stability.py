"""
Rightmost characteristic roots of u'' + k u' + a u + u(t - tau) = 0,

    Delta(lambda) = lambda^2 + k lambda + a + exp(-lambda tau).

Seeds come from Chebyshev collocation of the solution-operator generator on
[-tau, 0]; every seed is polished by Newton on Delta. Root signs are
cross-checked against one-mode integrator runs.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from processing.delay import (ConstantLaw, DelaySpec, DelayTerm, InitialHistory, LinearResponse,
                              ModeFamily)
from processing.errors import ConfigurationError, PreconditionError, RootFindingError
from processing.integrator import Problem, StepperConfig, Trace, simulate_task
from processing.nonlinearity import make_nonlinearity
from processing.spectral import build_basis
from processing.sweep import run_all, seeded_rng

logger = logging.getLogger(__name__)

NEWTON_MAXITER = 50
NEWTON_TOL = 1e-13
ACCEPT_RESIDUAL = 1e-10
COLLOCATION_CAP = 1024
SEEDS = 8


@dataclass(frozen=True)
class ScalarDDE:
    k: float
    a: float
    tau: float = 0.0

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigurationError('tau must be non-negative')
        if self.k < 0:
            raise ConfigurationError('k must be non-negative')

    def at(self, tau: float) -> 'ScalarDDE':
        return ScalarDDE(self.k, self.a, tau)


@dataclass(frozen=True)
class RootReport:
    root: complex
    residual: float
    m: int          # collocation size (0 for the tau = 0 quadratic)
    tau: float

    @property
    def stable(self) -> bool:
        return self.root.real < 0


def char_residual(dde: ScalarDDE, lam: complex) -> complex:
    return lam * lam + dde.k * lam + dde.a + np.exp(-lam * dde.tau)


def char_derivative(dde: ScalarDDE, lam: complex) -> complex:
    return 2.0 * lam + dde.k - dde.tau * np.exp(-lam * dde.tau)


def cheb(m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Chebyshev points x_j = cos(j pi / m) and the differentiation matrix."""
    if m == 0:
        return np.zeros((1, 1)), np.array([1.0])
    x = np.cos(np.pi * np.arange(m + 1) / m)
    c = np.hstack([2.0, np.ones(m - 1), 2.0]) * (-1.0) ** np.arange(m + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(m + 1))
    d -= np.diag(np.sum(d, axis=1))
    return d, x


def collocation_matrix(dde: ScalarDDE, m: int) -> np.ndarray:
    """Generator of x' = A0 x(t) + A1 x(t - tau) on m + 1 nodes; node 0 is theta = 0."""
    d, _ = cheb(m)
    d_theta = (2.0 / dde.tau) * d
    generator = np.kron(d_theta, np.eye(2))
    generator[:2, :] = 0.0
    generator[:2, :2] = [[0.0, 1.0], [-dde.a, -dde.k]]
    generator[1, 2 * m] += -1.0
    return generator


def newton(dde: ScalarDDE, seed: complex, maxiter: int = NEWTON_MAXITER) -> Tuple[complex, float]:
    lam = complex(seed)
    with np.errstate(over='ignore', invalid='ignore'):
        return _newton(dde, lam, seed, maxiter)


def _newton(dde: ScalarDDE, lam: complex, seed: complex, maxiter: int) -> Tuple[complex, float]:
    residual = abs(char_residual(dde, lam))
    for _ in range(maxiter):
        value = char_residual(dde, lam)
        slope = char_derivative(dde, lam)
        if slope == 0:
            break
        step = value / slope
        lam -= step
        residual = abs(char_residual(dde, lam))
        if abs(step) <= NEWTON_TOL * max(1.0, abs(lam)) and residual <= ACCEPT_RESIDUAL:
            return lam, residual
    if residual <= ACCEPT_RESIDUAL:
        return lam, residual
    raise RootFindingError(seed, maxiter, residual)


def _quadratic(dde: ScalarDDE) -> RootReport:
    roots = np.roots([1.0, dde.k, dde.a + 1.0])
    lam = complex(max(roots, key=lambda r: (r.real, abs(r.imag))))
    lam = complex(lam.real, abs(lam.imag))
    return RootReport(lam, abs(char_residual(dde, lam)), 0, 0.0)


def _refined_rightmost(dde: ScalarDDE, m: int) -> complex:
    eigenvalues = linalg.eigvals(collocation_matrix(dde, m))
    eigenvalues = eigenvalues[np.isfinite(eigenvalues)]
    seeds = eigenvalues[np.argsort(-eigenvalues.real)][:SEEDS]
    roots = []
    failure = None
    for seed in seeds:
        try:
            roots.append(newton(dde, seed)[0])
        except RootFindingError as exc:
            failure = exc
    if not roots:
        raise failure or RootFindingError(complex('nan'), 0, math.inf)
    best = max(roots, key=lambda r: r.real)
    return complex(best.real, abs(best.imag))


def rightmost_root(dde: ScalarDDE, m: int = 16) -> RootReport:
    """Rightmost root, accepted once doubling m moves Re(lambda) by < 1e-8."""
    if m < 16:
        raise PreconditionError('collocation size must be at least 16')
    if dde.tau == 0:
        return _quadratic(dde)
    m = max(m, 16 + int(math.ceil(2.0 * dde.tau)))
    previous = _refined_rightmost(dde, m)
    while True:
        if 2 * m > COLLOCATION_CAP:
            logger.warning('collocation cap reached at tau=%g', dde.tau)
            break
        m *= 2
        current = _refined_rightmost(dde, m)
        if abs(current.real - previous.real) < 1e-8:
            previous = current
            break
        previous = current
    return RootReport(previous, abs(char_residual(dde, previous)), m, dde.tau)


def stability_scan(k: float, a: float, taus: Sequence[float], m: int = 16) -> List[RootReport]:
    """Rightmost root per tau on a sorted grid."""
    taus = [float(t) for t in taus]
    if any(b < a_ for a_, b in zip(taus, taus[1:])):
        raise PreconditionError('tau grid must be sorted')
    return [rightmost_root(ScalarDDE(k, a, tau), m) for tau in taus]


@dataclass(frozen=True)
class Crossing:
    omega: float
    tau0: float          # smallest delay with a root at i omega
    direction: float     # sign of d Re(lambda) / d tau there

    def taus(self, count: int) -> List[float]:
        return [self.tau0 + 2.0 * math.pi * n / self.omega for n in range(count)]


def crossing_frequencies(k: float, a: float) -> List[Crossing]:
    """Imaginary-axis crossings: (omega^2 - a)^2 + k^2 omega^2 = 1."""
    z = np.roots([1.0, k * k - 2.0 * a, a * a - 1.0])
    crossings = []
    for value in sorted(z.real[(np.abs(z.imag) < 1e-12) & (z.real > 0)], reverse=True):
        omega = math.sqrt(value)
        theta = math.atan2(k * omega, omega * omega - a) % (2.0 * math.pi)
        tau0 = theta / omega
        lam = 1j * omega
        dde = ScalarDDE(k, a, tau0)
        drift = lam * np.exp(-lam * tau0) / char_derivative(dde, lam)
        crossings.append(Crossing(omega, tau0, float(np.sign(drift.real))))
    return crossings


@dataclass(frozen=True)
class TauStar:
    found: bool
    tau: float = math.nan
    omega: float = math.nan
    residual: float = math.nan
    message: str = ''


def _solve_crossing(k: float, a: float, omega: float, tau: float) -> Tuple[float, float, float]:
    """Newton on Delta(i omega; tau) = 0 in the unknowns (omega, tau)."""
    for _ in range(NEWTON_MAXITER):
        c, s = math.cos(omega * tau), math.sin(omega * tau)
        f = np.array([a - omega * omega + c, k * omega - s])
        if np.max(np.abs(f)) < 1e-15:
            break
        jacobian = np.array([[-2.0 * omega - tau * s, -omega * s],
                             [k - tau * c, -omega * c]])
        step = np.linalg.solve(jacobian, f)
        omega -= step[0]
        tau -= step[1]
    residual = abs(char_residual(ScalarDDE(k, a, max(tau, 0.0)), 1j * omega))
    return omega, tau, residual


def find_tau_star(k: float, a: float, tau_max: float = 50.0, step: float = 0.5,
                  m: int = 16) -> TauStar:
    """First stable-to-unstable switch of the rightmost root on [0, tau_max]."""
    grid = np.arange(0.0, tau_max + 0.5 * step, step)
    previous = rightmost_root(ScalarDDE(k, a, float(grid[0])), m).root.real
    for lo, hi in zip(grid, grid[1:]):
        current = rightmost_root(ScalarDDE(k, a, float(hi)), m).root.real
        if previous < 0 <= current:
            break
        previous = current
    else:
        return TauStar(False, message=f'no switch found on [0, {tau_max:g}]')

    lo, hi = float(lo), float(hi)
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        if rightmost_root(ScalarDDE(k, a, mid), m).root.real < 0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    omega = abs(rightmost_root(ScalarDDE(k, a, tau), m).root.imag)
    omega, tau, residual = _solve_crossing(k, a, omega, tau)
    logger.info('tau_star k=%g a=%g: tau=%.12g omega=%.12g', k, a, tau, omega)
    return TauStar(True, tau, abs(omega), residual)


# -- time-domain cross-check ------------------------------------------------

def scalar_problem(dde: ScalarDDE) -> Problem:
    """The scalar equation as a one-mode integrator problem with u = 1 on [-tau, 0]."""
    if not dde.a > 0:
        raise PreconditionError('the time-domain check needs a > 0')
    basis = build_basis('ode', 1, 1, [dde.a])
    horizon = dde.tau if dde.tau > 0 else 1.0
    delay = DelaySpec(horizon, (DelayTerm(LinearResponse(1.0), ConstantLaw(dde.tau)),))
    initial = InitialHistory(1, (ModeFamily(0, a=1.0),))
    return Problem(basis, dde.k, make_nonlinearity(basis), delay, initial)


def grows(trace: Trace) -> bool:
    """Blew up, or ended with a larger energy norm than it started with."""
    if not trace.completed:
        return True
    first, last = trace.state(0), trace.state(len(trace) - 1)
    return last.energy_norm(trace.basis) > first.energy_norm(trace.basis)


@dataclass(frozen=True)
class CrossCheck:
    dde: ScalarDDE
    root: complex
    grows: bool

    @property
    def agrees(self) -> bool:
        return self.grows == (self.root.real > 0)


def sample_cases(count: int, rng: np.random.Generator, margin: float, m: int = 16,
                 k_range=(0.1, 2.0), a_range=(0.5, 3.0),
                 tau_range=(0.1, 6.0)) -> List[Tuple[ScalarDDE, RootReport]]:
    """Random (k, a, tau) whose rightmost root lies at least margin off the imaginary axis."""
    picked = []
    for _ in range(50 * max(count, 1)):
        if len(picked) == count:
            break
        dde = ScalarDDE(float(rng.uniform(*k_range)), float(rng.uniform(*a_range)),
                        float(rng.uniform(*tau_range)))
        report = rightmost_root(dde, m)
        if abs(report.root.real) >= margin:
            picked.append((dde, report))
    return picked


def time_domain_cross_check(count: int, seed: int = 0, margin: float = 0.05, t_end: float = 100.0,
                            dt: float = 0.02, m: int = 16, workers: int = 1) -> List[CrossCheck]:
    """Compare root signs with the growth of simulated trajectories."""
    picked = sample_cases(count, seeded_rng(seed), margin, m)
    stepper = StepperConfig(dt, t_end)
    traces = run_all(simulate_task, [(scalar_problem(dde), stepper) for dde, _ in picked], workers)
    checks = [CrossCheck(dde, report.root, grows(trace))
              for (dde, report), trace in zip(picked, traces)]
    logger.info('time-domain cross-check: %d of %d agree',
                sum(check.agrees for check in checks), len(checks))
    return checks
