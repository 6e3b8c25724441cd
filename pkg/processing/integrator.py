"""
Exponential time differencing (ETD2RK) for U' = B U + (0; n(t)),
B = [[0, 1], [-mu_k, -k]] per mode, n = -F(u(t)) - M(u_t).

The 2x2 propagators are exact, so the linear part carries no step-size
restriction; the scheme is the variation-of-constants formula with the
forcing interpolated linearly over each step.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from processing.delay import DelaySpec, HistorySegment, InitialHistory, eval_delay
from processing.errors import BlowUpError, ConfigurationError, ContractViolationError
from processing.nonlinearity import NonlinearitySpec, eval_F, eval_Fstar, eval_potentials
from processing.spectral import ModeVector, PhasePoint, SpectralBasis, norm_alpha

logger = logging.getLogger(__name__)

CRITICAL_TOL = 1e-8
SERIES_THRESHOLD = 0.2
SERIES_TERMS = 20

STATUS_COMPLETED = 'completed'
STATUS_BLOW_UP = 'blow-up'
STATUS_CONTRACT = 'contract-violation'


@dataclass(frozen=True)
class ModePropagator:
    """Per-mode E = exp(B dt), phi1 = B^-1 (E - I), phi2 = B^-2 (E - I - B dt); shape (m, 2, 2)."""

    e: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    dt: float


def _generator(mu: np.ndarray, k_damp: float) -> np.ndarray:
    b = np.zeros(mu.shape + (2, 2))
    b[..., 0, 1] = 1.0
    b[..., 1, 0] = -mu
    b[..., 1, 1] = -k_damp
    return b


def _exponential(mu: np.ndarray, k_damp: float, dt: float) -> np.ndarray:
    alpha = -0.5 * k_damp
    gap = mu - 0.25 * k_damp ** 2
    critical = np.abs(k_damp ** 2 - 4.0 * mu) <= CRITICAL_TOL * 4.0 * mu
    under = (gap > 0) & ~critical
    over = (gap < 0) & ~critical

    c = np.ones_like(mu)
    s = np.full_like(mu, dt)
    omega = np.sqrt(np.where(under, gap, 1.0))
    nu = np.sqrt(np.where(over, -gap, 1.0))
    c = np.where(under, np.cos(omega * dt), c)
    s = np.where(under, np.sin(omega * dt) / omega, s)
    c = np.where(over, np.cosh(nu * dt), c)
    s = np.where(over, np.sinh(nu * dt) / nu, s)

    scale = np.exp(alpha * dt)
    e = np.empty(mu.shape + (2, 2))
    e[..., 0, 0] = scale * (c - alpha * s)
    e[..., 0, 1] = scale * s
    e[..., 1, 0] = -scale * mu * s
    e[..., 1, 1] = scale * (c + alpha * s)
    return e


def mode_propagator(mu, k_damp: float, dt: float) -> ModePropagator:
    """Closed-form propagators; small |B dt| uses the Taylor series of phi1/phi2."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if np.any(mu <= 0) or dt <= 0:
        raise ValueError('mu must be positive and dt positive')
    e = _exponential(mu, k_damp, dt)
    b = _generator(mu, k_damp)
    eye = np.broadcast_to(np.eye(2), b.shape)

    inv = np.zeros_like(b)
    inv[..., 0, 0] = -k_damp / mu
    inv[..., 0, 1] = -1.0 / mu
    inv[..., 1, 0] = 1.0
    phi1 = inv @ (e - eye)
    phi2 = inv @ (phi1 - dt * eye)

    small = np.maximum(np.sqrt(mu), k_damp) * dt < SERIES_THRESHOLD
    if np.any(small):
        bdt = b[small] * dt
        power = np.broadcast_to(np.eye(2), bdt.shape).copy()
        series1 = np.zeros_like(bdt)
        series2 = np.zeros_like(bdt)
        factorial = 1.0
        for j in range(SERIES_TERMS):
            series1 += power / (factorial * (j + 1))
            series2 += power / (factorial * (j + 1) * (j + 2))
            power = power @ bdt
            factorial *= j + 1
        phi1[small] = dt * series1
        phi2[small] = dt * dt * series2
    return ModePropagator(e, phi1, phi2, float(dt))


# -- problem / trace --------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """u'' + k u' + A u + F(u) + M(u_t) = 0 with analytic initial history."""

    basis: SpectralBasis
    k_damp: float
    nonlinearity: NonlinearitySpec
    delay: DelaySpec
    initial: InitialHistory

    @property
    def horizon(self) -> float:
        return self.delay.horizon

    def with_initial(self, initial: InitialHistory) -> 'Problem':
        return Problem(self.basis, self.k_damp, self.nonlinearity, self.delay, initial)

    def with_damping(self, k_damp: float) -> 'Problem':
        return Problem(self.basis, k_damp, self.nonlinearity, self.delay, self.initial)

    def with_horizon(self, horizon: float) -> 'Problem':
        return Problem(self.basis, self.k_damp, self.nonlinearity,
                       self.delay.with_horizon(horizon), self.initial)


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    stride: int = 1
    snapshot_stride: int = 0
    traced_modes: Tuple[int, ...] = ()
    scheme: str = 'ETD2RK'

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigurationError('dt and t_end must be positive')
        if self.stride < 1 or self.snapshot_stride < 0:
            raise ConfigurationError('stride must be >= 1 and snapshot_stride >= 0')
        if self.scheme != 'ETD2RK':
            raise ConfigurationError(f"unsupported scheme '{self.scheme}'")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def refined(self, factor: int = 2) -> 'StepperConfig':
        """Same run with dt / factor and strides scaled to keep output times."""
        return StepperConfig(self.dt / factor, self.t_end, self.stride * factor,
                             self.snapshot_stride * factor, self.traced_modes, self.scheme)


@dataclass
class Trace:
    """Every step's state plus the ledger samples the diagnostics integrate."""

    problem: Problem = field(repr=False)
    stepper: StepperConfig
    times: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    taus: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    cal_energy: np.ndarray = field(repr=False)
    norm_m: np.ndarray = field(repr=False)
    speed_sq: np.ndarray = field(repr=False)
    fstar_work: np.ndarray = field(repr=False)
    delay_work: np.ndarray = field(repr=False)
    cross: np.ndarray = field(repr=False)
    pre_times: np.ndarray = field(repr=False)
    pre_speed_sq: np.ndarray = field(repr=False)
    status: str = STATUS_COMPLETED
    status_time: Optional[float] = None
    message: str = ''
    config_echo: Dict = field(default_factory=dict, repr=False)

    @property
    def completed(self) -> bool:
        return self.status == STATUS_COMPLETED

    @property
    def dt(self) -> float:
        return self.stepper.dt

    @property
    def basis(self) -> SpectralBasis:
        return self.problem.basis

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def index_of(self, t: float) -> int:
        i = int(round(t / self.dt))
        if i < 0 or i >= len(self) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f't={t} is not a trace time')
        return i

    def state(self, i: int) -> PhasePoint:
        return PhasePoint(self.u[i].copy(), self.v[i].copy())


@dataclass(frozen=True)
class Forcing:
    rhs: ModeVector
    force: ModeVector
    delay: ModeVector
    taus: List[float]


def evaluate_forcing(problem: Problem, history: HistorySegment, t: float, u: ModeVector) -> Forcing:
    force = eval_F(problem.nonlinearity, problem.basis, u)
    if problem.delay.terms:
        delay, taus = eval_delay(problem.delay, problem.basis, history, t)
    else:
        delay, taus = problem.basis.zeros(), []
    return Forcing(-force - delay, force, delay, taus)


def nonlinear_rhs(basis: SpectralBasis, nonlinearity: NonlinearitySpec, delay: DelaySpec,
                  history: HistorySegment, t: float) -> ModeVector:
    """-F(u(t)) - M(u_t), the forcing of the velocity slot."""
    problem = Problem(basis, 0.0, nonlinearity, delay, InitialHistory(basis.size))
    return evaluate_forcing(problem, history, t, history.interpolate(t).u).rhs


def step_etd2rk(problem: Problem, propagator: ModePropagator, history: HistorySegment,
                state: PhasePoint, t: float, n_now: ModeVector) -> Tuple[PhasePoint, Forcing]:
    """One predictor-corrector step; the history gains the node t + dt.

    The returned forcing is evaluated at the accepted state, so it is both
    the next step's N(t) and the ledger sample of the new node.
    """
    dt = propagator.dt
    e, p1, p2 = propagator.e, propagator.phi1, propagator.phi2
    u, v = state.u, state.v
    u_pred = e[:, 0, 0] * u + e[:, 0, 1] * v + p1[:, 0, 1] * n_now
    v_pred = e[:, 1, 0] * u + e[:, 1, 1] * v + p1[:, 1, 1] * n_now
    history.push(u_pred, v_pred)
    predicted = evaluate_forcing(problem, history, t + dt, u_pred)
    slope = (predicted.rhs - n_now) / dt
    u_new = u_pred + p2[:, 0, 1] * slope
    v_new = v_pred + p2[:, 1, 1] * slope
    history.replace_last(u_new, v_new)
    return PhasePoint(u_new, v_new), evaluate_forcing(problem, history, t + dt, u_new)


def simulate(problem: Problem, stepper: StepperConfig, config_echo: Optional[Dict] = None) -> Trace:
    """Uniform-step run on [0, t_end]; blow-up and contract violations end the trace early."""
    basis = problem.basis
    dt = stepper.dt
    horizon = problem.horizon
    if problem.delay.state_dependent and dt > horizon / 4.0:
        raise ConfigurationError(f'dt={dt} exceeds h/4={horizon / 4.0} for a state-dependent delay')

    steps = stepper.steps
    size = basis.size
    n_terms = len(problem.delay.terms)
    propagator = mode_propagator(basis.mu, problem.k_damp, dt)
    history = HistorySegment(dt, horizon, size, t0=0.0, prefix=problem.initial)

    times = np.arange(steps + 1) * dt
    u_all = np.zeros((steps + 1, size))
    v_all = np.zeros((steps + 1, size))
    taus = np.zeros((steps + 1, n_terms))
    ledger = np.zeros((7, steps + 1))

    n_pre = int(np.ceil(horizon / dt - 1e-9))
    pre_times = -np.arange(n_pre, 0, -1) * dt
    pre_speed_sq = np.array([float(np.dot(s.v, s.v)) for s in map(problem.initial.state, pre_times)])

    state = problem.initial.state(0.0)
    history.push(state.u, state.v)
    status, status_time, message = STATUS_COMPLETED, None, ''
    recorded = 0
    logger.debug('simulate: %d modes, %d steps, dt=%g', size, steps, dt)

    try:
        forcing = evaluate_forcing(problem, history, 0.0, state.u)
        for i in range(steps + 1):
            t = times[i]
            u_all[i], v_all[i] = state.u, state.v
            taus[i] = forcing.taus
            pi0, pi1 = eval_potentials(problem.nonlinearity, basis, state.u)
            speed = float(np.dot(state.v, state.v))
            energy = 0.5 * (speed + norm_alpha(basis, state.u, 0.5) ** 2) + pi0
            ledger[:, i] = (
                energy,
                energy + pi1,
                float(np.sqrt(np.dot(forcing.delay, forcing.delay))),
                speed,
                float(np.dot(eval_Fstar(problem.nonlinearity, basis, state.u), state.v)),
                float(np.dot(forcing.delay, state.v)),
                float(np.dot(state.u, state.v)),
            )
            recorded = i + 1
            if i == steps:
                break
            try:
                state, forcing = step_etd2rk(problem, propagator, history, state, t, forcing.rhs)
            except BlowUpError as exc:
                raise BlowUpError(t + dt, i + 1, str(exc)) from exc
            if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.v))):
                raise BlowUpError(t + dt, i + 1)
    except BlowUpError as exc:
        status, status_time, message = STATUS_BLOW_UP, exc.t, str(exc)
        logger.warning('simulation blew up: %s', exc)
    except ContractViolationError as exc:
        status, status_time, message = STATUS_CONTRACT, exc.t, str(exc)
        logger.warning('delay contract violated: %s', exc)

    logger.debug('simulate finished: status=%s, %d rows', status, recorded)
    return Trace(
        problem=problem, stepper=stepper,
        times=times[:recorded], u=u_all[:recorded], v=v_all[:recorded], taus=taus[:recorded],
        energy=ledger[0, :recorded], cal_energy=ledger[1, :recorded], norm_m=ledger[2, :recorded],
        speed_sq=ledger[3, :recorded], fstar_work=ledger[4, :recorded],
        delay_work=ledger[5, :recorded], cross=ledger[6, :recorded],
        pre_times=pre_times, pre_speed_sq=pre_speed_sq,
        status=status, status_time=status_time, message=message,
        config_echo=dict(config_echo or {}),
    )


def simulate_task(task: Tuple[Problem, StepperConfig]) -> Trace:
    """Picklable entry point for worker pools."""
    problem, stepper = task
    return simulate(problem, stepper)
