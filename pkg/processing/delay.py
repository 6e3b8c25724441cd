"""
State-dependent delay term M(u_t) = sum_i G_i(u(t - tau_i(u_t))) and the
history segment u_t that stands in for the phase space W.

tau_i = g_i(Q_i[u_t]) with Q a combination of point samples
sum c u(t - sigma, a) and averages sum c (u(t - sigma), xi).
"""
import functools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from processing.errors import ConfigurationError, ContractViolationError, HistoryUnderflowError
from processing.nonlinearity import collocation_grid, to_physical, to_spectral
from processing.spectral import ModeVector, PhasePoint, SpectralBasis, basis_functions, norm_alpha

logger = logging.getLogger(__name__)

W_GRID_POINTS = 200
NODE_TOL = 1e-9


# -- initial data -----------------------------------------------------------

@dataclass(frozen=True)
class ModeFamily:
    """a + b theta + c sin(d theta) on one mode (table position)."""

    position: int
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def value(self, theta):
        return self.a + self.b * theta + self.c * np.sin(self.d * theta)

    def derivative(self, theta):
        return self.b + self.c * self.d * np.cos(self.d * theta)


@dataclass(frozen=True)
class InitialHistory:
    """Analytic initial segment; v is the exact theta-derivative of u."""

    size: int
    families: Tuple[ModeFamily, ...] = ()

    def state(self, theta: float) -> PhasePoint:
        u = np.zeros(self.size)
        v = np.zeros(self.size)
        for family in self.families:
            u[family.position] += family.value(theta)
            v[family.position] += family.derivative(theta)
        return PhasePoint(u, v)

    def scaled(self, factor: float) -> 'InitialHistory':
        return InitialHistory(self.size, tuple(
            ModeFamily(f.position, factor * f.a, factor * f.b, factor * f.c, f.d)
            for f in self.families))

    def plus(self, other: 'InitialHistory') -> 'InitialHistory':
        if other.size != self.size:
            raise ValueError('histories live on different bases')
        return InitialHistory(self.size, self.families + other.families)

    def w_norm(self, basis: SpectralBasis, horizon: float, points: int = W_GRID_POINTS) -> float:
        """max ||A^1/2 u(theta)|| + max ||v(theta)|| over theta in [-h, 0]."""
        thetas = np.linspace(-horizon, 0.0, points + 1)
        states = [self.state(theta) for theta in thetas]
        return (max(norm_alpha(basis, s.u, 0.5) for s in states)
                + max(norm_alpha(basis, s.v, 0.0) for s in states))


def random_history(basis: SpectralBasis, rng: np.random.Generator, modes: int = 4,
                   amplitude: float = 1.0) -> InitialHistory:
    """Random smooth history on the lowest modes, coefficients decaying with mu."""
    families = []
    for position in range(min(modes, basis.size)):
        scale = amplitude / np.sqrt(basis.mu[position])
        a, b, c = scale * rng.uniform(-1.0, 1.0, size=3)
        d = rng.uniform(0.5, 10.0)
        families.append(ModeFamily(position, a, b, c, d))
    return InitialHistory(basis.size, tuple(families))


# -- history segment --------------------------------------------------------

class HistorySegment:
    """Ring buffer of uniformly spaced nodes (t_j, u_j, v_j) with C1 dense output.

    Node j sits at t0 + j dt. Times before t0 are served by the analytic
    prefix while node 0 is still retained.
    """

    def __init__(self, dt: float, horizon: float, size: int, t0: float = 0.0,
                 prefix: Optional[InitialHistory] = None, capacity: Optional[int] = None):
        if dt <= 0 or horizon <= 0:
            raise ValueError('dt and horizon must be positive')
        self.dt = float(dt)
        self.horizon = float(horizon)
        self.size = int(size)
        self.t0 = float(t0)
        self.prefix = prefix
        self._capacity = capacity or int(np.ceil(horizon / dt)) + 4
        self._u = np.zeros((self._capacity, size))
        self._v = np.zeros((self._capacity, size))
        self._count = 0

    def __len__(self) -> int:
        return min(self._count, self._capacity)

    @property
    def oldest(self) -> int:
        return max(0, self._count - self._capacity)

    @property
    def last(self) -> int:
        return self._count - 1

    @property
    def t_now(self) -> float:
        return self.node_time(self.last)

    @property
    def earliest(self) -> float:
        if self.prefix is not None and self.oldest == 0:
            return self.t0 - self.horizon
        return self.node_time(self.oldest)

    def node_time(self, j: int) -> float:
        return self.t0 + j * self.dt

    def node_times(self) -> np.ndarray:
        return self.t0 + np.arange(self.oldest, self._count) * self.dt

    def push(self, u: ModeVector, v: ModeVector) -> float:
        slot = self._count % self._capacity
        self._u[slot] = u
        self._v[slot] = v
        self._count += 1
        return self.t_now

    def replace_last(self, u: ModeVector, v: ModeVector) -> None:
        slot = self.last % self._capacity
        self._u[slot] = u
        self._v[slot] = v

    def node(self, j: int) -> PhasePoint:
        slot = j % self._capacity
        return PhasePoint(self._u[slot].copy(), self._v[slot].copy())

    def interpolate(self, t: float) -> PhasePoint:
        """Hermite cubic in u, linear in v; exact at nodes."""
        if self._count == 0:
            raise HistoryUnderflowError(t, float('nan'))
        tol = NODE_TOL * self.dt
        if t > self.t_now + tol:
            raise ValueError(f"t={t:.12g} lies beyond the newest node {self.t_now:.12g}")
        if t < self.t0 - tol and self.prefix is not None and self.oldest == 0:
            if t < self.t0 - self.horizon - tol:
                raise HistoryUnderflowError(t, self.earliest)
            return self.prefix.state(t - self.t0)
        if t < self.node_time(self.oldest) - tol:
            raise HistoryUnderflowError(t, self.earliest)

        x = (t - self.t0) / self.dt
        j = int(round(x))
        if abs(x - j) <= NODE_TOL and self.oldest <= j <= self.last:
            return self.node(j)
        j = min(max(int(np.floor(x)), self.oldest), self.last - 1)
        s = x - j
        a, b = j % self._capacity, (j + 1) % self._capacity
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        u = (h00 * self._u[a] + h10 * self.dt * self._v[a]
             + h01 * self._u[b] + h11 * self.dt * self._v[b])
        v = (1 - s) * self._v[a] + s * self._v[b]
        return PhasePoint(u, v)

    def window(self, t: float, points: int = W_GRID_POINTS) -> np.ndarray:
        """Dense evaluation grid over [t - h, t] plus every node inside it."""
        grid = np.linspace(t - self.horizon, t, points + 1)
        nodes = self.node_times()
        inside = nodes[(nodes >= t - self.horizon) & (nodes <= t)]
        return np.unique(np.concatenate([grid, inside]))


def interpolate(history: HistorySegment, t: float) -> PhasePoint:
    return history.interpolate(t)


class SegmentHistory:
    """Initial data read off the newest h of a stored segment, theta = t - t_end.

    Lets a run restart from the end of an earlier one (e.g. inside an
    absorbing ball) with an optional analytic offset added on top.
    """

    def __init__(self, segment: 'HistorySegment', t_end: float,
                 offset: Optional[InitialHistory] = None):
        self.segment = segment
        self.t_end = float(t_end)
        self.offset = offset

    @property
    def size(self) -> int:
        return self.segment.size

    def state(self, theta: float) -> PhasePoint:
        point = self.segment.interpolate(self.t_end + theta)
        if self.offset is None:
            return point
        shift = self.offset.state(theta)
        return PhasePoint(point.u + shift.u, point.v + shift.v)

    def plus(self, other: InitialHistory) -> 'SegmentHistory':
        offset = other if self.offset is None else self.offset.plus(other)
        return SegmentHistory(self.segment, self.t_end, offset)

    def w_norm(self, basis: SpectralBasis, horizon: float, points: int = W_GRID_POINTS) -> float:
        return InitialHistory.w_norm(self, basis, horizon, points)


# -- delay specification ----------------------------------------------------

@dataclass(frozen=True)
class LinearResponse:
    a: float

    kind = 'linear'

    @property
    def lipschitz(self) -> float:
        return abs(self.a)

    def __call__(self, basis: SpectralBasis, u: ModeVector) -> ModeVector:
        return self.a * u

    def at_zero(self, basis: SpectralBasis) -> ModeVector:
        return basis.zeros()


@dataclass(frozen=True)
class TanhResponse:
    a: float

    kind = 'tanh'

    @property
    def lipschitz(self) -> float:
        return abs(self.a)

    def __call__(self, basis: SpectralBasis, u: ModeVector) -> ModeVector:
        grid = collocation_grid(basis)
        return self.a * to_spectral(grid, np.tanh(to_physical(grid, u)))

    def at_zero(self, basis: SpectralBasis) -> ModeVector:
        return basis.zeros()


@dataclass(frozen=True)
class ConstantLaw:
    tau0: float

    kind = 'constant'
    is_constant = True

    def __call__(self, q: float, horizon: float) -> float:
        return self.tau0


@dataclass(frozen=True)
class SigmoidLaw:
    kind = 'sigmoid'
    is_constant = False

    def __call__(self, q: float, horizon: float) -> float:
        return horizon * (1.0 + np.tanh(q)) / 2.0


@dataclass(frozen=True)
class RationalLaw:
    kind = 'rational'
    is_constant = False

    def __call__(self, q: float, horizon: float) -> float:
        return horizon * q * q / (1.0 + q * q)


@functools.lru_cache(maxsize=256)
def _point_weights(basis: SpectralBasis, point: Tuple[float, ...]) -> np.ndarray:
    return basis_functions(basis, point)


@dataclass(frozen=True)
class DelayFunctional:
    """Q[u_t] = sum c u(t - sigma, a) + sum c (u(t - sigma), xi)."""

    points: Tuple[Tuple[float, float, Tuple[float, ...]], ...] = ()
    averages: Tuple[Tuple[float, float, np.ndarray], ...] = field(default=(), compare=False)

    @property
    def kind(self) -> str:
        if self.points and self.averages:
            return 'mixed'
        return 'averages' if self.averages else 'points'

    def sigmas(self) -> List[float]:
        return [entry[1] for entry in self.points] + [entry[1] for entry in self.averages]


@dataclass(frozen=True)
class DelayTerm:
    response: object
    law: object
    functional: DelayFunctional = DelayFunctional()


@dataclass(frozen=True)
class DelaySpec:
    horizon: float
    terms: Tuple[DelayTerm, ...] = ()

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError('delay horizon h must be positive')
        for index, term in enumerate(self.terms):
            if isinstance(term.law, ConstantLaw) and not 0.0 <= term.law.tau0 <= self.horizon:
                raise ConfigurationError(f'term {index}: tau0 must lie in [0, h]')
            for sigma in term.functional.sigmas():
                if not 0.0 <= sigma <= self.horizon:
                    raise ConfigurationError(f'term {index}: sigma must lie in [0, h]')

    @property
    def state_dependent(self) -> bool:
        return any(not term.law.is_constant for term in self.terms)

    def with_horizon(self, horizon: float) -> 'DelaySpec':
        return DelaySpec(horizon, self.terms)


@dataclass(frozen=True)
class DelayBoundConstants:
    g0: float
    g1: float
    g2: float

    @classmethod
    def from_spec(cls, spec: DelaySpec, basis: SpectralBasis) -> 'DelayBoundConstants':
        g0 = sum(4.0 * float(np.dot(t.response.at_zero(basis), t.response.at_zero(basis)))
                 for t in spec.terms)
        g1 = sum(4.0 * t.response.lipschitz ** 2 for t in spec.terms)
        g2 = sum(2.0 * t.response.lipschitz ** 2 * spec.horizon for t in spec.terms)
        return cls(g0, g1, g2)


@dataclass(frozen=True)
class DelayBoundReport:
    lhs: float
    rhs: float
    holds: bool


# -- operations -------------------------------------------------------------

def eval_Q(term: DelayTerm, basis: SpectralBasis, history: HistorySegment, t: float) -> float:
    q = 0.0
    for c, sigma, point in term.functional.points:
        q += c * float(np.dot(history.interpolate(t - sigma).u, _point_weights(basis, tuple(point))))
    for c, sigma, xi in term.functional.averages:
        q += c * float(np.dot(history.interpolate(t - sigma).u, xi))
    return q


def eval_tau(term: DelayTerm, basis: SpectralBasis, history: HistorySegment, t: float,
             horizon: float, index: int = 0) -> float:
    """tau = g(Q) in [0, h]; never clamped."""
    q = eval_Q(term, basis, history, t) if not term.law.is_constant else 0.0
    tau = float(term.law(q, horizon))
    if not np.isfinite(tau) or tau < 0.0 or tau > horizon:
        raise ContractViolationError(t, index, tau, horizon)
    return tau


def eval_delay(spec: DelaySpec, basis: SpectralBasis, history: HistorySegment,
               t: float) -> Tuple[ModeVector, List[float]]:
    """M(u_t) together with the per-term delays."""
    total = basis.zeros()
    taus = []
    for index, term in enumerate(spec.terms):
        tau = eval_tau(term, basis, history, t, spec.horizon, index)
        total += term.response(basis, history.interpolate(t - tau).u)
        taus.append(tau)
    return total, taus


def eval_M(spec: DelaySpec, basis: SpectralBasis, history: HistorySegment, t: float) -> ModeVector:
    return eval_delay(spec, basis, history, t)[0]


def w_norm(history: HistorySegment, t: float, basis: SpectralBasis) -> float:
    """|u_t|_W = max ||A^1/2 u(t+theta)|| + max ||v(t+theta)||."""
    states = [history.interpolate(s) for s in history.window(t)]
    return (max(norm_alpha(basis, p.u, 0.5) for p in states)
            + max(norm_alpha(basis, p.v, 0.0) for p in states))


def history_gap(first: HistorySegment, second: HistorySegment, t: float, basis: SpectralBasis,
                alpha: float = 0.5, with_velocity: bool = True) -> float:
    """max ||A^alpha (u1 - u2)|| (+ max ||v1 - v2||) over the window ending at t."""
    times = np.union1d(first.window(t), second.window(t))
    displacement = 0.0
    velocity = 0.0
    for s in times:
        p1, p2 = first.interpolate(s), second.interpolate(s)
        displacement = max(displacement, norm_alpha(basis, p1.u - p2.u, alpha))
        if with_velocity:
            velocity = max(velocity, norm_alpha(basis, p1.v - p2.v, 0.0))
    return displacement + velocity


def delay_bound_check(spec: DelaySpec, history: HistorySegment, t: float,
                      basis: SpectralBasis) -> DelayBoundReport:
    """||M(u_t)||^2 <= g0 + g1 ||u(t)||^2 + g2 int_{t-h}^t ||u'||^2, times the term count."""
    constants = DelayBoundConstants.from_spec(spec, basis)
    m = eval_M(spec, basis, history, t)
    lhs = float(np.dot(m, m))
    times = history.window(t)
    speeds = np.array([float(np.dot(p.v, p.v)) for p in map(history.interpolate, times)])
    integral = float(trapezoid(speeds, times))
    u_now = history.interpolate(t).u
    rhs = constants.g0 + constants.g1 * float(np.dot(u_now, u_now)) + constants.g2 * integral
    rhs *= max(1, len(spec.terms))
    return DelayBoundReport(lhs, rhs, lhs <= rhs * (1.0 + 1e-9))


def sampled_history(basis: SpectralBasis, dt: float, horizon: float, t0: float, steps: int,
                    trajectory, prefix: Optional[InitialHistory] = None) -> HistorySegment:
    """History filled from a callable t -> PhasePoint on nodes t0 + j dt."""
    history = HistorySegment(dt, horizon, basis.size, t0=t0, prefix=prefix,
                             capacity=max(steps, int(np.ceil(horizon / dt)) + 4))
    for j in range(steps):
        state = trajectory(t0 + j * dt)
        history.push(state.u, state.v)
    return history
