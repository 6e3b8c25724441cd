"""
Independent reference integrator for constant delays: classical RK4 by the
method of steps. Every delay must be a whole number of steps, so delayed
stage values either come from the analytic initial history or from a cubic
Hermite interpolant inside one already computed step.
"""
import logging
from dataclasses import dataclass

import numpy as np

from processing.delay import ConstantLaw
from processing.errors import ConfigurationError
from processing.integrator import Problem
from processing.nonlinearity import eval_F

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceSolution:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    dt: float


def _delays(problem: Problem, dt: float):
    taus = []
    for index, term in enumerate(problem.delay.terms):
        if not isinstance(term.law, ConstantLaw):
            raise ConfigurationError(f'term {index}: the reference integrator needs a constant delay')
        steps = term.law.tau0 / dt
        if term.law.tau0 < dt or abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f'term {index}: tau0={term.law.tau0} is not a multiple of dt={dt}')
        taus.append(term.law.tau0)
    return taus


def method_of_steps_rk4(problem: Problem, t_end: float, dt: float) -> ReferenceSolution:
    basis = problem.basis
    taus = _delays(problem, dt)
    steps = int(round(t_end / dt))
    times = np.arange(steps + 1) * dt
    u = np.zeros((steps + 1, basis.size))
    v = np.zeros((steps + 1, basis.size))
    start = problem.initial.state(0.0)
    u[0], v[0] = start.u, start.v

    def delayed(s: float) -> np.ndarray:
        if s <= 1e-12 * dt:
            return problem.initial.state(min(s, 0.0)).u
        j = min(int(np.floor(s / dt + 1e-9)), steps - 1)
        x = s / dt - j
        if abs(x) < 1e-9:
            return u[j]
        h00 = (1 + 2 * x) * (1 - x) ** 2
        h10 = x * (1 - x) ** 2
        h01 = x * x * (3 - 2 * x)
        h11 = x * x * (x - 1)
        return h00 * u[j] + h10 * dt * v[j] + h01 * u[j + 1] + h11 * dt * v[j + 1]

    def rhs(t: float, uu: np.ndarray, vv: np.ndarray):
        acceleration = -problem.k_damp * vv - basis.mu * uu - eval_F(problem.nonlinearity, basis, uu)
        for tau, term in zip(taus, problem.delay.terms):
            acceleration = acceleration - term.response(basis, delayed(t - tau))
        return vv, acceleration

    for n in range(steps):
        t = times[n]
        k1u, k1v = rhs(t, u[n], v[n])
        k2u, k2v = rhs(t + dt / 2, u[n] + dt / 2 * k1u, v[n] + dt / 2 * k1v)
        k3u, k3v = rhs(t + dt / 2, u[n] + dt / 2 * k2u, v[n] + dt / 2 * k2v)
        k4u, k4v = rhs(t + dt, u[n] + dt * k3u, v[n] + dt * k3v)
        u[n + 1] = u[n] + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v[n + 1] = v[n] + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    logger.debug('reference RK4: %d steps, dt=%g', steps, dt)
    return ReferenceSolution(times, u, v, float(dt))
