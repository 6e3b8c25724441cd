"""Small problem builders shared by the test modules."""
import os

import numpy as np

from processing.delay import (ConstantLaw, DelaySpec, DelayTerm, InitialHistory, LinearResponse,
                              ModeFamily, sampled_history)
from processing.integrator import Problem
from processing.nonlinearity import make_nonlinearity
from processing.spectral import PhasePoint, build_basis


def scalar_linear_problem(mu=1.0, k_damp=0.0, a=0.0, tau0=None, horizon=0.1, u0=1.0, velocity=0.0):
    """One-mode u'' + k u' + mu u + a u(t - tau0) = 0 with u = u0 + velocity*theta before 0."""
    basis = build_basis('ode', 1, 1, [mu])
    terms = ()
    if tau0 is not None:
        terms = (DelayTerm(LinearResponse(a), ConstantLaw(tau0)),)
    initial = InitialHistory(1, (ModeFamily(0, a=u0, b=velocity),))
    return Problem(basis, k_damp, make_nonlinearity(basis), DelaySpec(horizon, terms), initial)


def constant_history(basis, value, dt=0.01, horizon=0.1, steps=30):
    """History segment holding u = value, v = 0 on nodes 0, dt, ..., (steps - 1) dt."""
    state = PhasePoint(np.asarray(value, dtype=float), np.zeros(basis.size))
    return sampled_history(basis, dt, horizon, 0.0, steps, lambda t: state)


EXPERIMENTS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'app', 'experiments')
