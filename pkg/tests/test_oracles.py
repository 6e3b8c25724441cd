import numpy as np
import pytest

from processing.delay import DelayFunctional, DelaySpec, DelayTerm, LinearResponse, SigmoidLaw
from processing.errors import ConfigurationError
from processing.integrator import Problem
from processing.oracles import method_of_steps_rk4

from tests.helpers import scalar_linear_problem


def test_reference_matches_the_free_oscillation():
    solution = method_of_steps_rk4(scalar_linear_problem(mu=1.0), 2.0, 0.01)
    np.testing.assert_allclose(solution.u[:, 0], np.cos(solution.times), atol=1e-8)
    np.testing.assert_allclose(solution.v[:, 0], -np.sin(solution.times), atol=1e-8)


def test_first_delay_interval_reads_the_initial_history():
    # u'' + u + 1 = 0 on [0, tau] since u(t - tau) = 1 there
    problem = scalar_linear_problem(mu=1.0, a=1.0, tau0=0.5, horizon=0.5)
    solution = method_of_steps_rk4(problem, 0.5, 0.01)
    np.testing.assert_allclose(solution.u[:, 0], 2.0 * np.cos(solution.times) - 1.0, atol=1e-8)


def test_reference_rejects_unsupported_delays():
    problem = scalar_linear_problem(mu=1.0, a=1.0, tau0=0.05)
    with pytest.raises(ConfigurationError):
        method_of_steps_rk4(problem, 1.0, 0.03)
    with pytest.raises(ConfigurationError):
        method_of_steps_rk4(scalar_linear_problem(mu=1.0, a=1.0, tau0=0.0), 1.0, 0.01)
    delay = DelaySpec(0.1, (DelayTerm(LinearResponse(1.0), SigmoidLaw(), DelayFunctional()),))
    state_dependent = Problem(problem.basis, 0.0, problem.nonlinearity, delay, problem.initial)
    with pytest.raises(ConfigurationError):
        method_of_steps_rk4(state_dependent, 1.0, 0.01)
