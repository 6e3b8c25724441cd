import math

import numpy as np
import pytest

from processing import ode_stability
from processing.errors import ConfigurationError, PreconditionError
from processing.integrator import StepperConfig, simulate
from processing.ode_stability import ScalarDDE
from processing.sweep import seeded_rng

TAU_STAR = 0.5811  # k = 1/2, a = 2


def test_chebyshev_matrix_differentiates_polynomials():
    d, x = ode_stability.cheb(8)
    np.testing.assert_allclose(d @ x ** 3, 3.0 * x ** 2, atol=1e-10)


def test_zero_delay_is_a_quadratic():
    report = ode_stability.rightmost_root(ScalarDDE(0.5, 2.0, 0.0))
    assert report.m == 0
    assert report.root.real == pytest.approx(-0.25)
    assert report.root.imag == pytest.approx(math.sqrt(3.0 - 0.0625))


@pytest.mark.parametrize('tau', [0.3, 1.0, 4.0])
def test_rightmost_roots_solve_the_characteristic_equation(tau):
    dde = ScalarDDE(0.5, 2.0, tau)
    report = ode_stability.rightmost_root(dde)
    assert report.residual < 1e-10
    assert abs(ode_stability.char_residual(dde, report.root)) < 1e-10
    assert report.m >= 32


def test_rightmost_root_preconditions():
    with pytest.raises(PreconditionError):
        ode_stability.rightmost_root(ScalarDDE(0.5, 2.0, 1.0), m=8)
    with pytest.raises(ConfigurationError):
        ScalarDDE(0.5, 2.0, -1.0)
    with pytest.raises(PreconditionError):
        ode_stability.stability_scan(0.5, 2.0, [1.0, 0.5])


def test_strong_damping_is_stable_for_every_delay():
    reports = ode_stability.stability_scan(3.0, 2.0, [0.0, 0.5, 2.0, 10.0, 30.0])
    assert all(report.stable for report in reports)
    assert ode_stability.crossing_frequencies(3.0, 2.0) == []
    assert not ode_stability.find_tau_star(3.0, 2.0, tau_max=10.0).found


def test_weak_damping_switches_stability():
    crossings = ode_stability.crossing_frequencies(0.5, 2.0)
    assert len(crossings) == 2
    first = min(crossings, key=lambda c: c.tau0)
    assert first.direction > 0
    assert first.tau0 == pytest.approx(TAU_STAR, abs=1e-3)

    tau_star = ode_stability.find_tau_star(0.5, 2.0, tau_max=5.0, step=0.5)
    assert tau_star.found
    assert tau_star.tau == pytest.approx(first.tau0, abs=1e-6)
    assert tau_star.omega == pytest.approx(first.omega, abs=1e-6)
    assert tau_star.residual < 1e-8

    below, above = ode_stability.stability_scan(0.5, 2.0, [0.5, 0.7])
    assert below.stable and not above.stable


def test_crossing_delays_repeat_with_the_period():
    first = ode_stability.crossing_frequencies(0.5, 2.0)[0]
    taus = first.taus(3)
    assert taus[1] - taus[0] == pytest.approx(2.0 * math.pi / first.omega)


@pytest.mark.parametrize('k, tau', [(3.0, 1.0), (0.5, 1.0)])
def test_integrator_growth_agrees_with_root_sign(k, tau):
    dde = ScalarDDE(k, 2.0, tau)
    report = ode_stability.rightmost_root(dde)
    assert abs(report.root.real) > 0.05
    trace = simulate(ode_stability.scalar_problem(dde), StepperConfig(0.02, 100.0))
    check = ode_stability.CrossCheck(dde, report.root, ode_stability.grows(trace))
    assert check.agrees


def test_scalar_problem_needs_positive_stiffness():
    with pytest.raises(PreconditionError):
        ode_stability.scalar_problem(ScalarDDE(1.0, -1.0, 1.0))


def test_sampled_cases_keep_off_the_axis():
    cases = ode_stability.sample_cases(4, seeded_rng(0), margin=0.05)
    assert len(cases) == 4
    for dde, report in cases:
        assert abs(report.root.real) >= 0.05
        assert 0.1 <= dde.tau <= 6.0


@pytest.mark.slow
def test_time_domain_cross_check_agrees():
    checks = ode_stability.time_domain_cross_check(6, seed=1)
    assert len(checks) == 6
    assert all(check.agrees for check in checks)
