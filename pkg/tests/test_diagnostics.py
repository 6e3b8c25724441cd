import math

import numpy as np
import pytest

from processing import diagnostics
from processing.delay import InitialHistory, ModeFamily
from processing.errors import PreconditionError
from processing.integrator import StepperConfig, simulate
from processing.oracles import method_of_steps_rk4

from tests.helpers import scalar_linear_problem


@pytest.fixture
def delayed_problem():
    return scalar_linear_problem(mu=1.0, k_damp=0.5, a=0.5, tau0=0.1, horizon=0.1)


def test_energy_residual_vanishes_without_dissipation():
    trace = simulate(scalar_linear_problem(mu=4.0), StepperConfig(0.01, 2.0))
    residual, series = diagnostics.energy_residual(trace)
    assert residual < 1e-10
    assert series.shape == trace.times.shape


def test_energy_residual_is_second_order_in_dt():
    problem = scalar_linear_problem(mu=1.0, k_damp=1.0)
    coarse = simulate(problem, StepperConfig(1e-2, 5.0))
    fine = simulate(problem, StepperConfig(5e-3, 5.0))
    r_coarse, _ = diagnostics.energy_residual(coarse)
    r_fine, _ = diagnostics.energy_residual(fine)
    assert r_coarse < 1e-4
    assert 3.0 <= r_coarse / r_fine <= 5.0


def test_energy_ledger_terms(delayed_problem):
    trace = simulate(delayed_problem, StepperConfig(1e-3, 1.0))
    ledger = diagnostics.energy_ledger(trace)
    assert ledger.damping[0] == 0.0
    assert np.all(np.diff(ledger.damping) >= 0.0)
    np.testing.assert_allclose(ledger.nonconservative, 0.0)
    assert ledger.max_residual < 1e-5


def test_lyapunov_parameters():
    params = diagnostics.LyapunovParams.for_damping(1.0)
    assert params.gamma == pytest.approx(1.0 / 24.0)
    assert params.mu_l == pytest.approx(0.25)


def test_lyapunov_functional_stays_in_its_belt(delayed_problem):
    trace = simulate(delayed_problem, StepperConfig(1e-3, 2.0))
    params = diagnostics.LyapunovParams.for_damping(delayed_problem.k_damp)
    series = diagnostics.lyapunov_series(trace, params)
    assert series.shape == trace.times.shape
    belt = diagnostics.lyapunov_belt(trace, params)
    assert belt.c == max(0.0, belt.lower, belt.upper)
    assert np.all(0.5 * trace.energy - belt.c <= series + 1e-12)


def test_delayed_speed_integrals_cover_the_prefix():
    problem = scalar_linear_problem(mu=1.0, velocity=2.0, horizon=0.5)
    trace = simulate(problem, StepperConfig(0.01, 0.1))
    plain, weighted = diagnostics.delayed_speed_integrals(trace)
    # v = 2 on [-h, 0], so the window integral starts at 4 h
    assert plain[0] == pytest.approx(4.0 * 0.5, rel=1e-6)
    assert weighted[0] == pytest.approx(4.0 * 0.5 ** 2 / 2.0, rel=1e-6)


def test_tail_radius_and_spread():
    trace = simulate(scalar_linear_problem(mu=4.0), StepperConfig(0.01, 1.0))
    assert diagnostics.tail_radius(trace) == pytest.approx(2.0, rel=1e-9)
    entries = [diagnostics.SweepEntry(k, 0.1, r, 'completed') for k, r in ((1, 2.0), (2, 2.2), (4, 2.1))]
    assert diagnostics.radius_spread(entries) == pytest.approx(1.1)
    entries.append(diagnostics.SweepEntry(8, 0.1, math.inf, 'blow-up'))
    assert diagnostics.radius_spread(entries) == math.inf


def test_dissipativity_sweep_orders_rows_by_horizon_then_damping(delayed_problem):
    entries = diagnostics.dissipativity_sweep(delayed_problem, StepperConfig(0.01, 1.0),
                                              [1.0, 2.0], [0.1, 0.2])
    assert [(e.horizon, e.k_damp) for e in entries] == [(0.1, 1.0), (0.1, 2.0), (0.2, 1.0), (0.2, 2.0)]
    assert all(e.status == 'completed' for e in entries)


def test_rejected_sweep_cell_does_not_abort_the_sweep(delayed_problem):
    # tau0 = 0.1 does not fit a horizon of 0.05
    entries = diagnostics.dissipativity_sweep(delayed_problem, StepperConfig(0.01, 1.0), [1.0], [0.1, 0.05])
    kept, rejected = entries
    assert kept.status == 'completed' and math.isfinite(kept.radius)
    assert rejected.horizon == 0.05
    assert rejected.status == 'contract-violation'
    assert rejected.radius == math.inf
    assert diagnostics.radius_spread(entries) == math.inf


def test_quasi_stability_fit_recovers_an_exponential():
    times = np.linspace(0.0, 5.0, 501)
    d = 1e-6 * np.exp(-2.0 * times)
    driver = np.full_like(times, 1e-4)
    fit = diagnostics.fit_quasi_stability(times, d, driver)
    assert not fit.degenerate
    assert fit.rate == pytest.approx(2.0, rel=1e-6)
    assert fit.c1 == pytest.approx(1.0, rel=1e-6)
    assert fit.floor_bounded


def test_floor_is_checked_on_a_held_out_tail():
    times = np.linspace(0.0, 10.0, 401)
    driver = np.full_like(times, 0.1)
    # separation stops decaying once the tail starts
    stalled = np.where(times < 7.5, np.exp(-times), 1e-2)
    fit = diagnostics.fit_quasi_stability(times, stalled, driver)
    assert fit.rate == pytest.approx(1.0, rel=1e-6)
    assert fit.floor > 9e-3
    assert not fit.floor_bounded

    decaying = diagnostics.fit_quasi_stability(times, np.exp(-times), driver)
    assert decaying.floor_bounded


def test_identical_trajectories_are_degenerate(delayed_problem):
    trace = simulate(delayed_problem, StepperConfig(0.01, 1.0))
    times, d, driver = diagnostics.separation(trace, trace)
    fit = diagnostics.fit_quasi_stability(times, d, driver)
    assert fit.degenerate
    assert fit.floor_bounded


def test_quasi_stability_pairs_on_a_damped_oscillator():
    problem = scalar_linear_problem(mu=4.0, k_damp=1.0)
    pairs = [(InitialHistory(1, (ModeFamily(0, a=1.0),)), InitialHistory(1, (ModeFamily(0, a=1.001),))),
             (InitialHistory(1, (ModeFamily(0, a=0.5),)), InitialHistory(1, (ModeFamily(0, a=0.502),)))]
    fits = diagnostics.quasi_stability_pairs(problem, StepperConfig(0.01, 10.0), pairs)
    assert len(fits) == 2
    for fit in fits:
        assert not fit.degenerate
        assert fit.rate == pytest.approx(1.0, rel=0.2)
    assert fits[0].rate == pytest.approx(fits[1].rate, rel=1e-6)


def test_tail_history_continues_the_trace(delayed_problem):
    trace = simulate(delayed_problem, StepperConfig(0.01, 1.0))
    restart = diagnostics.tail_history(trace)
    np.testing.assert_allclose(restart.state(0.0).u, trace.u[-1])
    np.testing.assert_allclose(restart.state(-0.1).u, trace.u[-11])
    continued = simulate(delayed_problem.with_initial(restart), StepperConfig(0.01, 0.5))
    longer = simulate(delayed_problem, StepperConfig(0.01, 1.5))
    np.testing.assert_allclose(continued.u[-1], longer.u[-1], atol=1e-12)


def test_lipschitz_ratio_is_flat_for_a_linear_problem(delayed_problem):
    psi = InitialHistory(1, (ModeFamily(0, a=1.0, b=0.5),))
    report = diagnostics.lipschitz_ratio(delayed_problem, StepperConfig(0.01, 1.0), psi,
                                         [1e-2, 1e-3, 1e-4])
    assert report.spread == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(PreconditionError):
        diagnostics.lipschitz_ratio(delayed_problem, StepperConfig(0.01, 1.0), InitialHistory(1), [1e-2])


def test_equation_residual_preconditions_and_order(delayed_problem):
    coarse = simulate(delayed_problem, StepperConfig(1e-2, 0.5))
    fine = simulate(delayed_problem, StepperConfig(5e-3, 0.5))
    with pytest.raises(PreconditionError):
        diagnostics.equation_residual(coarse, 0.1)
    r_coarse = diagnostics.equation_residual(coarse, 0.3)
    r_fine = diagnostics.equation_residual(fine, 0.3)
    assert r_fine < r_coarse < 1e-3
    assert math.isfinite(diagnostics.sup_tail_A_norm(coarse))


def test_compatibility_residual_shrinks_with_step(delayed_problem):
    coarse = simulate(delayed_problem, StepperConfig(1e-2, 0.5))
    fine = simulate(delayed_problem, StepperConfig(5e-3, 0.5))
    c_coarse = diagnostics.compatibility_residual(coarse, 0.3)
    c_fine = diagnostics.compatibility_residual(fine, 0.3)
    assert c_fine < c_coarse < 1e-3
    with pytest.raises(PreconditionError):
        diagnostics.compatibility_residual(coarse, 0.0)
    with pytest.raises(PreconditionError):
        diagnostics.compatibility_residual(coarse, 0.5)


def test_trace_gap_needs_nested_steps(delayed_problem):
    coarse = simulate(delayed_problem, StepperConfig(0.03, 0.3))
    fine = simulate(delayed_problem, StepperConfig(0.02, 0.3))
    with pytest.raises(PreconditionError):
        diagnostics.trace_gap(delayed_problem.basis, coarse, fine)


def test_self_convergence_is_second_order(delayed_problem):
    report, traces = diagnostics.self_convergence(delayed_problem, StepperConfig(0.02, 2.0), levels=3)
    assert len(traces) == 3
    assert report.dts == (0.02, 0.01)
    assert min(report.orders) > 1.5
    with pytest.raises(PreconditionError):
        diagnostics.self_convergence(delayed_problem, StepperConfig(0.02, 2.0), levels=2)


def test_reference_convergence_against_method_of_steps(delayed_problem):
    reference = method_of_steps_rk4(delayed_problem, 2.0, 0.0025)
    report, _ = diagnostics.reference_convergence(delayed_problem, [0.02, 0.01, 0.005], 2.0, reference)
    assert all(order > 1.5 for order in report.orders)
    assert report.gaps[-1] < 1e-4
