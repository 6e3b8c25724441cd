"""
Experiment orchestration: one function per subcommand.

Each runner reads its parameter block from the config, drives the
processing package, writes CSV artifacts into the output directory and
returns a RunOutcome. Summary records go to `<out>/<subcommand>.jsonl`.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from app.models import SUBCOMMANDS, ExperimentConfig, config_dict
from processing import attractor, diagnostics, ode_stability, oracles, trace_io
from processing.delay import delay_bound_check, random_history
from processing.errors import ConfigurationError, PreconditionError
from processing.integrator import Problem, StepperConfig, simulate, simulate_task
from processing.spectral import SpectralBasis
from processing.sweep import run_all, seeded_rng

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    subcommand: str
    passed: bool
    records: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)
    headline: str = ''


@dataclass
class RunContext:
    subcommand: str
    config: ExperimentConfig
    out_dir: str
    workers: int
    basis: SpectralBasis
    problem: Problem
    stepper: StepperConfig

    @property
    def params(self):
        return self.config.experiment.params(self.subcommand)

    def path(self, filename: str) -> str:
        return os.path.join(self.out_dir, filename)

    def record(self, **values) -> Dict[str, Any]:
        entry = {'subcommand': self.subcommand, 'name': self.config.name, 'seed': self.config.seed}
        entry.update(values)
        return entry


def _in_range(value: float, bounds) -> bool:
    return bounds[0] <= value <= bounds[1]


def _ratio(coarse: float, fine: float) -> float:
    return coarse / fine if fine > 0 else math.inf


# -- simulate ---------------------------------------------------------------

def run_simulate(ctx: RunContext) -> RunOutcome:
    trace = simulate(ctx.problem, ctx.stepper, config_dict(ctx.config))
    artifacts = [trace_io.write_trace_csv(trace, ctx.path('trace.csv'))]
    snapshots = trace_io.write_snapshots(trace, ctx.path('snapshots.txt'))
    if snapshots:
        artifacts.append(snapshots)

    bound = None
    if ctx.problem.delay.terms and trace.completed:
        report = delay_bound_check(ctx.problem.delay, diagnostics.trace_history(trace),
                                   float(trace.times[-1]), ctx.basis)
        bound = {'lhs': report.lhs, 'rhs': report.rhs, 'holds': report.holds}

    record = ctx.record(status=trace.status, status_time=trace.status_time, message=trace.message,
                        steps=len(trace) - 1, t_last=float(trace.times[-1]),
                        max_energy=float(np.max(trace.energy)), final_energy=float(trace.energy[-1]),
                        delay_bound=bound, config=trace.config_echo, passed=trace.completed)
    return RunOutcome(ctx.subcommand, trace.completed, [record], artifacts,
                      f'status={trace.status} steps={len(trace) - 1}')


# -- energy-check -----------------------------------------------------------

def run_energy_check(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    coarse, fine = run_all(simulate_task, [(ctx.problem, ctx.stepper),
                                           (ctx.problem, ctx.stepper.refined())], ctx.workers)
    completed = coarse.completed and fine.completed
    r_coarse, series = diagnostics.energy_residual(coarse)
    r_fine, _ = diagnostics.energy_residual(fine)
    scale = 1.0 + float(np.max(np.abs(coarse.cal_energy)))
    ratio = _ratio(r_coarse, r_fine)
    # at round-off level the halving ratio carries no information
    ratio_checked = r_coarse > 1e-12 * scale
    passed = (completed and r_coarse <= params.tolerance * scale
              and (not ratio_checked or _in_range(ratio, params.ratio_range)))

    lyapunov = diagnostics.LyapunovParams.for_damping(ctx.problem.k_damp, ctx.config.lyapunov_sigma)
    v_series = diagnostics.lyapunov_series(coarse, lyapunov)
    belt = diagnostics.lyapunov_belt(coarse, lyapunov)

    rows = [[trace_io.fmt(coarse.times[i]), trace_io.fmt(coarse.energy[i]),
             trace_io.fmt(coarse.cal_energy[i]), trace_io.fmt(series[i]), trace_io.fmt(v_series[i])]
            for i in range(0, len(coarse), ctx.stepper.stride)]
    artifact = trace_io.write_table(ctx.path('energy.csv'), ['t', 'E', 'calE', 'residual', 'V'], rows)

    record = ctx.record(status=[coarse.status, fine.status], dt=ctx.stepper.dt,
                        max_residual=r_coarse, max_residual_half=r_fine, ratio=ratio,
                        ratio_checked=ratio_checked, tolerance=params.tolerance * scale,
                        ratio_range=list(params.ratio_range),
                        lyapunov={'gamma': lyapunov.gamma, 'mu_l': lyapunov.mu_l,
                                  'start': float(v_series[0]), 'end': float(v_series[-1]),
                                  'belt_c': belt.c},
                        passed=passed)
    return RunOutcome(ctx.subcommand, passed, [record], [artifact],
                      f'max_residual={r_coarse:.3e} ratio={ratio:.3f}')


# -- dissipativity ----------------------------------------------------------

def _spreads(entries) -> Dict[float, float]:
    groups: Dict[float, list] = {}
    for entry in entries:
        groups.setdefault(entry.horizon, []).append(entry)
    return {h: diagnostics.radius_spread(group) for h, group in groups.items()}


def run_dissipativity(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    h_list = list(params.h_list)
    if params.check_halving:
        h_list += [h / 2.0 for h in params.h_list]
    entries = diagnostics.dissipativity_sweep(ctx.problem, ctx.stepper, params.k_list, h_list,
                                              params.t_long, params.tail_fraction, ctx.workers)
    main = [e for e in entries if e.horizon in params.h_list]
    spreads = _spreads(main)
    completed = all(e.status == 'completed' for e in entries)
    passed = completed and all(s <= params.spread_max for s in spreads.values())

    increases = []
    if params.check_halving:
        radius = {(e.k_damp, e.horizon): e.radius for e in entries}
        for k in params.k_list:
            for h in params.h_list:
                base, half = radius[(float(k), float(h))], radius[(float(k), float(h) / 2.0)]
                increases.append(half / base - 1.0 if base > 0 else 0.0)
        passed = passed and all(x <= params.halving_increase_max for x in increases)

    rows = [[trace_io.fmt(e.k_damp), trace_io.fmt(e.horizon), trace_io.fmt(e.radius), e.status]
            for e in entries]
    artifact = trace_io.write_table(ctx.path('dissipativity.csv'), ['k', 'h', 'R', 'status'], rows)
    records = [ctx.record(k=e.k_damp, h=e.horizon, R=e.radius, status=e.status) for e in entries]
    records.append(ctx.record(spreads={str(h): s for h, s in spreads.items()},
                              spread_max=params.spread_max, halving_increases=increases,
                              passed=passed))
    worst = max(spreads.values()) if spreads else 1.0
    return RunOutcome(ctx.subcommand, passed, records, [artifact], f'max_spread={worst:.4f}')


# -- quasi-stability --------------------------------------------------------

def _scaled(history, basis: SpectralBasis, horizon: float, size: float):
    return history.scaled(size / history.w_norm(basis, horizon))


def run_quasi_stability(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    problem, basis = ctx.problem, ctx.basis
    burn = simulate(problem, StepperConfig(ctx.stepper.dt, params.burn_in)) if params.burn_in > 0 else None
    if burn is not None and not burn.completed:
        raise PreconditionError(f'burn-in run did not complete ({burn.status})')
    start = diagnostics.tail_history(burn) if burn is not None else problem.initial

    rng = seeded_rng(ctx.config.seed)
    pairs = []
    for _ in range(params.pairs):
        first = start.plus(_scaled(random_history(basis, rng), basis, problem.horizon, params.spread))
        second = first.plus(_scaled(random_history(basis, rng), basis, problem.horizon, params.spread))
        pairs.append((first, second))
    fits = diagnostics.quasi_stability_pairs(problem, ctx.stepper, pairs, ctx.config.driver_delta,
                                             params.window_fraction, ctx.workers)

    rates = np.array([fit.rate for fit in fits])
    usable = not any(fit.degenerate for fit in fits) and np.all(rates > 0)
    mean = float(np.mean(rates)) if usable else math.nan
    spread = float(np.max(np.abs(rates - mean)) / mean) if usable else math.inf
    bounded = all(fit.floor_bounded for fit in fits)
    passed = bool(usable and spread <= params.rate_spread and bounded)

    rows = [[str(i), trace_io.fmt(f.rate), trace_io.fmt(f.c1), trace_io.fmt(f.floor),
             trace_io.fmt(f.driver), trace_io.fmt(f.c2), trace_io.fmt(f.floor_limit),
             trace_io.fmt(f.fit_residual)]
            for i, f in enumerate(fits)]
    artifact = trace_io.write_table(ctx.path('quasi_stability.csv'),
                                    ['pair', 'rate', 'c1', 'floor', 'driver', 'c2', 'floor_limit',
                                     'fit_residual'], rows)
    record = ctx.record(rates=rates, mean_rate=mean, rate_spread=spread, floor_bounded=bounded,
                        degenerate=[f.degenerate for f in fits], burn_in=params.burn_in,
                        spread=params.spread, passed=passed)
    return RunOutcome(ctx.subcommand, passed, [record], [artifact],
                      f'mean_rate={mean:.4g} spread={spread:.3f}')


# -- lipschitz --------------------------------------------------------------

def run_lipschitz(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    psi = random_history(ctx.basis, seeded_rng(ctx.config.seed), params.modes)
    report = diagnostics.lipschitz_ratio(ctx.problem, ctx.stepper, psi, params.eps, ctx.workers)
    passed = report.spread <= params.spread_max
    rows = [[trace_io.fmt(e), trace_io.fmt(r)] for e, r in zip(report.eps, report.ratios)]
    artifact = trace_io.write_table(ctx.path('lipschitz.csv'), ['eps', 'ratio'], rows)
    record = ctx.record(eps=report.eps, ratios=report.ratios, spread=report.spread,
                        spread_max=params.spread_max, passed=passed)
    return RunOutcome(ctx.subcommand, passed, [record], [artifact], f'spread={report.spread:.3f}')


# -- residual ---------------------------------------------------------------

def run_residual(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    at = params.at if params.at is not None else 2.0 * ctx.problem.horizon
    coarse, fine = run_all(simulate_task, [(ctx.problem, ctx.stepper),
                                           (ctx.problem, ctx.stepper.refined())], ctx.workers)
    if not (coarse.completed and fine.completed):
        raise PreconditionError(f'run ended early ({coarse.status}, {fine.status})')
    r_coarse = diagnostics.equation_residual(coarse, at)
    r_fine = diagnostics.equation_residual(fine, at)
    ratio = _ratio(r_coarse, r_fine)
    ratio_checked = r_coarse > 1e-12
    passed = not ratio_checked or _in_range(ratio, params.ratio_range)
    tail_norm = diagnostics.sup_tail_A_norm(coarse)
    compatibility = diagnostics.compatibility_residual(coarse, at)

    artifact = trace_io.write_table(ctx.path('residual.csv'), ['dt', 't', 'residual'], [
        [trace_io.fmt(coarse.dt), trace_io.fmt(at), trace_io.fmt(r_coarse)],
        [trace_io.fmt(fine.dt), trace_io.fmt(at), trace_io.fmt(r_fine)]])
    record = ctx.record(t=at, residual=r_coarse, residual_half=r_fine, ratio=ratio,
                        ratio_checked=ratio_checked, ratio_range=list(params.ratio_range),
                        compatibility=compatibility, sup_tail_A_norm=tail_norm, passed=passed)
    return RunOutcome(ctx.subcommand, passed, [record], [artifact],
                      f'residual={r_coarse:.3e} ratio={ratio:.3f}')


# -- ode-stability ----------------------------------------------------------

def _switch_pattern(reals: np.ndarray) -> bool:
    """A negative prefix followed by positive entries."""
    if reals.size == 0 or reals[0] >= 0:
        return False
    positive = np.flatnonzero(reals > 0)
    return positive.size > 0 and np.all(reals[:positive[0]] < 0)


def run_ode_stability(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    taus = np.arange(0.0, params.tau_max + 0.5 * params.tau_step, params.tau_step)
    reports = ode_stability.stability_scan(params.k, params.a, taus, params.m)
    reals = np.array([r.root.real for r in reports])
    tau_star = ode_stability.find_tau_star(params.k, params.a, params.tau_max, params.tau_step, params.m)
    crossings = ode_stability.crossing_frequencies(params.k, params.a)
    checks = ode_stability.time_domain_cross_check(
        params.samples, ctx.config.seed, params.sample_margin, params.sample_t_end,
        params.sample_dt, params.m, ctx.workers) if params.samples else []

    if params.expect == 'switch':
        expected = (tau_star.found and tau_star.residual <= params.tolerance
                    and _switch_pattern(reals))
    elif params.expect == 'stable':
        expected = bool(np.all(reals < 0)) and not tau_star.found
    else:
        expected = True
    agreement = sum(check.agrees for check in checks)
    passed = bool(expected and agreement == len(checks) and len(checks) == params.samples)

    artifacts = [trace_io.write_stability_csv(reports, ctx.path('stability.csv'))]
    rows = [[trace_io.fmt(c.dde.k, 12), trace_io.fmt(c.dde.a, 12), trace_io.fmt(c.dde.tau, 12),
             trace_io.fmt(c.root.real, 12), str(int(c.grows)), str(int(c.agrees))] for c in checks]
    artifacts.append(trace_io.write_table(ctx.path('crosscheck.csv'),
                                          ['k', 'a', 'tau', 're_lambda', 'grows', 'agrees'], rows))
    record = ctx.record(k=params.k, a=params.a, expect=params.expect,
                        tau_star={'found': tau_star.found, 'tau': tau_star.tau,
                                  'omega': tau_star.omega, 'residual': tau_star.residual,
                                  'message': tau_star.message},
                        crossings=[{'omega': c.omega, 'tau0': c.tau0, 'direction': c.direction}
                                   for c in crossings],
                        switch_pattern=_switch_pattern(reals), all_stable=bool(np.all(reals < 0)),
                        cross_checks=len(checks), agreement=agreement, passed=passed)
    if tau_star.found:
        headline = f'tau_star={tau_star.tau:.12g} omega={tau_star.omega:.12g}'
    else:
        headline = tau_star.message
    return RunOutcome(ctx.subcommand, passed, [record], artifacts,
                      f'{headline} agreement={agreement}/{len(checks)}')


# -- attractor-dim ----------------------------------------------------------

def run_attractor_dim(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    extra: Dict[str, Any] = {}
    if params.source == 'synthetic':
        cloud = attractor.synthetic_cloud(params.shape, params.points, params.embed_dim, ctx.config.seed)
        finite_tail = True
    else:
        trace = simulate(ctx.problem, ctx.stepper)
        if not trace.completed:
            raise PreconditionError(f'trace ended early ({trace.status})')
        cloud = attractor.sample_cloud(trace, params.burn_in, params.sample_stride)
        tail_norm = diagnostics.sup_tail_A_norm(trace)
        finite_tail = math.isfinite(tail_norm)
        extra['sup_tail_A_norm'] = tail_norm
    estimate = attractor.correlation_dimension(cloud, seed=ctx.config.seed)

    passed = estimate.plateau and finite_tail
    if params.expect_dimension is not None:
        passed = passed and abs(estimate.slope - params.expect_dimension) <= params.dimension_tol
    artifact = trace_io.write_correlation_csv(estimate, ctx.path('correlation.csv'))
    record = ctx.record(source=params.source, points=len(cloud), diameter=cloud.diameter,
                        slope=estimate.slope, window=estimate.window, confidence=estimate.confidence,
                        plateau=estimate.plateau, expect_dimension=params.expect_dimension,
                        passed=bool(passed), **extra)
    return RunOutcome(ctx.subcommand, bool(passed), [record], [artifact],
                      f'slope={estimate.slope:.4f} plateau={estimate.plateau}')


# -- attraction-rate --------------------------------------------------------

def run_attraction_rate(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    fit = attractor.attraction_rate(ctx.problem, ctx.stepper, params.members, params.spread,
                                    ctx.config.seed, ctx.workers)
    passed = not fit.flagged and fit.rate > 0
    if params.expect_rate is not None and passed:
        passed = abs(fit.rate - params.expect_rate) <= params.rate_tol * abs(params.expect_rate)
    rows = [[trace_io.fmt(t), trace_io.fmt(d)]
            for t, d in zip(fit.times[::ctx.stepper.stride], fit.distances[::ctx.stepper.stride])]
    artifact = trace_io.write_table(ctx.path('attraction.csv'), ['t', 'D'], rows)
    record = ctx.record(rate=fit.rate, onset=fit.onset, constant=fit.constant, flagged=fit.flagged,
                        members=params.members, spread=params.spread, passed=bool(passed))
    return RunOutcome(ctx.subcommand, bool(passed), [record], [artifact],
                      f'rate={fit.rate:.4g} flagged={fit.flagged}')


# -- convergence ------------------------------------------------------------

def run_convergence(ctx: RunContext) -> RunOutcome:
    params = ctx.params
    if params.mode == 'self':
        stepper = StepperConfig(ctx.stepper.dt, ctx.stepper.t_end)
        report, traces = diagnostics.self_convergence(ctx.problem, stepper, params.levels, ctx.workers)
        gap_ok = True
    else:
        reference_dt = params.reference_dt or min(params.dts) / 4.0
        reference = oracles.method_of_steps_rk4(ctx.problem, ctx.stepper.t_end, reference_dt)
        report, traces = diagnostics.reference_convergence(ctx.problem, params.dts, ctx.stepper.t_end,
                                                           reference, ctx.workers)
        gap_ok = report.gaps[-1] <= params.gap_max
    completed = all(trace.completed for trace in traces)
    orders = [o for o in report.orders if math.isfinite(o)]
    order_ok = len(orders) == len(report.orders) and min(orders) >= params.order_min
    passed = completed and gap_ok and order_ok

    order_column = [''] + [trace_io.fmt(o) for o in report.orders]
    rows = [[trace_io.fmt(dt), trace_io.fmt(gap), order]
            for dt, gap, order in zip(report.dts, report.gaps, order_column)]
    artifact = trace_io.write_table(ctx.path('convergence.csv'), ['dt', 'gap', 'order'], rows)
    record = ctx.record(mode=params.mode, dts=report.dts, gaps=report.gaps, orders=report.orders,
                        order_min=params.order_min, status=[t.status for t in traces], passed=passed)
    shown = min(orders) if orders else math.nan
    return RunOutcome(ctx.subcommand, passed, [record], [artifact],
                      f'min_order={shown:.3f} last_gap={report.gaps[-1]:.3e}')


RUNNERS: Dict[str, Callable[[RunContext], RunOutcome]] = {
    'simulate': run_simulate,
    'energy-check': run_energy_check,
    'dissipativity': run_dissipativity,
    'quasi-stability': run_quasi_stability,
    'lipschitz': run_lipschitz,
    'residual': run_residual,
    'ode-stability': run_ode_stability,
    'attractor-dim': run_attractor_dim,
    'attraction-rate': run_attraction_rate,
    'convergence': run_convergence,
}


def run(subcommand: str, config: ExperimentConfig, out_dir: str, workers: int = 1) -> RunOutcome:
    """Run one subcommand against a validated config; artifacts land in out_dir."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigurationError(f"unknown subcommand '{subcommand}'")
    if config.subcommand not in (subcommand, 'simulate'):
        logger.info("config '%s' was written for %s, running %s", config.name,
                    config.subcommand, subcommand)
    os.makedirs(out_dir, exist_ok=True)
    basis = config.build_basis()
    problem = config.build_problem(basis)
    ctx = RunContext(subcommand, config, out_dir, max(1, int(workers)), basis, problem,
                     config.stepper_config(basis))

    logger.info('run started', extra={'subcommand': subcommand, 'config': config.name})
    outcome = RUNNERS[subcommand](ctx)
    outcome.artifacts.append(trace_io.write_records(ctx.path(f'{subcommand}.jsonl'), outcome.records))
    if outcome.passed:
        logger.info('run passed', extra={'subcommand': subcommand, 'headline': outcome.headline})
    else:
        logger.error('tolerance check failed',
                     extra={'subcommand': subcommand, 'headline': outcome.headline})
    return outcome
