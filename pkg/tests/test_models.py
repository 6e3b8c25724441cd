import numpy as np
import pytest

from app.models import (SUBCOMMANDS, ConfigError, bundled_configs, config_dict, dump_config,
                        flatten_messages, load_config, parse_config)

from tests.helpers import EXPERIMENTS

SIGMOID_TERM = """
dynamics:
  horizon: 0.1
  delay:
    terms:
      - law: {kind: sigmoid}
        points:
          - {c: 1.0, sigma: 0.05, at: [0.5]}
"""


def messages_of(text):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    return excinfo.value.messages


def test_documented_defaults():
    config = parse_config('')
    assert config.subcommand == 'simulate'
    assert config.basis.geometry == 'interval'
    assert config.basis.n == 16
    assert config.dynamics.k_damp == 1.0
    assert config.dynamics.horizon == 0.1
    assert config.dynamics.nonlinearity.variant == 'none'
    assert config.stepper.dt == 1e-3
    assert config.lyapunov_sigma == 0.25
    assert config.experiment.params('energy-check').ratio_range == (3.0, 5.0)
    assert config.experiment.params('simulate') is None


def test_scientific_notation_is_read_as_float():
    config = parse_config('stepper:\n  dt: 1e-4\n  t_end: 2\n')
    assert config.stepper.dt == 1e-4
    assert config.stepper.t_end == 2.0


def test_unknown_key_is_rejected_with_its_path():
    messages = messages_of('basis:\n  geometry: interval\n  colour: red\n')
    assert 'basis.colour' in messages


def test_duplicate_key_is_rejected():
    with pytest.raises(ConfigError) as excinfo:
        parse_config('seed: 1\nseed: 2\n')
    assert str(excinfo.value).startswith('line 2, column 1:')
    assert 'found duplicate key' in str(excinfo.value)


def test_yaml_syntax_error_names_a_line():
    with pytest.raises(ConfigError) as excinfo:
        parse_config('basis:\n  p: [2\n')
    assert str(excinfo.value).startswith('line ')


def test_top_level_must_be_a_mapping():
    with pytest.raises(ConfigError):
        parse_config('- 1\n- 2\n')


def test_constant_delay_beyond_horizon():
    text = """
dynamics:
  horizon: 0.1
  delay:
    terms:
      - law: {kind: constant, tau0: 0.5}
"""
    assert 'dynamics.delay.terms.0.law.tau0' in messages_of(text)


def test_constant_law_needs_tau0():
    text = 'dynamics:\n  delay:\n    terms:\n      - law: {kind: constant}\n'
    assert 'dynamics.delay.terms.0.law.tau0' in messages_of(text)


def test_state_dependent_delay_limits_step():
    assert parse_config(SIGMOID_TERM + 'stepper:\n  dt: 0.025\n').stepper.dt == 0.025
    assert 'stepper.dt' in messages_of(SIGMOID_TERM + 'stepper:\n  dt: 0.05\n')


def test_sampling_width_beyond_horizon():
    text = SIGMOID_TERM.replace('sigma: 0.05', 'sigma: 0.2')
    assert 'dynamics.delay.terms.0.points.0.sigma' in messages_of(text)


def test_swept_horizons_must_hold_every_lag():
    sweep = 'experiment:\n  subcommand: dissipativity\n  dissipativity: {h_list: [%s]%s}\n'
    assert parse_config(SIGMOID_TERM + sweep % ('0.1, 0.05', '')).experiment.dissipativity.h_list == (0.1, 0.05)
    messages = messages_of(SIGMOID_TERM + sweep % ('0.1, 0.03', ''))
    assert list(messages) == ['experiment.dissipativity.h_list.1']
    assert 'shorter than the largest lag 0.05' in messages['experiment.dissipativity.h_list.1'][0]
    # halving 0.08 leaves 0.04 < sigma
    messages = messages_of(SIGMOID_TERM + sweep % ('0.08', ', check_halving: true'))
    assert 'experiment.dissipativity.h_list.0' in messages


def test_swept_horizons_limit_the_step():
    text = SIGMOID_TERM.replace('sigma: 0.05', 'sigma: 0.0') + (
        'stepper: {dt: 0.01}\n'
        'experiment:\n  subcommand: dissipativity\n  dissipativity: {h_list: [0.1, 0.02]}\n')
    messages = messages_of(text)
    assert 'exceeds h/4' in messages['experiment.dissipativity.h_list.1'][0]


def test_mode_outside_table():
    text = 'basis:\n  n: 4\ninitial:\n  families:\n    - {mode: 20, a: 1.0}\n'
    messages = messages_of(text)
    assert 'initial.families.0.mode' in messages
    assert 'retained mode table' in messages['initial.families.0.mode'][0]


def test_point_sample_needs_spatial_geometry():
    text = """
basis:
  geometry: ode
  eigenvalues: [1.0]
dynamics:
  delay:
    terms:
      - law: {kind: constant, tau0: 0.05}
        points:
          - {at: [0.5]}
"""
    assert 'dynamics.delay.terms.0.points.0' in messages_of(text)


def test_ode_geometry_needs_eigenvalues():
    assert 'basis.eigenvalues' in messages_of('basis:\n  geometry: ode\n')
    config = parse_config('basis:\n  geometry: ode\n  eigenvalues: [3.0, 1.0]\n')
    assert config.basis.n == 2
    np.testing.assert_allclose(config.build_basis().mu, [1.0, 3.0])


def test_polynomial_needs_odd_degree():
    text = 'dynamics:\n  nonlinearity: {variant: kirchhoff, coefficients: [0.0, 1.0, 2.0]}\n'
    assert 'dynamics.nonlinearity.coefficients' in messages_of(text)


def test_flatten_messages():
    nested = {'basis': {'p': ['bad']}, '_schema': ['top'], 'terms': {0: {'law': ['x', 'y']}}}
    assert flatten_messages(nested) == {'basis.p': ['bad'], '_schema': ['top'],
                                        'terms.0.law': ['x', 'y']}


def test_bundled_configs_parse():
    entries = bundled_configs(EXPERIMENTS)
    assert len(entries) == 15
    assert len({e.name for e in entries}) == len(entries)
    assert {e.subcommand for e in entries} <= set(SUBCOMMANDS)
    assert entries[0].name == 'linear-simulate'


def test_bundled_configs_survive_a_dump():
    for entry in bundled_configs(EXPERIMENTS):
        config = load_config(entry.path)
        assert parse_config(dump_config(config)) == config, entry.name


def test_config_dict_is_plain():
    config = parse_config('initial:\n  families:\n    - {mode: 2, a: 0.5}\n')
    data = config_dict(config)
    assert data['initial']['families'][0]['mode'] == [2]
    assert data['dynamics']['delay'] == {'terms': []}


def test_build_problem(experiment_file):
    config = load_config(experiment_file(
        'basis: {geometry: interval, p: 2, n: 8}\n'
        'dynamics:\n  k_damp: 0.5\n'
        '  delay:\n    terms:\n      - law: {kind: constant, tau0: 0.05}\n'
        '        response: {kind: linear, a: 2.0}\n'
        'initial:\n  families:\n    - {mode: 2, a: 0.1}\n'
        'stepper: {dt: 0.01, t_end: 1.0, traced_modes: [2]}\n'))
    problem = config.build_problem()
    assert problem.basis.size == 8
    assert problem.k_damp == 0.5
    assert len(problem.delay.terms) == 1
    start = problem.initial.state(0.0)
    assert start.u[1] == 0.1
    assert np.count_nonzero(start.u) == 1
    assert config.stepper_config().traced_modes == (1,)


def test_random_history_is_seeded():
    text = 'seed: {seed}\ninitial:\n  random: {{modes: 3, amplitude: 0.5}}\n'
    first = parse_config(text.format(seed=7))
    again = parse_config(text.format(seed=7))
    other = parse_config(text.format(seed=8))
    basis = first.build_basis()

    def u_at(config):
        return config.initial_history(basis).state(-0.05).u

    np.testing.assert_array_equal(u_at(first), u_at(again))
    assert not np.allclose(u_at(first), u_at(other))
    assert np.count_nonzero(u_at(first)[3:]) == 0
