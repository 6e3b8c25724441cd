"""Custom Flask CLI commands.

Separated from root-level app.py to avoid ambiguity between the
`app` package and `app.py` file when registering commands.

One command per experiment subcommand: `<subcommand> CONFIG [--out DIR]`.
Exit status 0 = checks passed, 1 = tolerance failure, 2 = usage/config error.
"""
import logging
import os
from contextlib import contextmanager

import click
from flask import current_app
from flask.cli import FlaskGroup, ScriptInfo, with_appcontext

from app.models import SUBCOMMANDS, ConfigError, bundled_configs, load_config
from app.runner import run
from processing.errors import ConfigurationError, PreconditionError, SimulationError
from processing.trace_io import JsonLinesHandler

EXIT_FAILED = 1

HELP = {
    'simulate': 'Integrate one configuration and write its trace.',
    'energy-check': 'Check the energy equality under step halving.',
    'dissipativity': 'Sweep damping and delay horizon and compare tail radii.',
    'quasi-stability': 'Fit separation rates of trajectory pairs on the absorbing set.',
    'lipschitz': 'Measure Lipschitz ratios of the solution map.',
    'residual': 'Check the interior equation residual under step halving.',
    'ode-stability': 'Rightmost roots and stability switches of the scalar delay equation.',
    'attractor-dim': 'Estimate the correlation dimension of a sampled cloud.',
    'attraction-rate': 'Fit the exponential attraction rate of a trajectory bundle.',
    'convergence': 'Measure the order of convergence of the integrator.',
}


@contextmanager
def event_log(out_dir):
    """Mirror INFO+ records of the app and processing loggers into <out>/events.jsonl."""
    handler = JsonLinesHandler(os.path.join(out_dir, current_app.config['EVENT_LOG_NAME']))
    loggers = [logging.getLogger('app'), logging.getLogger('processing')]
    levels = [lg.level for lg in loggers]
    for lg in loggers:
        lg.addHandler(handler)
        if lg.getEffectiveLevel() > logging.INFO:
            lg.setLevel(logging.INFO)
    try:
        yield handler
    finally:
        for lg, level in zip(loggers, levels):
            lg.removeHandler(handler)
            lg.setLevel(level)
        handler.close()


def default_out_dir(config_path):
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return os.path.join(current_app.config['OUTPUT_FOLDER'], stem)


def make_experiment_command(subcommand):
    @click.command(subcommand, help=HELP[subcommand])
    @click.argument('config_path', metavar='CONFIG',
                    type=click.Path(exists=True, dir_okay=False))
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False),
                  help='Output directory (default: OUTPUT_FOLDER/<config name>).')
    @with_appcontext
    def command(config_path, out_dir):
        try:
            config = load_config(config_path)
        except ConfigError as exc:
            current_app.logger.error('invalid config %s: %s', config_path, exc)
            raise click.BadParameter(str(exc), param_hint='CONFIG') from exc

        out_dir = out_dir or default_out_dir(config_path)
        os.makedirs(out_dir, exist_ok=True)
        with event_log(out_dir):
            try:
                outcome = run(subcommand, config, out_dir, current_app.config['WORKERS'])
            except (ConfigurationError, PreconditionError) as exc:
                current_app.logger.error('%s rejected: %s', subcommand, exc,
                                         extra={'subcommand': subcommand})
                raise click.UsageError(str(exc)) from exc
            except SimulationError as exc:
                current_app.logger.error('%s failed: %s', subcommand, exc,
                                         extra={'subcommand': subcommand})
                click.echo(f'FAIL {subcommand}: {exc}', err=True)
                raise SystemExit(EXIT_FAILED) from exc

        click.echo(f"{'PASS' if outcome.passed else 'FAIL'} {subcommand} {outcome.headline}")
        for path in outcome.artifacts:
            click.echo(f'  {path}')
        if not outcome.passed:
            raise SystemExit(EXIT_FAILED)

    return command


def list_configs(ctx, param, value):
    """Eager --list: print bundled acceptance configs and exit."""
    if not value or ctx.resilient_parsing:
        return
    app = ctx.ensure_object(ScriptInfo).load_app()
    for entry in bundled_configs(app.config['EXPERIMENTS_FOLDER']):
        click.echo(f'{entry.name}\t{entry.subcommand}\t{entry.description}')
    ctx.exit(0)


def register_cli(app):
    for subcommand in SUBCOMMANDS:
        app.cli.add_command(make_experiment_command(subcommand))


def build_cli():
    """Standalone entry point (`python app.py ...`)."""
    from app import create_app

    list_option = click.Option(['--list'], is_flag=True, expose_value=False, is_eager=True,
                               callback=list_configs, help='List bundled acceptance configs.')
    return FlaskGroup(create_app=create_app, add_default_commands=False,
                      params=[list_option],
                      help='Simulator and verification toolkit for delayed evolution equations.')
