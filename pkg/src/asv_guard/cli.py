# -*- coding: utf-8 -*-

"""Command line interface for ASV Guard.

Failures print one JSON line ``{"category": ..., "field": ..., "message": ...}`` on stderr and exit with a code
that depends on the error: 3 for scenario parse errors, 4 for validation errors, 5 for file errors, 6 for aborted
episodes and 1 for any other library error. Usage errors keep click's exit code 2.
"""

import json
import logging
import os
import sys
from functools import wraps
from typing import List, Optional

import click
import yaml

from .constants import DIFFICULTIES, get_output_dir
from .emitters import emit_plots
from .exceptions import (
    AsvGuardError, EpisodeAbortedError, ScenarioError, ScenarioParseError, ScenarioValidationError,
)
from .guidance import PolicyKind
from .manager import Manager
from .parsers import clusters_from_df, fit_clusters_df, get_points_df
from .scenario import dump_scenario, generate_random_scenario, load_scenario
from .simulation import InfoMode, run_batch, run_episode

__all__ = [
    'main',
]

logger = logging.getLogger(__name__)

EXIT_CODES = [
    (ScenarioParseError, 3),
    (ScenarioValidationError, 4),
    (EpisodeAbortedError, 6),
    (AsvGuardError, 1),
]
IO_EXIT_CODE = 5

policy_option = click.option(
    '--policy',
    type=click.Choice([kind.value for kind in PolicyKind]),
    default=PolicyKind.LOS_FOLLOW.value,
    show_default=True,
    help='Scripted policy proposing the inputs',
)
psf_option = click.option('--psf/--no-psf', default=True, show_default=True, help='Filter the proposed inputs')
difficulty_option = click.option(
    '--difficulty',
    type=click.Choice(DIFFICULTIES),
    default='mixed',
    show_default=True,
    help='Obstacle mix of random scenarios',
)


def _info_mode_option(default: InfoMode):
    return click.option(
        '--info-mode',
        type=click.Choice([mode.value for mode in InfoMode]),
        default=default.value,
        show_default=True,
        help='Where the safety filter gets obstacle forecasts from',
    )


def _fail(category: str, message: str, code: int, field: Optional[str] = None):
    click.echo(json.dumps({'category': category, 'field': field, 'message': message}), err=True)
    sys.exit(code)


def _handle_errors(f):
    """Turn library and file errors into a JSON line and an exit code."""
    @wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except AsvGuardError as e:
            code = next(code for cls, code in EXIT_CODES if isinstance(e, cls))
            field = e.field if isinstance(e, ScenarioError) else None
            message = e.message if isinstance(e, ScenarioError) else str(e)
            _fail(e.category, message, code, field=field)
        except OSError as e:
            _fail('io', str(e), IO_EXIT_CODE, field=getattr(e, 'filename', None))

    return wrapped


def _parse_seeds(ctx, param, value: str) -> List[int]:
    """Parse ``A..B`` (inclusive) or a comma separated list of seeds."""
    try:
        if '..' in value:
            start, end = value.split('..')
            seeds = list(range(int(start), int(end) + 1))
        else:
            seeds = [int(seed) for seed in value.split(',')]
    except ValueError:
        raise click.BadParameter(f'expected A..B or a comma separated list, got {value!r}')
    if not seeds:
        raise click.BadParameter('the seed range is empty')
    return seeds


@click.group()
@click.version_option()
@click.option('-v', '--verbose', count=True, help='Log at INFO level, or DEBUG when given twice')
def main(verbose: int):
    """ASV Guard: a predictive safety filter for autonomous surface vessels."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s - %(message)s')


@main.command()
@click.argument('scenario_path', required=False, type=click.Path(dir_okay=False))
@click.option('--random', 'random_seed', type=int, help='Generate a random scenario from this seed instead')
@difficulty_option
@psf_option
@policy_option
@_info_mode_option(InfoMode.TRACKED)
@click.option('-o', '--out', type=click.Path(file_okay=False), help='Output directory [default: ASV_GUARD_OUTPUT_DIR]')
@_handle_errors
def run(
    scenario_path: Optional[str],
    random_seed: Optional[int],
    difficulty: str,
    psf: bool,
    policy: str,
    info_mode: str,
    out: Optional[str],
):
    """Run one episode and write its trace tables."""
    if scenario_path is not None and random_seed is not None:
        raise click.UsageError('give either a scenario file or --random, not both')
    if random_seed is not None:
        scenario = generate_random_scenario(random_seed, difficulty)
    else:
        scenario = load_scenario(scenario_path)

    out = out or os.path.join(get_output_dir(), scenario.name)
    try:
        trace, summary = run_episode(scenario, PolicyKind(policy), psf, InfoMode(info_mode))
    except EpisodeAbortedError as e:
        if e.trace is not None and len(e.trace):
            emit_plots(e.trace, out)
        raise

    emit_plots(trace, out, summary)
    click.echo(json.dumps({'scenario': scenario.name, 'out': out, **summary.to_dict()}, indent=2))


@main.command()
@click.option('--seeds', default='1..50', show_default=True, callback=_parse_seeds, help='Seed range A..B, inclusive')
@difficulty_option
@psf_option
@click.option(
    '--policy',
    type=click.Choice([kind.value for kind in PolicyKind]),
    default=PolicyKind.RANDOM.value,
    show_default=True,
    help='Scripted policy proposing the inputs',
)
@_info_mode_option(InfoMode.GROUND_TRUTH)
@click.option('--workers', type=click.IntRange(min=1), default=1, show_default=True, help='Worker processes')
@click.option('--base', 'base_path', type=click.Path(dir_okay=False, exists=True),
              help='Scenario whose vessel and configuration the random scenarios reuse')
@click.option('-o', '--out', type=click.Path(dir_okay=False), help='Where to write batch.csv')
@click.option('-c', '--connection', help='Store the batch in this database')
@click.option('--store', is_flag=True, help='Store the batch in the default results database')
@_handle_errors
def batch(
    seeds: List[int],
    difficulty: str,
    psf: bool,
    policy: str,
    info_mode: str,
    workers: int,
    base_path: Optional[str],
    out: Optional[str],
    connection: Optional[str],
    store: bool,
):
    """Run random episodes for a range of seeds and tabulate their summaries."""
    base = load_scenario(base_path) if base_path else None
    df = run_batch(
        seeds,
        difficulty=difficulty,
        policy_kind=PolicyKind(policy),
        psf_enabled=psf,
        info_mode=InfoMode(info_mode),
        workers=workers,
        base=base,
    )
    out = out or os.path.join(get_output_dir(), f'batch-{difficulty}-{"psf" if psf else "nopsf"}.csv')
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    df.to_csv(out, index=False)

    if store or connection:
        manager = Manager(connection=connection)
        manager.add_batch(df, difficulty, policy, psf, info_mode)

    totals = {
        'episodes': len(df),
        'collisions': int(df['collisions'].sum()) if 'collisions' in df else 0,
        'episodes_with_collision': int((df['collisions'] > 0).sum()) if 'collisions' in df else 0,
        'aborted': int(df['aborted'].sum()),
        'out': out,
    }
    click.echo(json.dumps(totals, indent=2))


@main.command(name='fit-demo')
@click.argument('points_path', type=click.Path(dir_okay=False, exists=True))
@click.option('--method', 'methods', type=click.Choice(['stable', 'mlr']), multiple=True,
              help='Fitting method, may be given twice [default: both]')
@click.option('-o', '--out', type=click.File('w'), default='-', help='Where to write the fits as CSV')
@_handle_errors
def fit_demo(points_path: str, methods: List[str], out):
    """Fit ellipses to the clusters of a point-cloud file."""
    clusters = clusters_from_df(get_points_df(points_path))
    df = fit_clusters_df(clusters, methods=methods or ('stable', 'mlr'))
    df.to_csv(out, index=False)


@main.command()
@click.argument('scenario_path', type=click.Path(dir_okay=False))
@click.option('--dump', is_flag=True, help='Print the scenario with every default filled in')
@_handle_errors
def validate(scenario_path: str, dump: bool):
    """Check a scenario file against its schema."""
    scenario = load_scenario(scenario_path)
    if dump:
        click.echo(dump_scenario(scenario), nl=False)
    else:
        click.echo(yaml.safe_dump({'valid': True, 'name': scenario.name, 'obstacles': len(scenario.obstacles)},
                                  sort_keys=False), nl=False)


if __name__ == '__main__':
    main()
