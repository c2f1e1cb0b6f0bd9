# -*- coding: utf-8 -*-

"""Writes an episode trace as plot-ready CSV tables.

Every table has a fixed column order:

- ``trace.csv``: one row per tick with the state, both inputs, the safety filter status and the rewards. Solver
  timing is left out so that repeated runs write identical bytes.
- ``obstacles.csv``: one row per tick and obstacle with the true and the estimated position.
- ``tube.csv``: the predicted obstacle centers, radii and standard deviations over each tick's horizon.
- ``safe_path.csv``: the safety filter's planned positions over each tick's horizon.
- ``margins.csv``: the clearance beyond ``d_safe`` per tick, flagged where it is negative.
- ``rewards.csv``: the reward components per tick.
- ``summary.csv``: the episode summary as a single row.
"""

import logging
import os
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .simulation import EpisodeSummary, EpisodeTrace, summarize

__all__ = [
    'TRACE_COLUMNS',
    'OBSTACLE_COLUMNS',
    'TUBE_COLUMNS',
    'SAFE_PATH_COLUMNS',
    'MARGIN_COLUMNS',
    'REWARD_COLUMNS',
    'SUMMARY_COLUMNS',
    'trace_df',
    'obstacles_df',
    'tube_df',
    'safe_path_df',
    'margins_df',
    'rewards_df',
    'summary_df',
    'emit_plots',
]

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    't', 'x', 'y', 'psi', 'u', 'v', 'r', 'tau_u_l', 'tau_v_l', 'tau_r_l', 'tau_u', 'tau_v', 'tau_r', 'delta_ratio',
    'status', 'iterations', 'slack_total', 'cte', 'heading_error', 'clearance', 'r_total', 'collision',
]
OBSTACLE_COLUMNS = ['t', 'obstacle_id', 'true_x', 'true_y', 'radius', 'track_id', 'est_x', 'est_y', 'est_sigma']
TUBE_COLUMNS = ['t', 'obstacle', 'k', 'x', 'y', 'radius', 'sigma']
SAFE_PATH_COLUMNS = ['t', 'k', 'x', 'y']
MARGIN_COLUMNS = ['t', 'clearance', 'margin', 'violation']
REWARD_COLUMNS = ['t', 'r_path', 'r_colav', 'r_psf', 'r_total', 'collision']
SUMMARY_COLUMNS = [
    'scenario', 'seed', 'policy', 'psf_enabled', 'info_mode', 'ticks', 'collisions', 'min_distance', 'mean_abs_cte',
    'cumulative_reward', 'intervention_rate', 'infeasible_ticks', 'mean_solve_time_ms',
]

#: Digits written for floats, enough to round-trip doubles
FLOAT_FORMAT = '%.17g'


def trace_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate the per-tick records."""
    rows = []
    for record in trace.records:
        state = record.state
        rows.append((
            record.t, state.x_s, state.y_s, state.psi, state.u, state.v, state.r,
            record.u_l.tau_u, record.u_l.tau_v, record.u_l.tau_r,
            record.u_0.tau_u, record.u_0.tau_v, record.u_0.tau_r,
            record.delta_ratio, record.status, record.iterations, record.slack_total, record.cte,
            record.heading_error, record.clearance, record.r_total, int(record.collision),
        ))
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def obstacles_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate true and estimated obstacle positions."""
    rows = [
        (record.t, o.obstacle_id, o.true_x, o.true_y, o.radius, o.track_id, o.est_x, o.est_y, o.est_sigma)
        for record in trace.records
        for o in record.obstacles
    ]
    return pd.DataFrame(rows, columns=OBSTACLE_COLUMNS)


def tube_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate the obstacle forecasts handed to the safety filter.

    The ``sigma`` column is empty for forecasts that do not come from tracked beliefs.
    """
    rows = []
    for record in trace.records:
        forecast = record.forecast
        if forecast is None:
            continue
        for i in range(len(forecast)):
            for k in range(forecast.steps):
                sigma = forecast.sigmas[i, k] if forecast.sigmas is not None else np.nan
                x, y = forecast.positions[i, k]
                rows.append((record.t, i, k, x, y, forecast.radii[i, k], sigma))
    return pd.DataFrame(rows, columns=TUBE_COLUMNS)


def safe_path_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate the planned vessel positions of every solve."""
    rows = [
        (record.t, k, x, y)
        for record in trace.records
        if record.plan is not None
        for k, (x, y) in enumerate(record.plan)
    ]
    return pd.DataFrame(rows, columns=SAFE_PATH_COLUMNS)


def margins_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate the clearance beyond ``d_safe``; ``violation`` marks exactly the negative margins."""
    clearance = np.array([record.clearance for record in trace.records], dtype=float)
    margin = clearance - trace.d_safe
    return pd.DataFrame({
        't': [record.t for record in trace.records],
        'clearance': clearance,
        'margin': margin,
        'violation': (margin < 0).astype(int),
    }, columns=MARGIN_COLUMNS)


def rewards_df(trace: EpisodeTrace) -> pd.DataFrame:
    """Tabulate the reward components."""
    rows = [
        (record.t, record.r_path, record.r_colav, record.r_psf, record.r_total, int(record.collision))
        for record in trace.records
    ]
    return pd.DataFrame(rows, columns=REWARD_COLUMNS)


def summary_df(trace: EpisodeTrace, summary: Optional[EpisodeSummary] = None) -> pd.DataFrame:
    """Tabulate the summary, computing it from the trace if it is not given."""
    summary = summary or summarize(trace)
    row = dict(
        scenario=trace.scenario_name,
        seed=trace.seed,
        policy=trace.policy,
        psf_enabled=int(trace.psf_enabled),
        info_mode=trace.info_mode,
        **summary.to_dict(),
    )
    return pd.DataFrame([row], columns=SUMMARY_COLUMNS)


def emit_plots(trace: EpisodeTrace, out_dir: str, summary: Optional[EpisodeSummary] = None) -> Dict[str, str]:
    """Write every table of a trace into a directory.

    :param trace: A non-empty episode trace
    :param out_dir: The directory to write into; it is created if needed
    :param summary: The summary to write; recomputed from the trace if not given
    :return: A dictionary from table name to the path written
    :raises ValueError: if the trace is empty
    :raises OSError: if the directory cannot be written
    """
    if not trace.records:
        raise ValueError('cannot emit an empty trace')
    os.makedirs(out_dir, exist_ok=True)
    tables = {
        'trace': trace_df(trace),
        'obstacles': obstacles_df(trace),
        'tube': tube_df(trace),
        'safe_path': safe_path_df(trace),
        'margins': margins_df(trace),
        'rewards': rewards_df(trace),
        'summary': summary_df(trace, summary),
    }
    rv = {}
    for name, df in tables.items():
        path = os.path.join(out_dir, f'{name}.csv')
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.debug('wrote %d rows to %s', len(df), path)
        rv[name] = path
    logger.info('wrote %d tables to %s', len(rv), out_dir)
    return rv
