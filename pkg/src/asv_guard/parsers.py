# -*- coding: utf-8 -*-

"""Readers and writers for the tabular files around a run.

- AIS replay files have the columns ``stamp, vessel_id, x, y, speed, course`` (course counter-clockwise from the
  x-axis, in radians).
- Point-cloud files have the columns ``x, y`` and an optional ``cluster`` label.
- Scan dumps hold one row per beam; missed beams are written as ``MISS``.
"""

import logging
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from .exceptions import FitError
from .perception import AisMessage, EllipseParams, LidarScan, PointCluster, fit_ellipse_mlr, fit_ellipse_stable

__all__ = [
    'AIS_COLUMNS',
    'SCAN_COLUMNS',
    'FIT_COLUMNS',
    'get_ais_replay_df',
    'ais_messages_from_df',
    'get_points_df',
    'clusters_from_df',
    'scan_to_df',
    'write_scan',
    'read_scan',
    'fit_clusters_df',
]

logger = logging.getLogger(__name__)

AIS_COLUMNS = ['stamp', 'vessel_id', 'x', 'y', 'speed', 'course']
SCAN_COLUMNS = ['beam', 'angle', 'range', 'stamp', 'sensor_x', 'sensor_y', 'sensor_psi', 'max_range', 'noise_sigma']
FIT_COLUMNS = [
    'cluster', 'method', 'status', 'n_points', 'center_x', 'center_y', 'semi_major', 'semi_minor', 'orientation',
    'residual_rms', 'eigenvalue', 'positive_eigenvalues',
]
MISS = 'MISS'


def get_ais_replay_df(path: str) -> pd.DataFrame:
    """Read a recorded AIS file, sorted by time and vessel.

    :param path: A CSV file with the AIS columns
    :raises ValueError: if a column is missing
    """
    df = pd.read_csv(path, dtype={'vessel_id': str})
    missing = [column for column in AIS_COLUMNS if column not in df.columns]
    if missing:
        raise ValueError(f'{path} lacks the AIS columns {missing}')
    return df[AIS_COLUMNS].sort_values(['stamp', 'vessel_id'], kind='mergesort').reset_index(drop=True)


def ais_messages_from_df(df: pd.DataFrame) -> List[AisMessage]:
    """Convert AIS rows to messages."""
    return [
        AisMessage(
            stamp=float(row.stamp),
            vessel_id=str(row.vessel_id),
            x=float(row.x),
            y=float(row.y),
            speed=float(row.speed),
            course=float(row.course),
        )
        for row in df.itertuples(index=False)
    ]


def get_points_df(path: str) -> pd.DataFrame:
    """Read a point-cloud file; points without a ``cluster`` column all belong to cluster 0."""
    df = pd.read_csv(path)
    if 'x' not in df.columns or 'y' not in df.columns:
        raise ValueError(f'{path} needs x and y columns')
    if 'cluster' not in df.columns:
        df['cluster'] = 0
    return df[['cluster', 'x', 'y']]


def clusters_from_df(df: pd.DataFrame) -> List[PointCluster]:
    """Group points by their cluster label, in order of first appearance."""
    return [
        PointCluster(points=group[['x', 'y']].to_numpy(dtype=float))
        for _, group in df.groupby('cluster', sort=False)
    ]


def scan_to_df(scan: LidarScan) -> pd.DataFrame:
    """Tabulate a scan, one row per beam."""
    n = scan.angles.size
    x, y, psi = scan.sensor_pose
    return pd.DataFrame({
        'beam': np.arange(n),
        'angle': scan.angles,
        'range': scan.ranges,
        'stamp': np.full(n, scan.stamp),
        'sensor_x': np.full(n, x),
        'sensor_y': np.full(n, y),
        'sensor_psi': np.full(n, psi),
        'max_range': np.full(n, scan.max_range),
        'noise_sigma': np.full(n, scan.noise_sigma),
    }, columns=SCAN_COLUMNS)


def write_scan(scan: LidarScan, path: str) -> None:
    """Write a scan dump."""
    scan_to_df(scan).to_csv(path, index=False, na_rep=MISS)


def read_scan(path: str) -> LidarScan:
    """Read a scan dump written by :func:`write_scan`."""
    df = pd.read_csv(path, na_values=[MISS])
    if df.empty:
        raise ValueError(f'{path} holds no beams')
    first = df.iloc[0]
    return LidarScan(
        sensor_pose=(float(first.sensor_x), float(first.sensor_y), float(first.sensor_psi)),
        angles=df['angle'].to_numpy(dtype=float),
        ranges=df['range'].to_numpy(dtype=float),
        max_range=float(first.max_range),
        noise_sigma=float(first.noise_sigma),
        stamp=float(first.stamp),
    )


def _fit_row(index: int, method: str, n_points: int, ellipse: Optional[EllipseParams], status: str) -> dict:
    row = dict.fromkeys(FIT_COLUMNS, np.nan)
    row.update(cluster=index, method=method, status=status, n_points=n_points)
    if ellipse is not None:
        row.update(
            center_x=float(ellipse.center[0]),
            center_y=float(ellipse.center[1]),
            semi_major=float(ellipse.semi_axes[0]),
            semi_minor=float(ellipse.semi_axes[1]),
            orientation=ellipse.orientation,
            residual_rms=ellipse.residual_rms,
            eigenvalue=ellipse.eigenvalue,
            positive_eigenvalues=ellipse.positive_eigenvalues,
        )
    return row


def fit_clusters_df(clusters: Iterable[PointCluster], methods: Iterable[str] = ('stable', 'mlr')) -> pd.DataFrame:
    """Fit every cluster with each method and tabulate the results.

    Failed fits keep a row whose ``status`` is the error category.
    """
    fitters = {'stable': fit_ellipse_stable, 'mlr': fit_ellipse_mlr}
    methods = list(methods)
    rows = []
    for index, cluster in enumerate(clusters):
        for method in methods:
            try:
                ellipse = fitters[method](cluster)
            except FitError as e:
                logger.info('cluster %d: %s fit failed (%s)', index, method, e)
                rows.append(_fit_row(index, method, len(cluster), None, e.category))
            else:
                rows.append(_fit_row(index, method, len(cluster), ellipse, 'ok'))
    return pd.DataFrame(rows, columns=FIT_COLUMNS)
