# -*- coding: utf-8 -*-

"""Synthetic LiDAR, point clustering and ellipse fitting.

Obstacles are ray-cast as ellipses or rectangles. Hit points are grouped with single-linkage clustering and each
cluster is summarized by a conic

    a x^2 + b x y + c y^2 + d x + e y + f = 0

found with the ellipse-specific direct least squares method. The stable variant splits the scatter matrix into
quadratic and linear blocks and only ever inverts the well conditioned linear block, leaving a 3x3 eigenproblem.
A multiple linear regression fit with ``f`` pinned to ``-1`` is kept as a baseline.

This module also holds the measurement types shared by the trackers.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage

from .constants import (
    CLUSTER_EPS, LIDAR_BEAMS, LIDAR_COVARIANCE, LIDAR_FOV, LIDAR_MAX_RANGE, LIDAR_NOISE_SIGMA,
    MIN_CLUSTER_POINTS,
)
from .exceptions import FitDegenerateError, FitFailedError, NotAnEllipseError

__all__ = [
    'SensorSource',
    'Measurement',
    'AisMessage',
    'LidarConfig',
    'EllipseShape',
    'RectangleShape',
    'LidarScan',
    'PointCluster',
    'EllipseParams',
    'beam_angles',
    'simulate_scan',
    'segment_scan',
    'cluster_points',
    'constraint_matrix',
    'design_matrix',
    'fit_ellipse_stable',
    'fit_ellipse_mlr',
    'ellipse_to_measurement',
    'sample_ellipse',
    'benchmark_fits',
]

logger = logging.getLogger(__name__)


class SensorSource(enum.Enum):
    """Origin of a position measurement."""

    AIS = 'AIS'
    LIDAR = 'LIDAR'
    FUSED = 'FUSED'


@dataclass(frozen=True, eq=False)
class Measurement:
    """A position measurement with its covariance."""

    source: SensorSource
    z: np.ndarray
    R: np.ndarray
    stamp: float
    vessel_id: Optional[str] = None
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(2)
        r = np.array(self.R, dtype=float).reshape(2, 2)
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError('measurement covariance must be symmetric')
        try:
            np.linalg.cholesky(r)
        except np.linalg.LinAlgError:
            raise ValueError('measurement covariance must be positive definite') from None
        object.__setattr__(self, 'z', z)
        object.__setattr__(self, 'R', r)
        if self.velocity is not None:
            object.__setattr__(self, 'velocity', np.array(self.velocity, dtype=float).reshape(2))


@dataclass(frozen=True)
class AisMessage:
    """A simplified AIS position report.

    ``course`` is measured counter-clockwise from the x-axis in radians.
    """

    stamp: float
    vessel_id: str
    x: float
    y: float
    speed: float
    course: float

    @property
    def velocity(self) -> np.ndarray:
        """Return the reported velocity vector."""
        return self.speed * np.array([math.cos(self.course), math.sin(self.course)])

    def to_measurement(self, covariance: Union[float, np.ndarray]) -> Measurement:
        """Convert to a measurement with the given position covariance."""
        r = covariance * np.eye(2) if np.isscalar(covariance) else covariance
        return Measurement(
            source=SensorSource.AIS,
            z=np.array([self.x, self.y]),
            R=r,
            stamp=self.stamp,
            vessel_id=self.vessel_id,
            velocity=self.velocity,
        )


@dataclass(frozen=True)
class LidarConfig:
    """Geometry and noise of the planar LiDAR."""

    fov: float = LIDAR_FOV
    beam_count: int = LIDAR_BEAMS
    max_range: float = LIDAR_MAX_RANGE
    noise_sigma: float = LIDAR_NOISE_SIGMA
    cluster_eps: float = CLUSTER_EPS
    min_points: int = MIN_CLUSTER_POINTS

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError('beam_count must be at least 1')
        if not self.max_range > 0:
            raise ValueError('max_range must be positive')
        if self.noise_sigma < 0:
            raise ValueError('noise_sigma must be non-negative')
        if not 0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError('fov must lie in (0, 2 pi]')
        if not self.cluster_eps > 0:
            raise ValueError('cluster_eps must be positive')
        if self.min_points < 6:
            raise ValueError('min_points must be at least 6, the size of the smallest ellipse fit')


def _local_frame(center: np.ndarray, orientation: float, origin: np.ndarray, directions: np.ndarray):
    c, s = math.cos(orientation), math.sin(orientation)
    rot_t = np.array([[c, s], [-s, c]])
    return rot_t @ (origin - center), directions @ rot_t.T


@dataclass(frozen=True, eq=False)
class EllipseShape:
    """An elliptical obstacle outline. Equal semi-axes give a disc."""

    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    orientation: float = 0.0

    @classmethod
    def disc(cls, center: Sequence[float], radius: float) -> EllipseShape:
        """Build a disc."""
        return cls(center=(float(center[0]), float(center[1])), semi_axes=(radius, radius))

    @property
    def bounding_radius(self) -> float:
        """Return the radius of the smallest centered disc containing the shape."""
        return float(max(self.semi_axes))

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Return the distance along each unit direction to the outline, NaN when the ray misses."""
        p, d = _local_frame(np.asarray(self.center, dtype=float), self.orientation, origin, directions)
        scale = np.asarray(self.semi_axes, dtype=float)
        p, d = p / scale, d / scale
        qa = np.einsum('ij,ij->i', d, d)
        qb = 2.0 * d @ p
        qc = p @ p - 1.0
        disc = qb ** 2 - 4.0 * qa * qc
        with np.errstate(invalid='ignore'):
            root = np.sqrt(disc)
            near = (-qb - root) / (2.0 * qa)
            far = (-qb + root) / (2.0 * qa)
        t = np.where(near > 0, near, far)
        return np.where((disc >= 0) & (t > 0), t, np.nan)


@dataclass(frozen=True, eq=False)
class RectangleShape:
    """A rectangular obstacle outline."""

    center: Tuple[float, float]
    half_extents: Tuple[float, float]
    orientation: float = 0.0

    @property
    def bounding_radius(self) -> float:
        """Return the half-diagonal."""
        return float(math.hypot(*self.half_extents))

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Return the distance along each unit direction to the outline, NaN when the ray misses."""
        p, d = _local_frame(np.asarray(self.center, dtype=float), self.orientation, origin, directions)
        h = np.asarray(self.half_extents, dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            t1 = (-h - p) / d
            t2 = (h - p) / d
        parallel = d == 0
        inside = np.abs(p) <= h
        t_low = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        t_high = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = t_low.max(axis=1)
        t_far = t_high.min(axis=1)
        t = np.where(t_near > 0, t_near, t_far)
        return np.where((t_far >= t_near) & (t > 0), t, np.nan)


Shape = Union[EllipseShape, RectangleShape]


@dataclass(frozen=True, eq=False)
class LidarScan:
    """One LiDAR sweep. Missed beams hold NaN ranges."""

    sensor_pose: Tuple[float, float, float]
    angles: np.ndarray
    ranges: np.ndarray
    max_range: float
    noise_sigma: float
    stamp: float = 0.0

    @property
    def hits(self) -> np.ndarray:
        """Return a mask of beams that returned a range."""
        return np.isfinite(self.ranges)

    @property
    def world_angles(self) -> np.ndarray:
        """Return the beam bearings in the world frame."""
        return self.sensor_pose[2] + self.angles

    def hit_indices(self) -> np.ndarray:
        """Return the indices of the beams that hit something."""
        return np.flatnonzero(self.hits)

    def hit_points(self) -> np.ndarray:
        """Return the world-frame hit points with shape ``(n_hits, 2)``."""
        idx = self.hit_indices()
        bearings = self.world_angles[idx]
        r = self.ranges[idx]
        x, y = self.sensor_pose[0], self.sensor_pose[1]
        return np.column_stack([x + r * np.cos(bearings), y + r * np.sin(bearings)])

    def distances(self) -> np.ndarray:
        """Return per-beam distances, with misses reported at the maximum range."""
        return np.where(self.hits, self.ranges, self.max_range)


@dataclass(frozen=True, eq=False)
class PointCluster:
    """World-frame points believed to belong to one target."""

    points: np.ndarray
    source_scan_time: float = 0.0
    beam_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, 'points', np.asarray(self.points, dtype=float).reshape(-1, 2))

    def __len__(self) -> int:
        return self.points.shape[0]


def beam_angles(config: LidarConfig) -> np.ndarray:
    """Return the beam angles relative to the heading, strictly increasing and evenly spaced."""
    n = config.beam_count
    if n == 1:
        return np.zeros(1)
    if config.fov >= 2.0 * math.pi - 1e-12:
        return -math.pi + 2.0 * math.pi / n * np.arange(n)
    return np.linspace(-config.fov / 2.0, config.fov / 2.0, n)


def simulate_scan(
    sensor_pose: Sequence[float],
    obstacles: Sequence[Shape],
    config: Optional[LidarConfig] = None,
    rng: Optional[np.random.Generator] = None,
    stamp: float = 0.0,
) -> LidarScan:
    """Ray-cast one LiDAR sweep against obstacle outlines.

    :param sensor_pose: The sensor ``(x, y, psi)`` in the world frame
    :param obstacles: The obstacle outlines
    :param config: The LiDAR configuration
    :param rng: The generator for range noise. One draw is made per beam, hit or miss.
    :param stamp: The scan time
    """
    config = config or LidarConfig()
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))

    x, y, psi = (float(value) for value in sensor_pose)
    angles = beam_angles(config)
    bearings = psi + angles
    directions = np.column_stack([np.cos(bearings), np.sin(bearings)])
    origin = np.array([x, y])

    ranges = np.full(angles.shape, np.inf)
    for shape in obstacles:
        ranges = np.fmin(ranges, shape.intersect(origin, directions))

    noise = rng.normal(0.0, 1.0, size=angles.shape) * config.noise_sigma
    hit = ranges <= config.max_range
    noisy = np.clip(ranges + noise, np.finfo(float).tiny, config.max_range)
    return LidarScan(
        sensor_pose=(x, y, psi),
        angles=angles,
        ranges=np.where(hit, noisy, np.nan),
        max_range=config.max_range,
        noise_sigma=config.noise_sigma,
        stamp=stamp,
    )


def segment_scan(
    scan: LidarScan,
    eps: float = CLUSTER_EPS,
    min_points: int = MIN_CLUSTER_POINTS,
) -> Tuple[List[PointCluster], List[PointCluster]]:
    """Split the hit points of a scan into single-linkage clusters.

    :return: The clusters with at least ``min_points`` points and the remaining unfittable clusters, each
        ordered by their first beam index
    """
    if not eps > 0:
        raise ValueError(f'eps must be positive, got {eps}')

    points = scan.hit_points()
    indices = scan.hit_indices()
    if points.shape[0] == 0:
        return [], []
    if points.shape[0] == 1:
        labels = np.ones(1, dtype=int)
    else:
        labels = fcluster(linkage(points, method='single'), t=eps, criterion='distance')

    clusters = []
    for label in np.unique(labels):
        mask = labels == label
        clusters.append(PointCluster(points=points[mask], source_scan_time=scan.stamp, beam_indices=indices[mask]))
    clusters.sort(key=lambda cluster: int(cluster.beam_indices[0]))

    fittable = [cluster for cluster in clusters if len(cluster) >= min_points]
    unfittable = [cluster for cluster in clusters if len(cluster) < min_points]
    return fittable, unfittable


def cluster_points(
        scan: LidarScan,
        eps: float = CLUSTER_EPS,
        min_points: int = MIN_CLUSTER_POINTS,
) -> List[PointCluster]:
    """Cluster the hit points of a scan, discarding clusters too small to fit."""
    fittable, unfittable = segment_scan(scan, eps=eps, min_points=min_points)
    if unfittable:
        logger.debug('t=%.1f: %d unfittable clusters discarded', scan.stamp, len(unfittable))
    return fittable


@dataclass(frozen=True, eq=False)
class EllipseParams:
    """A fitted ellipse.

    ``coeffs`` are normalized so that ``4ac - b^2 = 1``. ``semi_axes`` is ordered major first and
    ``orientation`` is the major-axis direction in ``[0, pi)``.
    """

    coeffs: np.ndarray
    center: np.ndarray
    semi_axes: np.ndarray
    orientation: float
    residual_rms: float = 0.0
    eigenvalue: Optional[float] = None
    positive_eigenvalues: Optional[int] = None
    method: str = 'stable'

    @property
    def discriminant(self) -> float:
        """Return ``b^2 - 4ac``, negative for every ellipse."""
        a, b, c = self.coeffs[:3]
        return float(b * b - 4.0 * a * c)

    @property
    def radius(self) -> float:
        """Return the semi-major axis."""
        return float(self.semi_axes[0])


def constraint_matrix() -> np.ndarray:
    """Return the 6x6 matrix C with ``a^T C a = 4ac - b^2``."""
    c = np.zeros((6, 6))
    c[0, 2] = c[2, 0] = 2.0
    c[1, 1] = -1.0
    return c


def design_matrix(points: np.ndarray) -> np.ndarray:
    """Return the rows ``(x^2, xy, y^2, x, y, 1)`` for each point."""
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])


def _as_points(cluster: Union[PointCluster, np.ndarray]) -> np.ndarray:
    if isinstance(cluster, PointCluster):
        return cluster.points
    return np.asarray(cluster, dtype=float).reshape(-1, 2)


def _normalize(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    if points.shape[0] < MIN_CLUSTER_POINTS:
        raise FitDegenerateError(f'{points.shape[0]} points, at least {MIN_CLUSTER_POINTS} required')
    if not np.all(np.isfinite(points)):
        raise FitDegenerateError('points must be finite')
    mean = points.mean(axis=0)
    centered = points - mean
    scale = math.sqrt(float(np.mean(np.sum(centered ** 2, axis=1))))
    if scale == 0 or np.linalg.matrix_rank(np.column_stack([centered / scale, np.ones(len(points))])) < 3:
        raise FitDegenerateError('points are collinear')
    return centered / scale, mean, scale


def _denormalize(coeffs: np.ndarray, mean: np.ndarray, scale: float) -> np.ndarray:
    """Map a conic fitted in centered, scaled coordinates back to world coordinates."""
    a, b, c, d, e, f = coeffs
    mx, my = mean
    s = scale
    return np.array([
        a,
        b,
        c,
        -2.0 * a * mx - b * my + d * s,
        -b * mx - 2.0 * c * my + e * s,
        a * mx * mx + b * mx * my + c * my * my - d * s * mx - e * s * my + f * s * s,
    ])


def _conic_geometry(coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Return center, semi-axes (major first) and orientation of an ellipse conic."""
    a, b, c, d, e, f = coeffs
    det = b * b - 4.0 * a * c
    if det >= 0:
        raise NotAnEllipseError(f'b^2 - 4ac = {det:.3g} is not negative')
    x0 = (2.0 * c * d - b * e) / det
    y0 = (2.0 * a * e - b * d) / det
    f0 = f + 0.5 * (d * x0 + e * y0)
    q = np.array([[a, b / 2.0], [b / 2.0, c]])
    if a < 0:
        q, f0 = -q, -f0
    eigenvalues, eigenvectors = np.linalg.eigh(q)
    if f0 >= 0:
        raise FitFailedError('conic describes an empty ellipse')
    axes = np.sqrt(-f0 / eigenvalues)
    # eigh sorts ascending, so the smallest eigenvalue gives the major axis
    major = eigenvectors[:, 0]
    if math.isclose(axes[0], axes[1], rel_tol=1e-12):
        orientation = 0.0
    else:
        orientation = math.atan2(major[1], major[0]) % math.pi
    return np.array([x0, y0]), axes, orientation


def _sampson_rms(coeffs: np.ndarray, points: np.ndarray) -> float:
    a, b, c, d, e, _ = coeffs
    x, y = points[:, 0], points[:, 1]
    value = design_matrix(points) @ coeffs
    gx = 2.0 * a * x + b * y + d
    gy = b * x + 2.0 * c * y + e
    grad = np.hypot(gx, gy)
    with np.errstate(divide='ignore', invalid='ignore'):
        dist = np.where(grad > 0, value / grad, 0.0)
    return float(np.sqrt(np.mean(dist ** 2)))


def _build_params(
    normalized: np.ndarray,
    points: np.ndarray,
    mean: np.ndarray,
    scale: float,
    method: str,
    eigenvalue: Optional[float] = None,
    positive_eigenvalues: Optional[int] = None,
) -> EllipseParams:
    center, axes, orientation = _conic_geometry(normalized)
    return EllipseParams(
        coeffs=_denormalize(normalized, mean, scale),
        center=mean + scale * center,
        semi_axes=scale * axes,
        orientation=orientation,
        residual_rms=scale * _sampson_rms(normalized, (points - mean) / scale),
        eigenvalue=eigenvalue,
        positive_eigenvalues=positive_eigenvalues,
        method=method,
    )


def fit_ellipse_stable(cluster: Union[PointCluster, np.ndarray]) -> EllipseParams:
    """Fit an ellipse with the numerically stable direct least squares method.

    The scatter matrix is split into quadratic and linear blocks. The linear coefficients are eliminated with
    ``a2 = -S3^-1 S2^T a1`` and the remaining 3x3 problem ``C1^-1 (S1 + S2 T) a1 = lambda a1`` is solved; the
    eigenvector with ``4 a c - b^2 > 0`` is the ellipse.

    :param cluster: The cluster or an ``(n, 2)`` array of points
    :raises FitDegenerateError: if there are fewer than 6 points or they are collinear
    :raises FitFailedError: if no eigenvector describes an ellipse
    """
    points = _as_points(cluster)
    normalized, mean, scale = _normalize(points)

    design = design_matrix(normalized)
    if np.linalg.matrix_rank(design) < 5:
        raise FitDegenerateError('design matrix has rank below 5')
    d1, d2 = design[:, :3], design[:, 3:]
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    t = -np.linalg.solve(s3, s2.T)
    reduced = s1 + s2 @ t
    c1_inv = np.array([[0.0, 0.0, 0.5], [0.0, -1.0, 0.0], [0.5, 0.0, 0.0]])
    eigenvalues, eigenvectors = np.linalg.eig(c1_inv @ reduced)
    eigenvalues, eigenvectors = eigenvalues.real, eigenvectors.real

    conditions = 4.0 * eigenvectors[0] * eigenvectors[2] - eigenvectors[1] ** 2
    candidates = np.flatnonzero(conditions > 0)
    if candidates.size == 0:
        raise FitFailedError('no eigenvector satisfies 4ac - b^2 > 0')
    best = candidates[np.argmin(eigenvalues[candidates])]

    a1 = eigenvectors[:, best] / math.sqrt(conditions[best])
    coeffs = np.concatenate([a1, t @ a1])
    if coeffs[0] + coeffs[2] < 0:
        coeffs = -coeffs

    return _build_params(
        coeffs, points, mean, scale,
        method='stable',
        eigenvalue=float(eigenvalues[best]) * scale ** 4,
        positive_eigenvalues=int(candidates.size),
    )


def fit_ellipse_mlr(cluster: Union[PointCluster, np.ndarray]) -> EllipseParams:
    """Fit a conic by ordinary least squares with ``f`` pinned to ``-1``.

    The pin is applied in centered, scaled coordinates, where the conic cannot pass through the origin for
    any cluster that surrounds its centroid.

    :raises FitDegenerateError: if there are fewer than 6 points or they are collinear
    :raises NotAnEllipseError: if the fitted conic is not an ellipse
    """
    points = _as_points(cluster)
    normalized, mean, scale = _normalize(points)
    design = design_matrix(normalized)[:, :5]
    theta, *_ = np.linalg.lstsq(design, np.ones(len(design)), rcond=None)
    coeffs = np.append(theta, -1.0)

    det = coeffs[1] ** 2 - 4.0 * coeffs[0] * coeffs[2]
    if det >= 0:
        raise NotAnEllipseError(f'b^2 - 4ac = {det:.3g} is not negative')
    coeffs = coeffs / math.sqrt(-det)
    if coeffs[0] + coeffs[2] < 0:
        coeffs = -coeffs
    return _build_params(coeffs, points, mean, scale, method='mlr')


def ellipse_to_measurement(
    ellipse: EllipseParams,
    t: float,
    base_covariance: Union[float, np.ndarray] = LIDAR_COVARIANCE,
    sigma_ref: float = LIDAR_NOISE_SIGMA,
) -> Measurement:
    """Turn a fitted ellipse into a LiDAR position measurement of its center.

    The base covariance is scaled by ``max(1, (rms / sigma_ref)^2)`` so clusters that fit poorly count less.
    """
    base = base_covariance * np.eye(2) if np.isscalar(base_covariance) else np.asarray(base_covariance)
    factor = max(1.0, (ellipse.residual_rms / sigma_ref) ** 2) if sigma_ref > 0 else 1.0
    return Measurement(source=SensorSource.LIDAR, z=ellipse.center.copy(), R=factor * base, stamp=t)


def sample_ellipse(
    center: Sequence[float],
    semi_axes: Sequence[float],
    orientation: float,
    n: int = 100,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    arc: Tuple[float, float] = (0.0, 2.0 * math.pi),
) -> np.ndarray:
    """Sample ``n`` points on an ellipse outline, optionally with isotropic Gaussian noise."""
    theta = np.linspace(arc[0], arc[1], n, endpoint=(arc[1] - arc[0]) < 2.0 * math.pi)
    local = np.column_stack([semi_axes[0] * np.cos(theta), semi_axes[1] * np.sin(theta)])
    c, s = math.cos(orientation), math.sin(orientation)
    points = local @ np.array([[c, s], [-s, c]]) + np.asarray(center, dtype=float)
    if noise_sigma > 0:
        rng = rng or np.random.Generator(np.random.Philox(0))
        points = points + rng.normal(0.0, noise_sigma, size=points.shape)
    return points


def benchmark_fits(
    trials: int = 200,
    noise_sigma: float = LIDAR_NOISE_SIGMA,
    seed: int = 0,
    n_points: int = 100,
    arc: Tuple[float, float] = (0.0, 2.0 * math.pi),
) -> pd.DataFrame:
    """Compare the stable and regression fits on seeded noisy samples of a known ellipse.

    :return: One row per method with success rate, mean center error, mean axis error and mean time
    """
    center, axes, orientation = np.array([3.0, -2.0]), np.array([10.0, 4.0]), math.radians(30.0)
    rng = np.random.Generator(np.random.Philox(seed))
    samples = [
        sample_ellipse(center, axes, orientation, n=n_points, noise_sigma=noise_sigma, rng=rng, arc=arc)
        for _ in range(trials)
    ]

    rows = []
    for method, fit in (('stable', fit_ellipse_stable), ('mlr', fit_ellipse_mlr)):
        center_errors, axis_errors, elapsed = [], [], []
        for points in samples:
            start = time.perf_counter()
            try:
                ellipse = fit(points)
            except (FitDegenerateError, FitFailedError, NotAnEllipseError):
                continue
            finally:
                elapsed.append(time.perf_counter() - start)
            center_errors.append(np.linalg.norm(ellipse.center - center))
            axis_errors.append(np.abs(ellipse.semi_axes - axes).max())
        rows.append({
            'method': method,
            'trials': trials,
            'success_rate': len(center_errors) / trials if trials else 0.0,
            'center_error_mean': float(np.mean(center_errors)) if center_errors else float('nan'),
            'axis_error_mean': float(np.mean(axis_errors)) if axis_errors else float('nan'),
            'time_ms_mean': 1e3 * float(np.mean(elapsed)) if elapsed else float('nan'),
        })
    return pd.DataFrame(rows)
