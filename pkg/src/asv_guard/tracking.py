# -*- coding: utf-8 -*-

"""Constant-velocity Kalman tracking with AIS and LiDAR fusion.

Targets are tracked with the kinematic state ``(x_s, y_s, vx, vy)``. Two ways of combining the sensors are
available:

- ``gaussian_product`` multiplies the prediction with the densities of whichever measurements arrived, which
  reduces to a plain Kalman correction when only one sensor reports;
- ``gain_weighted`` keeps one filter per sensor, each predicted every step and corrected only by its own
  sensor, and blends the two every step with weights built from their latest Kalman gains.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import (
    AIS_COAST_TIMEOUT, AIS_COVARIANCE, COAST_TIMEOUT, CONFIRM_HITS, DEFAULT_TRACK_EXTENT, GATE_THRESHOLD,
    INITIAL_VELOCITY_VARIANCE, LIDAR_COVARIANCE, LIDAR_NOISE_SIGMA, PROCESS_NOISE_Q, TRACK_EXTENT_BOUNDS,
)
from .exceptions import FitError, FusionSingularError, UpdateSingularError
from .perception import (
    AisMessage, Measurement, PointCluster, SensorSource, ellipse_to_measurement, fit_ellipse_stable,
)

__all__ = [
    'KinematicState',
    'TrackBelief',
    'NoiseModel',
    'Correction',
    'TrackingConfig',
    'Track',
    'TrackManager',
    'H',
    'cv_transition',
    'kf_predict',
    'kf_correct',
    'kf_update',
    'fuse_gaussian_product',
    'gain_weights',
    'fuse_gain_weighted',
    'predict_horizon',
    'mahalanobis',
    'track_manager_step',
]

logger = logging.getLogger(__name__)

#: Extracts the position from the kinematic state
H = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
])

FUSION_MODES = ('gaussian_product', 'gain_weighted')

#: Gain of a correction from a prior that knows nothing about the position
FLAT_PRIOR_GAIN = H.T.copy()


@dataclass(frozen=True)
class KinematicState:
    """Position and velocity of a tracked object."""

    x_s: float
    y_s: float
    vx: float
    vy: float

    @classmethod
    def from_array(cls, x: np.ndarray) -> KinematicState:
        """Build a kinematic state from a 4-vector."""
        return cls(*(float(value) for value in x))

    def to_array(self) -> np.ndarray:
        """Return the state as a 4-vector."""
        return np.array([self.x_s, self.y_s, self.vx, self.vy])


@dataclass(frozen=True, eq=False)
class TrackBelief:
    """A Gaussian belief over a kinematic state.

    ``stamp`` is the time the belief describes and ``last_update`` the time of the last correction.
    """

    mean: np.ndarray
    cov: np.ndarray
    stamp: float = 0.0
    last_update: float = 0.0
    track_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'mean', np.array(self.mean, dtype=float).reshape(4))
        object.__setattr__(self, 'cov', np.array(self.cov, dtype=float).reshape(4, 4))

    @property
    def kinematic(self) -> KinematicState:
        """Return the mean as a kinematic state."""
        return KinematicState.from_array(self.mean)

    @property
    def position(self) -> np.ndarray:
        """Return the mean position."""
        return self.mean[:2]

    @property
    def position_cov(self) -> np.ndarray:
        """Return the 2x2 position covariance."""
        return self.cov[:2, :2]


@dataclass(frozen=True)
class NoiseModel:
    """White-noise acceleration process noise with spectral density ``q``."""

    q: float = PROCESS_NOISE_Q

    def __post_init__(self):
        if self.q < 0:
            raise ValueError('process noise density must be non-negative')

    def Q(self, dt: float) -> np.ndarray:  # noqa: N802
        """Return the discrete process noise covariance accumulated over ``dt``."""
        dt3, dt2 = dt ** 3 / 3.0, dt ** 2 / 2.0
        return self.q * np.array([
            [dt3, 0.0, dt2, 0.0],
            [0.0, dt3, 0.0, dt2],
            [dt2, 0.0, dt, 0.0],
            [0.0, dt2, 0.0, dt],
        ])


@dataclass(frozen=True, eq=False)
class Correction:
    """The result of one Kalman correction."""

    belief: TrackBelief
    gain: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def cv_transition(dt: float) -> np.ndarray:
    """Return the constant-velocity transition matrix for a step of ``dt`` seconds."""
    if dt < 0:
        raise ValueError(f'dt must be non-negative, got {dt}')
    a = np.eye(4)
    a[0, 2] = a[1, 3] = dt
    return a


def kf_predict(belief: TrackBelief, dt: float, noise: Optional[NoiseModel] = None) -> TrackBelief:
    """Propagate a belief ``dt`` seconds ahead without a measurement."""
    noise = noise or NoiseModel()
    a = cv_transition(dt)
    return dataclasses.replace(
        belief,
        mean=a @ belief.mean,
        cov=_symmetrize(a @ belief.cov @ a.T + noise.Q(dt)),
        stamp=belief.stamp + dt,
    )


def kf_correct(prior: TrackBelief, measurement: Measurement) -> Correction:
    """Correct a prior with a position measurement, keeping the gain and innovation.

    The covariance is updated in Joseph form.

    :raises UpdateSingularError: if the innovation covariance cannot be inverted
    """
    innovation = measurement.z - H @ prior.mean
    s = _symmetrize(H @ prior.cov @ H.T + measurement.R)
    if not np.all(np.isfinite(s)) or not np.linalg.cond(s) < 1e15:
        raise UpdateSingularError(f'innovation covariance is singular: {s.tolist()}')
    gain = np.linalg.solve(s, H @ prior.cov).T

    i_kh = np.eye(4) - gain @ H
    cov = _symmetrize(i_kh @ prior.cov @ i_kh.T + gain @ measurement.R @ gain.T)
    belief = dataclasses.replace(
        prior,
        mean=prior.mean + gain @ innovation,
        cov=cov,
        last_update=max(prior.last_update, measurement.stamp),
    )
    return Correction(belief=belief, gain=gain, innovation=innovation, innovation_cov=s)


def kf_update(prior: TrackBelief, measurement: Measurement) -> TrackBelief:
    """Correct a prior with a position measurement."""
    return kf_correct(prior, measurement).belief


def _product_measurement(lidar: Measurement, ais: Measurement) -> Measurement:
    """Multiply two position densities into one measurement."""
    info_lidar = np.linalg.inv(lidar.R)
    info_ais = np.linalg.inv(ais.R)
    r = _symmetrize(np.linalg.inv(info_lidar + info_ais))
    z = r @ (info_lidar @ lidar.z + info_ais @ ais.z)
    return Measurement(
        source=SensorSource.FUSED,
        z=z,
        R=r,
        stamp=max(lidar.stamp, ais.stamp),
        vessel_id=ais.vessel_id,
    )


def fuse_gaussian_product(
    prior: TrackBelief,
    lidar: Optional[Measurement] = None,
    ais: Optional[Measurement] = None,
) -> TrackBelief:
    """Fuse whichever of the LiDAR and AIS measurements are present into the prior.

    Without measurements the prior is returned as is. With both, the two measurement densities are multiplied
    first and the product corrects the prior once, which equals two sequential corrections in either order.
    """
    if lidar is None and ais is None:
        return prior
    if ais is None:
        return kf_update(prior, lidar)
    if lidar is None:
        return kf_update(prior, ais)
    return kf_update(prior, _product_measurement(lidar, ais))


def gain_weights(k_ais: np.ndarray, k_lidar: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return the AIS and LiDAR weights built from the position blocks of two Kalman gains.

    :raises FusionSingularError: if the sum of the gains cannot be inverted
    """
    k_ais = np.asarray(k_ais)[:2, :2]
    k_lidar = np.asarray(k_lidar)[:2, :2]
    total = k_ais + k_lidar
    if not np.all(np.isfinite(total)) or not np.linalg.cond(total) < 1e12:
        raise FusionSingularError('sum of Kalman gains is singular')
    inverse = np.linalg.inv(total)
    return k_lidar @ inverse, k_ais @ inverse


def _blend(w_ais: np.ndarray, w_lidar: np.ndarray, ais: TrackBelief, lidar: TrackBelief):
    zero = np.zeros((2, 2))
    big_ais = np.block([[w_ais, zero], [zero, w_ais]])
    big_lidar = np.block([[w_lidar, zero], [zero, w_lidar]])
    mean = big_ais @ ais.mean + big_lidar @ lidar.mean
    cov = big_ais @ ais.cov @ big_ais.T + big_lidar @ lidar.cov @ big_lidar.T
    return mean, _symmetrize(cov)


def fuse_gain_weighted(ais: Correction, lidar: Correction) -> KinematicState:
    """Blend an AIS posterior and a LiDAR posterior with gain-based weights.

    ``W_AIS = K_LiDAR (K_AIS + K_LiDAR)^-1`` and ``W_LiDAR = K_AIS (K_AIS + K_LiDAR)^-1`` act on the position and
    on the velocity of each posterior.
    """
    w_ais, w_lidar = gain_weights(ais.gain, lidar.gain)
    mean, _ = _blend(w_ais, w_lidar, ais.belief, lidar.belief)
    return KinematicState.from_array(mean)


def predict_horizon(
    belief: TrackBelief,
    horizon_steps: int,
    dt: float,
    noise: Optional[NoiseModel] = None,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Predict a belief over a horizon without corrections.

    :return: The ``(mean, cov)`` pairs for steps ``1..horizon_steps``
    """
    if horizon_steps < 1:
        raise ValueError(f'horizon must be at least 1 step, got {horizon_steps}')
    rv = []
    for _ in range(horizon_steps):
        belief = kf_predict(belief, dt, noise)
        rv.append((belief.mean, belief.cov))
    return rv


def mahalanobis(belief: TrackBelief, measurement: Measurement) -> float:
    """Return the squared Mahalanobis distance of a measurement from a belief's predicted position."""
    innovation = measurement.z - belief.position
    s = belief.position_cov + measurement.R
    return float(innovation @ np.linalg.solve(s, innovation))


@dataclass(frozen=True)
class TrackingConfig:
    """Association, lifecycle and fusion settings."""

    q: float = PROCESS_NOISE_Q
    gate: float = GATE_THRESHOLD
    confirm_hits: int = CONFIRM_HITS
    coast_timeout: float = COAST_TIMEOUT
    ais_coast_timeout: float = AIS_COAST_TIMEOUT
    lidar_covariance: float = LIDAR_COVARIANCE
    ais_covariance: float = AIS_COVARIANCE
    sigma_ref: float = LIDAR_NOISE_SIGMA
    initial_velocity_variance: float = INITIAL_VELOCITY_VARIANCE
    fusion: str = 'gaussian_product'

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f'fusion must be one of {FUSION_MODES}, got {self.fusion!r}')
        if self.gate <= 0 or self.confirm_hits < 1 or self.coast_timeout <= 0:
            raise ValueError('gate, confirm_hits and coast_timeout must be positive')

    @property
    def noise(self) -> NoiseModel:
        """Return the process noise model."""
        return NoiseModel(q=self.q)


@dataclass
class Track:
    """A tracked object with its lifecycle bookkeeping.

    In gain-weighted fusion the track also keeps one filter per sensor, each corrected only by its own sensor,
    with the gain of its latest correction. ``belief`` is then their gain-weighted blend.
    """

    track_id: str
    belief: TrackBelief
    hits: int = 1
    confirmed: bool = False
    last_seen: float = 0.0
    ais_id: Optional[str] = None
    extent: float = DEFAULT_TRACK_EXTENT
    ais_belief: Optional[TrackBelief] = None
    lidar_belief: Optional[TrackBelief] = None
    ais_gain: Optional[np.ndarray] = None
    lidar_gain: Optional[np.ndarray] = None

    def timeout(self, config: TrackingConfig) -> float:
        """Return how long the track may coast without a measurement."""
        if self.ais_id is not None:
            return max(config.coast_timeout, config.ais_coast_timeout)
        return config.coast_timeout


def _clamp_extent(radius: float) -> float:
    low, high = TRACK_EXTENT_BOUNDS
    return float(min(max(radius, low), high))


@dataclass
class TrackManager:
    """Associates measurements with tracks and runs their lifecycle. Single writer."""

    config: TrackingConfig = field(default_factory=TrackingConfig)
    tracks: List[Track] = field(default_factory=list)
    next_id: int = 1

    @property
    def gain_weighted(self) -> bool:
        """Return if tracks keep one filter per sensor and blend them."""
        return self.config.fusion == 'gain_weighted'

    def _initial_belief(self, measurement: Measurement, t: float, track_id: str) -> TrackBelief:
        cov = np.zeros((4, 4))
        cov[:2, :2] = measurement.R
        cov[2, 2] = cov[3, 3] = self.config.initial_velocity_variance
        velocity = measurement.velocity if measurement.velocity is not None else np.zeros(2)
        return TrackBelief(
            mean=np.concatenate([measurement.z, velocity]),
            cov=cov,
            stamp=t,
            last_update=t,
            track_id=track_id,
        )

    def _spawn(self, measurement: Measurement, t: float, extent: float = DEFAULT_TRACK_EXTENT) -> Track:
        track_id = f'T{self.next_id}'
        self.next_id += 1
        belief = self._initial_belief(measurement, t, track_id)
        is_ais = measurement.source is SensorSource.AIS
        track = Track(
            track_id=track_id,
            belief=belief,
            hits=1,
            confirmed=self.config.confirm_hits <= 1,
            last_seen=t,
            ais_id=measurement.vessel_id if is_ais else None,
            extent=extent,
        )
        if self.gain_weighted:
            if is_ais:
                track.ais_belief, track.ais_gain = belief, FLAT_PRIOR_GAIN
            else:
                track.lidar_belief, track.lidar_gain = belief, FLAT_PRIOR_GAIN
        logger.debug('t=%.1f: spawned %s from %s at %s', t, track_id, measurement.source.value, measurement.z)
        return track

    def _predict(self, track: Track, t: float) -> None:
        noise = self.config.noise
        track.belief = kf_predict(track.belief, max(0.0, t - track.belief.stamp), noise)
        if track.ais_belief is not None:
            track.ais_belief = kf_predict(track.ais_belief, max(0.0, t - track.ais_belief.stamp), noise)
        if track.lidar_belief is not None:
            track.lidar_belief = kf_predict(track.lidar_belief, max(0.0, t - track.lidar_belief.stamp), noise)
        if self.gain_weighted:
            self._blend_filters(track)

    def _correct_sensor(
        self,
        prior: Optional[TrackBelief],
        measurement: Measurement,
        track_id: str,
    ) -> Tuple[TrackBelief, np.ndarray]:
        """Correct one sensor's filter, starting it from the measurement on its first report."""
        if prior is None:
            return self._initial_belief(measurement, measurement.stamp, track_id), FLAT_PRIOR_GAIN
        correction = kf_correct(prior, measurement)
        return correction.belief, correction.gain

    def _blend_filters(self, track: Track) -> None:
        """Set the track belief to the gain-weighted blend of its per-sensor filters."""
        ais, lidar = track.ais_belief, track.lidar_belief
        if ais is None or lidar is None:
            single = lidar if ais is None else ais
            if single is not None:
                track.belief = dataclasses.replace(single, track_id=track.track_id)
            return
        try:
            w_ais, w_lidar = gain_weights(track.ais_gain, track.lidar_gain)
        except FusionSingularError as e:
            single = min((ais, lidar), key=lambda belief: float(np.trace(belief.position_cov)))
            logger.debug('%s: %s, using the %s filter alone', track.track_id, e, 'AIS' if single is ais else 'LiDAR')
            track.belief = dataclasses.replace(single, track_id=track.track_id)
            return
        mean, cov = _blend(w_ais, w_lidar, ais, lidar)
        track.belief = TrackBelief(
            mean=mean,
            cov=cov,
            stamp=max(ais.stamp, lidar.stamp),
            last_update=max(ais.last_update, lidar.last_update),
            track_id=track.track_id,
        )

    def _fuse(self, track: Track, lidar: Optional[Measurement], ais: Optional[Measurement]) -> None:
        if not self.gain_weighted:
            track.belief = fuse_gaussian_product(track.belief, lidar=lidar, ais=ais)
            return
        if ais is not None:
            track.ais_belief, track.ais_gain = self._correct_sensor(track.ais_belief, ais, track.track_id)
        if lidar is not None:
            track.lidar_belief, track.lidar_gain = self._correct_sensor(track.lidar_belief, lidar, track.track_id)
        self._blend_filters(track)

    def _measure_clusters(self, clusters: Iterable[PointCluster], t: float) -> List[Tuple[Measurement, float]]:
        rv = []
        for cluster in clusters:
            try:
                ellipse = fit_ellipse_stable(cluster)
            except FitError as e:
                logger.warning('t=%.1f: dropping cluster of %d points (%s)', t, len(cluster), e)
                continue
            measurement = ellipse_to_measurement(
                ellipse, t, base_covariance=self.config.lidar_covariance, sigma_ref=self.config.sigma_ref,
            )
            rv.append((measurement, _clamp_extent(ellipse.radius)))
        return rv

    def _associate(self, beliefs: Sequence[TrackBelief], measurements: Sequence[Measurement]) -> Dict[int, int]:
        """Globally assign measurements to beliefs inside the gate. Returns measurement index to track index."""
        if not beliefs or not measurements:
            return {}
        cost = np.full((len(measurements), len(beliefs)), 1e9)
        for i, measurement in enumerate(measurements):
            for j, belief in enumerate(beliefs):
                distance = mahalanobis(belief, measurement)
                if distance < self.config.gate:
                    cost[i, j] = distance
        rows, cols = linear_sum_assignment(cost)
        return {
            int(i): int(j)
            for i, j in zip(rows, cols)
            if cost[i, j] < self.config.gate
        }

    def step(self, clusters: Iterable[PointCluster], ais_messages: Iterable[AisMessage], t: float) -> List[Track]:
        """Advance all tracks to ``t`` and fold in this tick's clusters and AIS messages.

        :param clusters: Fittable LiDAR clusters from the scan at ``t``
        :param ais_messages: AIS messages received since the previous step
        :param t: The current time
        :return: The surviving tracks
        """
        for track in self.tracks:
            self._predict(track, t)

        lidar_measurements = self._measure_clusters(clusters, t)
        priors = [track.belief for track in self.tracks]
        lidar_assignment = self._associate(priors, [measurement for measurement, _ in lidar_measurements])

        lidar_for_track: Dict[int, Tuple[Measurement, float]] = {}
        unassigned_lidar = []
        for i, (measurement, extent) in enumerate(lidar_measurements):
            if i in lidar_assignment:
                lidar_for_track[lidar_assignment[i]] = (measurement, extent)
            else:
                unassigned_lidar.append((measurement, extent))

        ais_for_track: Dict[int, Measurement] = {}
        unassigned_ais: Dict[str, Measurement] = {}
        for message in sorted(ais_messages, key=lambda m: (m.stamp, m.vessel_id)):
            measurement = message.to_measurement(self.config.ais_covariance)
            index = self._match_ais(measurement, ais_for_track)
            if index is None:
                unassigned_ais[message.vessel_id] = measurement
            else:
                ais_for_track[index] = measurement
                self.tracks[index].ais_id = message.vessel_id

        for index, track in enumerate(self.tracks):
            lidar, extent = lidar_for_track.get(index, (None, None))
            ais = ais_for_track.get(index)
            if lidar is None and ais is None:
                continue
            self._fuse(track, lidar, ais)
            track.hits += 1
            track.last_seen = t
            if extent is not None:
                track.extent = extent
            if not track.confirmed and track.hits >= self.config.confirm_hits:
                track.confirmed = True
                logger.debug('t=%.1f: confirmed %s', t, track.track_id)

        for measurement, extent in unassigned_lidar:
            self.tracks.append(self._spawn(measurement, t, extent=extent))
        for measurement in unassigned_ais.values():
            self.tracks.append(self._spawn(measurement, t))

        survivors = []
        for track in self.tracks:
            if t - track.last_seen > track.timeout(self.config):
                logger.debug('t=%.1f: dropped %s after coasting since %.1f', t, track.track_id, track.last_seen)
                continue
            survivors.append(track)
        self.tracks = survivors
        return self.tracks

    def _match_ais(self, measurement: Measurement, taken: Dict[int, Measurement]) -> Optional[int]:
        for index, track in enumerate(self.tracks):
            if track.ais_id is not None and track.ais_id == measurement.vessel_id:
                return index

        best, best_distance = None, self.config.gate
        for index, track in enumerate(self.tracks):
            if index in taken or track.ais_id is not None:
                continue
            distance = mahalanobis(track.belief, measurement)
            if distance < best_distance:
                best, best_distance = index, distance
        if best is None:
            logger.info('AIS message from %s at t=%.1f matches no track', measurement.vessel_id, measurement.stamp)
        return best

    def confirmed_tracks(self) -> List[Track]:
        """Return the confirmed tracks."""
        return [track for track in self.tracks if track.confirmed]


def track_manager_step(
    tracks: Sequence[Track],
    clusters: Iterable[PointCluster],
    ais_messages: Iterable[AisMessage],
    t: float,
    config: Optional[TrackingConfig] = None,
) -> List[Track]:
    """Run one association and lifecycle step on copies of ``tracks``."""
    copies = [dataclasses.replace(track) for track in tracks]
    numbers = [int(track.track_id[1:]) for track in copies if track.track_id[1:].isdigit()]
    manager = TrackManager(config=config or TrackingConfig(), tracks=copies, next_id=max(numbers, default=0) + 1)
    return manager.step(clusters, ais_messages, t)
