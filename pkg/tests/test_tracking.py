# -*- coding: utf-8 -*-

"""Tests for the Kalman tracker, the fusion rules and the track lifecycle."""

import unittest

import numpy as np

from asv_guard.exceptions import FusionSingularError
from asv_guard.perception import AisMessage, EllipseShape, LidarConfig, Measurement, SensorSource, segment_scan, \
    simulate_scan
from asv_guard.tracking import (
    H, NoiseModel, TrackBelief, TrackManager, TrackingConfig, cv_transition, fuse_gain_weighted, fuse_gaussian_product,
    gain_weights, kf_correct, kf_predict, kf_update, mahalanobis, predict_horizon, track_manager_step,
)
from tests.constants import ACCEPTANCE

N_TRAJECTORIES = 5000 if ACCEPTANCE else 1000


def _prior(stamp: float = 0.0) -> TrackBelief:
    return TrackBelief(
        mean=[10.0, -5.0, 1.0, 0.5],
        cov=np.diag([4.0, 4.0, 1.0, 1.0]),
        stamp=stamp,
        last_update=stamp,
    )


def _lidar(z, variance: float = 1.0, stamp: float = 0.0) -> Measurement:
    return Measurement(source=SensorSource.LIDAR, z=z, R=variance * np.eye(2), stamp=stamp)


def _ais(z, variance: float = 25.0, stamp: float = 0.0, vessel_id: str = '257000001') -> Measurement:
    return Measurement(source=SensorSource.AIS, z=z, R=variance * np.eye(2), stamp=stamp, vessel_id=vessel_id)


def _disc_clusters(center, t: float = 0.0):
    config = LidarConfig(noise_sigma=0.0, beam_count=720)
    scan = simulate_scan((0.0, 0.0, 0.0), [EllipseShape.disc(center, 4.0)], config, stamp=t)
    fittable, _ = segment_scan(scan, eps=config.cluster_eps, min_points=config.min_points)
    return fittable


class TestKalmanFilter(unittest.TestCase):
    """Tests the constant-velocity prediction and correction."""

    def test_transition(self):
        """Test the transition moves the position by velocity times dt."""
        a = cv_transition(2.0)
        np.testing.assert_allclose([14.0, 2.0, 2.0, 1.0], a @ [10.0, 0.0, 2.0, 1.0])
        with self.assertRaises(ValueError):
            cv_transition(-0.1)

    def test_process_noise(self):
        """Test the process noise is symmetric, positive definite and scales with q."""
        q = NoiseModel(q=0.5).Q(1.0)
        np.testing.assert_allclose(q, q.T)
        self.assertTrue(np.all(np.linalg.eigvalsh(q) > 0))
        np.testing.assert_allclose(2 * NoiseModel(q=0.25).Q(1.0), q)
        with self.assertRaises(ValueError):
            NoiseModel(q=-1.0)

    def test_predict(self):
        """Test a prediction moves the mean, grows the covariance and advances the stamp."""
        prior = _prior()
        predicted = kf_predict(prior, 2.0, NoiseModel(q=0.1))
        np.testing.assert_allclose([12.0, -4.0, 1.0, 0.5], predicted.mean)
        self.assertEqual(2.0, predicted.stamp)
        self.assertTrue(np.all(np.diag(predicted.position_cov) > np.diag(prior.position_cov)))

    def test_correct_shrinks(self):
        """Test a correction moves toward the measurement and shrinks the position covariance."""
        prior = _prior()
        correction = kf_correct(prior, _lidar([12.0, -5.0], stamp=1.0))
        posterior = correction.belief
        self.assertGreater(posterior.mean[0], prior.mean[0])
        self.assertLess(posterior.mean[0], 12.0)
        self.assertTrue(np.all(np.linalg.eigvalsh(prior.position_cov - posterior.position_cov) > 0))
        self.assertEqual(1.0, posterior.last_update)
        np.testing.assert_allclose([2.0, 0.0], correction.innovation)
        np.testing.assert_allclose(np.diag([5.0, 5.0]), correction.innovation_cov)
        np.testing.assert_allclose(posterior.cov, posterior.cov.T)

    def test_batch_least_squares(self):
        """Test filtering without process noise matches the batch least-squares estimate."""
        rng = np.random.default_rng(11)
        dt, steps = 1.0, 20
        p0, r = 100.0 * np.eye(4), np.eye(2)
        truth = np.array([5.0, -3.0, 1.2, 0.4])
        m0 = truth + rng.normal(0.0, 10.0, size=4)
        noise = NoiseModel(q=0.0)

        belief = TrackBelief(mean=m0, cov=p0)
        information = np.linalg.inv(p0)
        vector = information @ m0
        for k in range(1, steps + 1):
            belief = kf_predict(belief, dt, noise)
            phi = cv_transition(k * dt)
            z = H @ phi @ truth + rng.normal(0.0, 1.0, size=2)
            belief = kf_update(belief, Measurement(source=SensorSource.LIDAR, z=z, R=r, stamp=k * dt))
            information += (H @ phi).T @ np.linalg.inv(r) @ (H @ phi)
            vector += (H @ phi).T @ np.linalg.inv(r) @ z

        initial_cov = np.linalg.inv(information)
        phi = cv_transition(steps * dt)
        np.testing.assert_allclose(phi @ initial_cov @ vector, belief.mean, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(phi @ initial_cov @ phi.T, belief.cov, rtol=1e-8, atol=1e-8)

    def test_mahalanobis(self):
        """Test the squared Mahalanobis distance of a measurement from the prior."""
        prior = _prior()
        self.assertAlmostEqual(0.0, mahalanobis(prior, _lidar(prior.position)))
        self.assertAlmostEqual(4.0 / 5.0, mahalanobis(prior, _lidar([12.0, -5.0])))


class TestFusion(unittest.TestCase):
    """Tests the two ways of fusing LiDAR and AIS."""

    def setUp(self):
        """Build a prior and one measurement per sensor."""
        self.prior = _prior()
        self.lidar = _lidar([11.0, -4.0])
        self.ais = _ais([13.0, -6.0])

    def test_product_equals_sequential(self):
        """Test the product of both densities equals correcting with each in turn, in either order."""
        fused = fuse_gaussian_product(self.prior, lidar=self.lidar, ais=self.ais)
        for first, second in [(self.lidar, self.ais), (self.ais, self.lidar)]:
            sequential = kf_update(kf_update(self.prior, first), second)
            np.testing.assert_allclose(sequential.mean, fused.mean, atol=1e-10)
            np.testing.assert_allclose(sequential.cov, fused.cov, atol=1e-10)

    def test_product_single_sensor(self):
        """Test one sensor alone reduces to a plain Kalman correction."""
        np.testing.assert_allclose(
            kf_update(self.prior, self.lidar).mean, fuse_gaussian_product(self.prior, lidar=self.lidar).mean,
        )
        np.testing.assert_allclose(
            kf_update(self.prior, self.ais).cov, fuse_gaussian_product(self.prior, ais=self.ais).cov,
        )
        self.assertIs(self.prior, fuse_gaussian_product(self.prior))

    def test_product_flat_prior(self):
        """Test two identical measurements on an uninformative prior halve the measurement covariance."""
        flat = TrackBelief(mean=np.zeros(4), cov=1e8 * np.eye(4))
        fused = fuse_gaussian_product(flat, lidar=_lidar([3.0, 4.0], 2.0), ais=_ais([3.0, 4.0], 2.0))
        np.testing.assert_allclose(np.eye(2), fused.position_cov, atol=1e-6)
        np.testing.assert_allclose([3.0, 4.0], fused.mean[:2], rtol=1e-6)

    def test_gain_weights_sum_to_identity(self):
        """Test the AIS and LiDAR weights add up to the identity."""
        k_ais = kf_correct(self.prior, self.ais).gain
        k_lidar = kf_correct(self.prior, self.lidar).gain
        w_ais, w_lidar = gain_weights(k_ais, k_lidar)
        np.testing.assert_allclose(np.eye(2), w_ais + w_lidar, atol=1e-12)

    def test_gain_weights_formula(self):
        """Test each sensor is weighted by the other sensor's gain."""
        k_ais = kf_correct(self.prior, self.ais).gain
        k_lidar = kf_correct(self.prior, self.lidar).gain
        w_ais, w_lidar = gain_weights(k_ais, k_lidar)
        inverse = np.linalg.inv(k_ais[:2, :2] + k_lidar[:2, :2])
        np.testing.assert_allclose(k_lidar[:2, :2] @ inverse, w_ais)
        np.testing.assert_allclose(k_ais[:2, :2] @ inverse, w_lidar)

    def test_gain_weights_singular(self):
        """Test opposite gains are rejected."""
        k = np.eye(4)[:, :2]
        with self.assertRaises(FusionSingularError):
            gain_weights(k, -k)

    def test_gain_weighted_blend(self):
        """Test the blended position lies between the two posteriors."""
        ais = kf_correct(self.prior, self.ais)
        lidar = kf_correct(self.prior, self.lidar)
        blended = fuse_gain_weighted(ais, lidar)
        low = np.minimum(ais.belief.position, lidar.belief.position)
        high = np.maximum(ais.belief.position, lidar.belief.position)
        self.assertTrue(low[0] <= blended.x_s <= high[0])
        self.assertTrue(low[1] <= blended.y_s <= high[1])


class TestPrediction(unittest.TestCase):
    """Tests multi-step prediction."""

    def test_horizon_grows(self):
        """Test the predicted position uncertainty never shrinks."""
        tube = predict_horizon(_prior(), 20, 0.5, NoiseModel(q=0.05))
        self.assertEqual(20, len(tube))
        variances = [np.linalg.eigvalsh(cov[:2, :2]).max() for _, cov in tube]
        self.assertTrue(np.all(np.diff(variances) >= 0))
        np.testing.assert_allclose([20.0, 0.0], tube[-1][0][:2])

    def test_invalid_horizon(self):
        """Test an empty horizon is rejected."""
        with self.assertRaises(ValueError):
            predict_horizon(_prior(), 0, 0.5)

    def test_three_sigma_coverage(self):
        """Test the three sigma band holds the true position in at least 99% of the predicted steps."""
        rng = np.random.default_rng(2024)
        noise, dt, steps = NoiseModel(q=0.05), 0.5, 10
        prior = _prior()
        tube = predict_horizon(prior, steps, dt, noise)
        a = cv_transition(dt)

        states = rng.multivariate_normal(prior.mean, prior.cov, size=N_TRAJECTORIES)
        inside = total = 0
        for mean, cov in tube:
            states = states @ a.T + rng.multivariate_normal(np.zeros(4), noise.Q(dt), size=N_TRAJECTORIES)
            sigma = np.sqrt(np.diag(cov)[:2])
            ok = np.all(np.abs(states[:, :2] - mean[:2]) <= 3 * sigma, axis=1)
            inside += int(ok.sum())
            total += ok.size
        self.assertGreaterEqual(inside / total, 0.99)


class TestTrackManager(unittest.TestCase):
    """Tests association and the track lifecycle."""

    def test_spawn_and_confirm(self):
        """Test a static disc spawns one track that is confirmed after three hits."""
        manager = TrackManager(TrackingConfig(confirm_hits=3))
        for t in (0.0, 1.0):
            manager.step(_disc_clusters((20.0, 0.0), t), [], t)
            self.assertEqual(1, len(manager.tracks))
            self.assertFalse(manager.tracks[0].confirmed)
        manager.step(_disc_clusters((20.0, 0.0), 2.0), [], 2.0)

        self.assertEqual(1, len(manager.tracks))
        track = manager.tracks[0]
        self.assertEqual('T1', track.track_id)
        self.assertTrue(track.confirmed)
        self.assertEqual(3, track.hits)
        np.testing.assert_allclose([20.0, 0.0], track.belief.position, atol=1e-3)
        self.assertAlmostEqual(4.0, track.extent, places=3)
        self.assertEqual([track], manager.confirmed_tracks())

    def test_two_targets(self):
        """Test separate clusters keep separate tracks."""
        manager = TrackManager()
        for t in (0.0, 1.0):
            clusters = _disc_clusters((20.0, 0.0), t) + _disc_clusters((-20.0, 15.0), t)
            manager.step(clusters, [], t)
        self.assertEqual(['T1', 'T2'], sorted(track.track_id for track in manager.tracks))
        self.assertTrue(all(track.hits == 2 for track in manager.tracks))

    def test_coast_and_drop(self):
        """Test a track coasts through missed scans and is dropped after the timeout."""
        manager = TrackManager(TrackingConfig(coast_timeout=5.0))
        manager.step(_disc_clusters((20.0, 0.0)), [], 0.0)
        manager.step([], [], 4.0)
        self.assertEqual(1, len(manager.tracks))
        self.assertEqual(4.0, manager.tracks[0].belief.stamp)
        manager.step([], [], 6.0)
        self.assertEqual([], manager.tracks)

    def test_ais_spawn_and_match(self):
        """Test AIS reports spawn a track and later reports from the same vessel update it."""
        manager = TrackManager()
        first = AisMessage(stamp=0.0, vessel_id='257000001', x=50.0, y=10.0, speed=2.0, course=0.0)
        manager.step([], [first], 0.0)
        self.assertEqual(1, len(manager.tracks))
        track = manager.tracks[0]
        self.assertEqual('257000001', track.ais_id)
        np.testing.assert_allclose([2.0, 0.0], track.belief.mean[2:])

        second = AisMessage(stamp=10.0, vessel_id='257000001', x=70.0, y=10.0, speed=2.0, course=0.0)
        manager.step([], [second], 10.0)
        self.assertEqual(1, len(manager.tracks))
        self.assertEqual(2, manager.tracks[0].hits)
        np.testing.assert_allclose([70.0, 10.0], manager.tracks[0].belief.position, atol=1.0)

    def test_ais_track_coasts_longer(self):
        """Test a track with an AIS identity survives the short LiDAR timeout."""
        config = TrackingConfig(coast_timeout=5.0, ais_coast_timeout=90.0)
        manager = TrackManager(config)
        manager.step([], [AisMessage(0.0, '257000002', 30.0, 0.0, 0.0, 0.0)], 0.0)
        manager.step([], [], 60.0)
        self.assertEqual(1, len(manager.tracks))
        manager.step([], [], 100.0)
        self.assertEqual([], manager.tracks)

    def test_lidar_and_ais_fuse(self):
        """Test an AIS report inside the gate attaches to a LiDAR track."""
        manager = TrackManager()
        manager.step(_disc_clusters((20.0, 0.0)), [], 0.0)
        manager.step(_disc_clusters((20.0, 0.0), 1.0), [AisMessage(1.0, '257000003', 21.0, 0.5, 0.0, 0.0)], 1.0)
        self.assertEqual(1, len(manager.tracks))
        self.assertEqual('257000003', manager.tracks[0].ais_id)

    def _asynchronous(self, fusion: str) -> TrackManager:
        """Track a disc moving along x, seen by LiDAR every second and by an offset AIS report at t=1 only."""
        manager = TrackManager(TrackingConfig(fusion=fusion))
        manager.step(_disc_clusters((20.0, 0.0)), [], 0.0)
        manager.step(_disc_clusters((21.0, 0.0), 1.0), [AisMessage(1.0, '257000004', 21.0, 3.0, 1.0, 0.0)], 1.0)
        manager.step(_disc_clusters((22.0, 0.0), 2.0), [], 2.0)
        return manager

    def test_gain_weighted_keeps_sensor_filters(self):
        """Test each sensor filter is corrected only by its own sensor and the track holds their blend."""
        manager = self._asynchronous('gain_weighted')
        self.assertEqual(1, len(manager.tracks))
        track = manager.tracks[0]
        self.assertEqual('257000004', track.ais_id)
        self.assertEqual(1.0, track.ais_belief.last_update)
        self.assertEqual(2.0, track.lidar_belief.last_update)
        self.assertEqual(2.0, track.ais_belief.stamp)

        w_ais, w_lidar = gain_weights(track.ais_gain, track.lidar_gain)
        expected = w_ais @ track.ais_belief.position + w_lidar @ track.lidar_belief.position
        np.testing.assert_allclose(expected, track.belief.position)

        manager.step([], [], 3.0)
        track = manager.tracks[0]
        self.assertEqual(3.0, track.ais_belief.stamp)
        self.assertEqual(3.0, track.lidar_belief.stamp)
        expected = w_ais @ track.ais_belief.position + w_lidar @ track.lidar_belief.position
        np.testing.assert_allclose(expected, track.belief.position)

    def test_gain_weighted_differs_from_product(self):
        """Test the two fusion modes disagree when the sensors report at different times."""
        product = self._asynchronous('gaussian_product').tracks
        weighted = self._asynchronous('gain_weighted').tracks
        self.assertEqual(1, len(product))
        self.assertIsNone(product[0].ais_belief)
        self.assertIsNone(product[0].lidar_belief)
        self.assertGreater(np.linalg.norm(product[0].belief.position - weighted[0].belief.position), 1e-3)

    def test_functional_step(self):
        """Test the functional step leaves its input tracks untouched."""
        tracks = track_manager_step([], _disc_clusters((20.0, 0.0)), [], 0.0)
        self.assertEqual(1, len(tracks))
        before = tracks[0].belief
        after = track_manager_step(tracks, [], [], 1.0)
        self.assertIs(before, tracks[0].belief)
        self.assertEqual(1.0, after[0].belief.stamp)

    def test_invalid_config(self):
        """Test bad tracking settings are rejected."""
        with self.assertRaises(ValueError):
            TrackingConfig(fusion='average')
        with self.assertRaises(ValueError):
            TrackingConfig(gate=0.0)
