# -*- coding: utf-8 -*-

"""Tests for scenario files and random scenario generation."""

import math
import os
import unittest

import numpy as np
import yaml

from asv_guard.constants import DIFFICULTIES
from asv_guard.exceptions import ScenarioParseError, ScenarioValidationError
from asv_guard.guidance import PathSpec
from asv_guard.safety_filter import PsfConfig
from asv_guard.scenario import (
    DisturbanceProfile, EpisodeConfig, ObstacleScript, Scenario, dump_scenario, generate_random_scenario,
    load_scenario, parse_scenario, save_scenario,
)
from asv_guard.vessel import VesselParams
from tests.constants import (
    ACCEPTANCE, TemporaryDirectoryMixin, crossing_scenario_path, minimal_scenario_path, missing_waypoints_path,
    unknown_key_path,
)

N_SEEDS = 200 if ACCEPTANCE else 30


class TestLoad(TemporaryDirectoryMixin):
    """Tests reading and writing scenario files."""

    def test_packaged_default(self):
        """Test the packaged default scenario equals a scenario built from defaults alone."""
        scenario = load_scenario()
        self.assertEqual('default', scenario.name)
        self.assertEqual(0, len(scenario.obstacles))
        self.assertEqual(400.0, scenario.path.length)
        self.assertEqual(Scenario(path=scenario.path, name='default'), scenario)

    def test_minimal(self):
        """Test a file with only waypoints takes every other value from the defaults."""
        scenario = load_scenario(minimal_scenario_path)
        self.assertEqual('scenario', scenario.name)
        self.assertEqual(0, scenario.seed)
        self.assertEqual(50, scenario.psf.horizon)
        self.assertEqual(20.0, scenario.psf.d_safe)
        self.assertEqual(10.0, scenario.psf.d_f)
        self.assertEqual(0.5, scenario.psf.dt)
        self.assertEqual(0.1, scenario.episode.dt)
        self.assertEqual(1200, scenario.episode.ticks)
        self.assertEqual(10, scenario.episode.lidar_every)
        self.assertEqual('model-supply-vessel', scenario.vessel.name)
        self.assertIsNone(scenario.ais.replay)
        self.assertIsNone(scenario.reward.u_max)

    def test_crossing(self):
        """Test obstacles with shapes, AIS flags and section overrides."""
        scenario = load_scenario(crossing_scenario_path)
        self.assertEqual(['ferry', 'buoy'], [obstacle.obstacle_id for obstacle in scenario.obstacles])
        ferry, buoy = scenario.obstacles
        self.assertEqual('ellipse', ferry.shape)
        self.assertTrue(ferry.ais)
        self.assertEqual(6.0, ferry.bounding_radius)
        self.assertFalse(buoy.ais)
        self.assertEqual(2.0, buoy.bounding_radius)
        self.assertEqual(20, scenario.psf.horizon)
        self.assertEqual(2.0, scenario.ais.period)
        self.assertEqual(720, scenario.lidar.beam_count)
        self.assertEqual(1.0, scenario.initial_state.u)

    def test_missing_waypoints(self):
        """Test a path without waypoints is a validation error naming the field."""
        with self.assertRaises(ScenarioValidationError) as cm:
            load_scenario(missing_waypoints_path)
        self.assertEqual('path.waypoints', cm.exception.field)
        self.assertEqual('scenario-validation', cm.exception.category)

    def test_unknown_key(self):
        """Test an unknown key is a parse error naming the field."""
        with self.assertRaises(ScenarioParseError) as cm:
            load_scenario(unknown_key_path)
        self.assertEqual('psf.horizn', cm.exception.field)

    def test_parse_errors(self):
        """Test schema violations name the offending field."""
        waypoints = {'waypoints': [[0, 0], [10, 0]]}
        cases = [
            ([1, 2], 'scenario'),
            ({'schema': 'other/v9', 'path': waypoints}, 'schema'),
            ({'path': waypoints, 'psf': {'horizon': 'long'}}, 'psf.horizon'),
            ({'path': waypoints, 'psf': {'inflate': 1}}, 'psf.inflate'),
            ({'path': waypoints, 'obstacles': {'id': 'x'}}, 'obstacles'),
            ({'path': waypoints, 'obstacles': [{'position': [1, 'a']}]}, 'obstacles[0].position[1]'),
            ({'path': waypoints, 'initial_state': {'w': 1.0}}, 'initial_state.w'),
            ({'path': waypoints, 'vessel': {'mass': 1.0}}, 'vessel.mass'),
        ]
        for data, field in cases:
            with self.subTest(field=field), self.assertRaises(ScenarioParseError) as cm:
                parse_scenario(data)
            self.assertEqual(field, cm.exception.field)

    def test_validation_errors(self):
        """Test values that break an invariant name the offending section."""
        waypoints = {'waypoints': [[0, 0], [10, 0]]}
        cases = [
            ({'path': {'waypoints': [[0, 0], [0, 0]]}}, 'path.waypoints'),
            ({'path': waypoints, 'seed': -1}, 'seed'),
            ({'path': waypoints, 'psf': {'horizon': 0}}, 'psf'),
            ({'path': waypoints, 'obstacles': [{'velocity': [1, 0]}]}, 'obstacles[0].position'),
            ({'path': waypoints, 'obstacles': [{'position': [5, 5], 'shape': 'ellipse'}]}, 'obstacles[0]'),
            ({'path': waypoints, 'obstacles': [{'id': 'a', 'position': [5, 5]}, {'id': 'a', 'position': [9, 9]}]},
             'obstacles'),
            ({'path': waypoints, 'episode': {'dt': 0.1, 'lidar_period': 0.05}}, 'episode'),
        ]
        for data, field in cases:
            with self.subTest(field=field), self.assertRaises(ScenarioValidationError) as cm:
                parse_scenario(data)
            self.assertEqual(field, cm.exception.field)

    def test_invalid_yaml(self):
        """Test a file that is not YAML is a parse error."""
        path = os.path.join(self.directory, 'broken.yml')
        with open(path, 'w') as file:
            file.write('path: [unclosed\n')
        with self.assertRaises(ScenarioParseError):
            load_scenario(path)

    def test_missing_file(self):
        """Test a missing file raises an OS error."""
        with self.assertRaises(OSError):
            load_scenario(os.path.join(self.directory, 'nope.yml'))

    def test_obstacle_ids_default(self):
        """Test obstacles without an id are numbered from one."""
        scenario = parse_scenario({
            'path': {'waypoints': [[0, 0], [10, 0]]},
            'obstacles': [{'position': [50, 0]}, {'position': [80, 0]}],
        })
        self.assertEqual(['O1', 'O2'], [obstacle.obstacle_id for obstacle in scenario.obstacles])

    def test_relative_files(self):
        """Test vessel and AIS replay paths resolve against the scenario's directory."""
        vessel = VesselParams.default()
        with open(os.path.join(self.directory, 'boat.yml'), 'w') as file:
            yaml.safe_dump(vessel.to_dict(), file)
        path = os.path.join(self.directory, 'scenario.yml')
        with open(path, 'w') as file:
            yaml.safe_dump({
                'path': {'waypoints': [[0, 0], [10, 0]]},
                'vessel': 'boat.yml',
                'sensors': {'ais': {'replay': 'ais.csv'}},
            }, file)
        scenario = load_scenario(path)
        np.testing.assert_array_equal(vessel.mass, scenario.vessel.mass)
        self.assertEqual(os.path.join(self.directory, 'ais.csv'), scenario.ais.replay)

    def test_dump_round_trip(self):
        """Test a dumped scenario loads back unchanged and dumps identically."""
        for scenario in (load_scenario(crossing_scenario_path), generate_random_scenario(3, 'mixed')):
            path = os.path.join(self.directory, f'{scenario.name}.yml')
            save_scenario(scenario, path)
            loaded = load_scenario(path)
            self.assertEqual(scenario, loaded)
            self.assertEqual(dump_scenario(scenario), dump_scenario(loaded))


class TestScripts(unittest.TestCase):
    """Tests obstacle motion, disturbances and the tick structure."""

    def test_constant_velocity(self):
        """Test a straight-line obstacle."""
        obstacle = ObstacleScript('O1', (10.0, 0.0), velocity=(-1.0, 0.5))
        position, velocity = obstacle.state_at(4.0)
        np.testing.assert_allclose([6.0, 2.0], position)
        np.testing.assert_allclose([-1.0, 0.5], velocity)

    def test_turning(self):
        """Test a turning obstacle keeps its speed and closes its circle after one period."""
        obstacle = ObstacleScript('O1', (0.0, 0.0), velocity=(2.0, 0.0), turn_rate=0.1)
        period = 2 * math.pi / 0.1
        position, velocity = obstacle.state_at(period)
        np.testing.assert_allclose([0.0, 0.0], position, atol=1e-9)
        _, velocity = obstacle.state_at(period / 4)
        self.assertAlmostEqual(2.0, float(np.linalg.norm(velocity)))
        np.testing.assert_allclose([0.0, 2.0], velocity, atol=1e-12)

    def test_bounding_radius(self):
        """Test the bounding disc of each shape."""
        self.assertEqual(4.0, ObstacleScript('a', (0.0, 0.0), radius=4.0).bounding_radius)
        self.assertEqual(6.0, ObstacleScript('b', (0.0, 0.0), shape='ellipse', semi_axes=(6.0, 2.0)).bounding_radius)
        self.assertEqual(5.0, ObstacleScript('c', (0.0, 0.0), shape='rectangle', half_extents=(3.0, 4.0))
                         .bounding_radius)

    def test_invalid_script(self):
        """Test malformed obstacles are rejected."""
        with self.assertRaises(ValueError):
            ObstacleScript('a', (0.0, 0.0), shape='triangle')
        with self.assertRaises(ValueError):
            ObstacleScript('a', (0.0, math.nan))
        with self.assertRaises(ValueError):
            ObstacleScript('a', (0.0, 0.0), shape='rectangle')

    def test_disturbance(self):
        """Test a constant force plus a sinusoid."""
        profile = DisturbanceProfile(constant=(1.0, 0.0, 0.0), amplitude=(0.0, 2.0, 0.0), period=8.0)
        np.testing.assert_allclose([1.0, 2.0, 0.0], profile.at(2.0).to_array())
        np.testing.assert_allclose([1.0, 0.0, 0.0], profile.at(0.0).to_array())
        with self.assertRaises(ValueError):
            DisturbanceProfile(amplitude=(1.0, 0.0, 0.0))

    def test_episode(self):
        """Test the tick counts."""
        episode = EpisodeConfig(dt=0.1, duration=30.0, lidar_period=1.0)
        self.assertEqual(300, episode.ticks)
        self.assertEqual(10, episode.lidar_every)


class TestRandomScenarios(unittest.TestCase):
    """Tests seeded scenario generation."""

    def test_deterministic(self):
        """Test the same seed gives the same scenario and another seed does not."""
        self.assertEqual(generate_random_scenario(12, 'mixed'), generate_random_scenario(12, 'mixed'))
        self.assertNotEqual(generate_random_scenario(12, 'mixed'), generate_random_scenario(13, 'mixed'))

    def test_initial_clearance(self):
        """Test every obstacle starts at least d_safe + d_f from the vessel."""
        for difficulty in DIFFICULTIES:
            for seed in range(N_SEEDS):
                scenario = generate_random_scenario(seed, difficulty)
                required = scenario.psf.d_safe + scenario.psf.d_f
                self.assertLessEqual(len(scenario.obstacles), 8)
                for obstacle in scenario.obstacles:
                    clearance = np.linalg.norm(obstacle.position) - obstacle.bounding_radius
                    self.assertGreaterEqual(clearance, required, msg=f'{difficulty} seed {seed}')

    def test_static(self):
        """Test static scenarios hold still obstacles."""
        for seed in range(10):
            for obstacle in generate_random_scenario(seed, 'static').obstacles:
                self.assertEqual((0.0, 0.0), obstacle.velocity)
                self.assertFalse(obstacle.ais)

    def test_moving(self):
        """Test moving obstacles respect the speed cap."""
        for seed in range(10):
            for obstacle in generate_random_scenario(seed, 'head-on').obstacles:
                self.assertGreater(obstacle.speed, 0.0)
                self.assertLessEqual(obstacle.speed, 1.0 + 1e-12)

    def test_base(self):
        """Test a base scenario's configuration is reused."""
        base = load_scenario(crossing_scenario_path)
        scenario = generate_random_scenario(4, 'crossing', base=base)
        self.assertEqual(base.psf, scenario.psf)
        self.assertEqual(base.episode, scenario.episode)
        self.assertEqual('random-crossing-4', scenario.name)

    def test_no_room_for_obstacles(self):
        """Test a scenario is never generated without obstacles."""
        base = Scenario(path=PathSpec(np.array([[0.0, 0.0], [1.0, 0.0]])), psf=PsfConfig(d_safe=1000.0))
        for difficulty in DIFFICULTIES:
            with self.subTest(difficulty=difficulty):
                with self.assertRaises(ScenarioValidationError) as cm:
                    generate_random_scenario(5, difficulty, base=base)
                self.assertEqual('obstacles', cm.exception.field)

    def test_unknown_difficulty(self):
        """Test an unknown difficulty is rejected."""
        with self.assertRaises(ValueError):
            generate_random_scenario(0, 'nightmare')
