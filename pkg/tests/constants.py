# -*- coding: utf-8 -*-

"""Test constants for ASV Guard."""

import logging
import os
import tempfile
import unittest

import numpy as np
from bio2bel.testing import TemporaryConnectionMixin

from asv_guard.manager import Manager
from asv_guard.vessel import VesselParams, VesselState

logger = logging.getLogger(__name__)

dir_path = os.path.dirname(os.path.realpath(__file__))
RESOURCES_DIRECTORY = os.path.join(dir_path, 'resources')

minimal_scenario_path = os.path.join(RESOURCES_DIRECTORY, 'minimal.yml')
missing_waypoints_path = os.path.join(RESOURCES_DIRECTORY, 'missing_waypoints.yml')
unknown_key_path = os.path.join(RESOURCES_DIRECTORY, 'unknown_key.yml')
crossing_scenario_path = os.path.join(RESOURCES_DIRECTORY, 'crossing.yml')
points_path = os.path.join(RESOURCES_DIRECTORY, 'points.csv')
ais_replay_path = os.path.join(RESOURCES_DIRECTORY, 'ais_replay.csv')
short_base_path = os.path.join(RESOURCES_DIRECTORY, 'short_base.yml')
diverging_scenario_path = os.path.join(RESOURCES_DIRECTORY, 'diverging.yml')

#: Set to 1 to run the full-size sweeps
ACCEPTANCE = os.environ.get('ASV_GUARD_ACCEPTANCE') == '1'

DEFAULT_PARAMS = VesselParams.default()


def random_states(rng: np.random.Generator, n: int, params: VesselParams = DEFAULT_PARAMS):
    """Draw states with velocities inside the velocity box."""
    return [
        VesselState(
            x_s=float(rng.uniform(-50, 50)),
            y_s=float(rng.uniform(-50, 50)),
            psi=float(rng.uniform(-np.pi, np.pi)),
            u=float(rng.uniform(params.velocity_lb[0], params.velocity_ub[0])),
            v=float(rng.uniform(params.velocity_lb[1], params.velocity_ub[1])),
            r=float(rng.uniform(params.velocity_lb[2], params.velocity_ub[2])),
        )
        for _ in range(n)
    ]


class TemporaryDirectoryMixin(unittest.TestCase):
    """A test case with a temporary directory per test."""

    def setUp(self):
        """Create the temporary directory."""
        super().setUp()
        self._directory = tempfile.TemporaryDirectory()
        self.directory = self._directory.name

    def tearDown(self):
        """Remove the temporary directory."""
        self._directory.cleanup()
        super().tearDown()


class DatabaseMixin(TemporaryConnectionMixin):
    """A test case with a temporary results database."""

    @classmethod
    def setUpClass(cls):
        """Create a temporary database."""
        super().setUpClass()
        cls.manager = Manager(connection=cls.connection)

    @classmethod
    def tearDownClass(cls):
        """Close the connection in the manager and delete the temporary database."""
        cls.manager.drop_all()
        cls.manager.session.close()
        super().tearDownClass()
