# -*- coding: utf-8 -*-

"""This module contains all the constants used in the ASV Guard project."""

import math
import os

from bio2bel import get_data_dir

MODULE_NAME = 'asv_guard'
DATA_DIR = get_data_dir(MODULE_NAME)


def get_output_dir() -> str:
    """Get the default output directory for episode traces (``ASV_GUARD_OUTPUT_DIR`` overrides)."""
    return os.environ.get('ASV_GUARD_OUTPUT_DIR') or os.path.join(DATA_DIR, 'runs')


HERE = os.path.abspath(os.path.dirname(__file__))
PACKAGE_DATA_DIR = os.path.join(HERE, 'data')
DEFAULT_VESSEL_PATH = os.path.join(PACKAGE_DATA_DIR, 'vessel_default.yml')
DEFAULT_SCENARIO_PATH = os.path.join(PACKAGE_DATA_DIR, 'scenario_default.yml')

VESSEL_SCHEMA = 'asv_guard/vessel-v1'
SCENARIO_SCHEMA = 'asv_guard/scenario-v1'

# Tick structure
DYNAMICS_DT = 0.1
LIDAR_PERIOD = 1.0
AIS_PERIOD = 60.0
EPISODE_DURATION = 120.0

# LiDAR
LIDAR_FOV = 2 * math.pi
LIDAR_BEAMS = 120
LIDAR_MAX_RANGE = 100.0
LIDAR_NOISE_SIGMA = 0.1
CLUSTER_EPS = 2.0
MIN_CLUSTER_POINTS = 6

# Tracking
PROCESS_NOISE_Q = 0.05
AIS_COVARIANCE = 25.0
LIDAR_COVARIANCE = 1.0
GATE_THRESHOLD = 9.21
CONFIRM_HITS = 3
COAST_TIMEOUT = 5.0
AIS_COAST_TIMEOUT = 90.0
INITIAL_VELOCITY_VARIANCE = 4.0
DEFAULT_TRACK_EXTENT = 5.0
TRACK_EXTENT_BOUNDS = (1.0, 20.0)

# Safety filter
PSF_HORIZON = 50
PSF_DT = 0.5
D_SAFE = 20.0
D_FINAL = 10.0
SLACK_PENALTY = 1.0e4
SOLVER_TOLERANCE = 1.0e-6
MAX_SQP_ITERATIONS = 100
MERIT_BACKTRACKS = 8
TERMINAL_INPUT_WEIGHT = 100.0
TERMINAL_SAMPLES = 1000
SIGMA_LEVEL = 3.0
CONSTRAINT_BACKOFF = 1.0e-3

# Vessel
VESSEL_RADIUS = 3.0

# Guidance
LOS_LOOKAHEAD = 20.0
CRUISE_SPEED = 1.0
HEADING_GAIN = 2.0
YAW_RATE_GAIN = 8.0
SURGE_GAIN = 10.0

# Rewards
REWARD_GAMMA_R = 0.1
REWARD_GAMMA_EPS = 0.5
REWARD_GAMMA_THETA = 1.0
REWARD_GAMMA_D = 0.1
REWARD_GAMMA_PSF = 1.0
REWARD_TRADEOFF = 0.7
REWARD_COLLISION = -1000.0
REWARD_EXISTS = -0.05

# Random scenarios
DIFFICULTIES = ('static', 'crossing', 'head-on', 'mixed')
MAX_OBSTACLES = 8
OBSTACLE_RADIUS_RANGE = (2.0, 8.0)
OBSTACLE_SPEED_CAP = 1.0
PATH_LENGTH_RANGE = (300.0, 500.0)
MAX_GENERATION_ATTEMPTS = 100

#: Names of the independent random streams spawned from a scenario seed
RNG_STREAMS = ('scenario', 'lidar', 'ais', 'policy', 'tracking')
