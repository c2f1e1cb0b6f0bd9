# -*- coding: utf-8 -*-

"""ASV Guard is a predictive safety filter for autonomous surface vessels.

A learning-based or scripted controller proposes thruster forces; the safety filter solves a short-horizon optimal
control problem that changes the proposal as little as possible while keeping the vessel clear of obstacles predicted
from fused LiDAR and AIS tracks, and inside a certified terminal set at the end of the horizon. The package holds the
vessel model, the LiDAR and ellipse-fitting perception chain, Kalman tracking with sensor fusion, the filter itself,
path-following guidance with its rewards, and a seeded simulation harness with a command line interface.

Installation
------------
.. code-block:: sh

   $ pip install -e .

Run one random episode with the safety filter on and write its trace tables:

.. code-block:: sh

   $ asv_guard run --random 42 --psf --policy random --info-mode ground-truth
"""

from .manager import Manager  # noqa: F401
from .scenario import generate_random_scenario, load_scenario  # noqa: F401
from .simulation import run_batch, run_episode  # noqa: F401
