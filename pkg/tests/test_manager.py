# -*- coding: utf-8 -*-

"""Tests for the batch results database."""

import math

import numpy as np
import pandas as pd

from asv_guard.guidance import PathSpec, PolicyKind
from asv_guard.manager import SUMMARY_FIELDS
from asv_guard.safety_filter import PsfConfig
from asv_guard.scenario import EpisodeConfig, Scenario
from tests.constants import DatabaseMixin


def _batch_df() -> pd.DataFrame:
    """Three episodes as the batch runner tabulates them, one of them aborted."""
    return pd.DataFrame({
        'seed': np.array([1, 2, 3], dtype=np.int64),
        'difficulty': ['mixed'] * 3,
        'aborted': [False, False, True],
        'ticks': np.array([1200, 1200, np.nan]),
        'collisions': np.array([0, 2, np.nan]),
        'min_distance': [12.5, math.inf, np.nan],
        'mean_abs_cte': [1.5, 3.25, np.nan],
        'cumulative_reward': [-10.0, -2050.0, np.nan],
        'intervention_rate': [0.125, 0.0, np.nan],
        'infeasible_ticks': np.array([1, 0, np.nan]),
        'mean_solve_time_ms': [45.0, 0.0, np.nan],
    })


class TestManager(DatabaseMixin):
    """Tests storing and querying batches."""

    def setUp(self):
        """Start from an empty database."""
        self.manager.session.close()
        self.manager.drop_all()
        self.manager.create_all()

    def test_add_batch(self):
        """Test a batch and its episodes are stored."""
        batch = self.manager.add_batch(_batch_df(), 'mixed', 'random', True, 'ground-truth')
        self.assertEqual(1, self.manager.count_batches())
        self.assertEqual(3, self.manager.count_episodes())
        self.assertEqual('mixed', batch.difficulty)
        self.assertTrue(batch.psf_enabled)
        self.assertEqual(2, batch.collisions)
        self.assertIsNotNone(batch.created)

    def test_get_batch(self):
        """Test batches are found by identifier."""
        batch = self.manager.add_batch(_batch_df(), 'static', 'los', False, 'tracked')
        self.assertEqual(batch, self.manager.get_batch_by_id(batch.id))
        self.assertIsNone(self.manager.get_batch_by_id(batch.id + 100))

    def test_episodes(self):
        """Test the stored episodes come back ordered by seed with missing values for aborted runs."""
        df = _batch_df().sample(frac=1.0, random_state=3)
        batch = self.manager.add_batch(df, 'mixed', 'random', True, 'ground-truth')
        episodes = self.manager.episodes_df(batch.id)
        self.assertEqual(['seed', 'aborted', *SUMMARY_FIELDS], list(episodes.columns))
        self.assertEqual([1, 2, 3], episodes['seed'].tolist())
        self.assertEqual([False, False, True], episodes['aborted'].tolist())
        self.assertEqual(1200, episodes['ticks'][0])
        self.assertEqual(math.inf, episodes['min_distance'][1])
        self.assertTrue(pd.isna(episodes['collisions'][2]))

    def test_list_and_summarize(self):
        """Test listing batches and summarizing the database."""
        first = self.manager.add_batch(_batch_df(), 'mixed', 'random', True, 'ground-truth')
        second = self.manager.add_batch(_batch_df(), 'mixed', 'random', False, 'ground-truth')
        self.assertEqual([first.id, second.id], [batch.id for batch in self.manager.list_batches()])
        self.assertEqual({'batches': 2, 'episodes': 6, 'collisions': 4}, dict(self.manager.summarize()))

    def test_empty(self):
        """Test an empty database summarizes to zeros."""
        self.assertEqual({'batches': 0, 'episodes': 0, 'collisions': 0}, dict(self.manager.summarize()))
        self.assertEqual([], self.manager.list_batches())

    def test_populate(self):
        """Test populating runs a batch of random episodes and stores it."""
        self.assertFalse(self.manager.is_populated())
        base = Scenario(
            path=PathSpec([[0.0, 0.0], [300.0, 0.0]]),
            psf=PsfConfig(horizon=10),
            episode=EpisodeConfig(duration=3.0),
        )
        batch = self.manager.populate(
            seeds=[2, 1], difficulty='static', policy_kind=PolicyKind.LOS_FOLLOW, psf_enabled=False, base=base,
            use_tqdm=False,
        )
        self.assertTrue(self.manager.is_populated())
        self.assertEqual('los', batch.policy)
        self.assertEqual('ground-truth', batch.info_mode)
        self.assertFalse(batch.psf_enabled)
        episodes = self.manager.episodes_df(batch.id)
        self.assertEqual([1, 2], episodes['seed'].tolist())
        self.assertTrue((episodes['ticks'] == 30).all())
