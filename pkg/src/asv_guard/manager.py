# -*- coding: utf-8 -*-

"""Manager for the batch results database."""

import logging
from typing import Iterable, List, Mapping, Optional

import pandas as pd
from bio2bel import AbstractManager
from sqlalchemy import func
from tqdm import tqdm

from .constants import MODULE_NAME
from .guidance import PolicyKind
from .models import Base, BatchRun, EpisodeResult
from .scenario import Scenario
from .simulation import InfoMode, run_batch

__all__ = [
    'Manager',
]

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = [
    'ticks', 'collisions', 'min_distance', 'mean_abs_cte', 'cumulative_reward', 'intervention_rate',
    'infeasible_ticks', 'mean_solve_time_ms',
]


def _native(value):
    """Convert a table cell to a plain Python value, or None if it is missing."""
    if value is None or pd.isna(value):
        return None
    return value.item() if hasattr(value, 'item') else value


class Manager(AbstractManager):
    """Stores batch runs and their episode summaries."""

    module_name = MODULE_NAME
    _base = Base

    def __init__(self, *args, **kwargs):
        """Connect to the database and create any missing tables."""
        super().__init__(*args, **kwargs)
        self.create_all()

    def is_populated(self) -> bool:
        """Check if any batch is stored."""
        return 0 < self.count_batches()

    def populate(
            self,
            seeds: Iterable[int] = range(1, 11),
            difficulty: str = 'mixed',
            policy_kind: PolicyKind = PolicyKind.RANDOM,
            psf_enabled: bool = True,
            info_mode: InfoMode = InfoMode.GROUND_TRUTH,
            workers: int = 1,
            base: Optional[Scenario] = None,
            use_tqdm: bool = True,
    ) -> BatchRun:
        """Run a batch of random episodes and store it.

        :param seeds: The scenario seeds
        :param base: A scenario whose vessel and configuration sections every random scenario reuses
        """
        df = run_batch(
            seeds,
            difficulty=difficulty,
            policy_kind=policy_kind,
            psf_enabled=psf_enabled,
            info_mode=info_mode,
            workers=workers,
            base=base,
            use_tqdm=use_tqdm,
        )
        return self.add_batch(df, difficulty, policy_kind.value, psf_enabled, info_mode.value, use_tqdm=use_tqdm)

    def add_batch(
            self,
            df: pd.DataFrame,
            difficulty: str,
            policy: str,
            psf_enabled: bool,
            info_mode: str,
            use_tqdm: bool = False,
    ) -> BatchRun:
        """Store a batch table as returned by :func:`asv_guard.simulation.run_batch`.

        :param df: One row per episode with a ``seed`` column and the summary fields
        """
        batch = BatchRun(difficulty=difficulty, policy=policy, psf_enabled=psf_enabled, info_mode=info_mode)
        self.session.add(batch)
        for row in tqdm(df.to_dict('records'), desc='storing episodes', disable=not use_tqdm):
            values = {name: _native(row.get(name)) for name in SUMMARY_FIELDS}
            self.session.add(EpisodeResult(
                batch=batch,
                seed=int(row['seed']),
                aborted=bool(row.get('aborted', False)),
                **values,
            ))
        self.session.commit()
        logger.info('stored batch %d with %d episodes', batch.id, len(df))
        return batch

    def get_batch_by_id(self, batch_id: int) -> Optional[BatchRun]:
        """Get a batch by its identifier."""
        return self.session.query(BatchRun).filter(BatchRun.id == batch_id).one_or_none()

    def list_batches(self) -> List[BatchRun]:
        """List the stored batches, oldest first."""
        return self.session.query(BatchRun).order_by(BatchRun.id).all()

    def count_batches(self) -> int:
        """Count the stored batches."""
        return self.session.query(BatchRun).count()

    def count_episodes(self) -> int:
        """Count the stored episodes."""
        return self.session.query(EpisodeResult).count()

    def episodes_df(self, batch_id: int) -> pd.DataFrame:
        """Tabulate the episodes of one batch, ordered by seed."""
        query = self.session.query(EpisodeResult).filter(EpisodeResult.batch_id == batch_id).order_by(
            EpisodeResult.seed)
        return pd.DataFrame(
            [
                {'seed': episode.seed, 'aborted': episode.aborted, **{f: getattr(episode, f) for f in SUMMARY_FIELDS}}
                for episode in query
            ],
            columns=['seed', 'aborted', *SUMMARY_FIELDS],
        )

    def summarize(self) -> Mapping[str, int]:
        """Summarize the database."""
        collisions = self.session.query(func.sum(EpisodeResult.collisions)).scalar()
        return {
            'batches': self.count_batches(),
            'episodes': self.count_episodes(),
            'collisions': int(collisions or 0),
        }
