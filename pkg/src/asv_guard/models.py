# -*- coding: utf-8 -*-

"""Batch results database models."""

from __future__ import annotations

import datetime

from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import relationship

from .constants import MODULE_NAME

__all__ = [
    'Base',
    'BatchRun',
    'EpisodeResult',
]

Base = declarative_base()

BATCH_TABLE_NAME = f'{MODULE_NAME}_batch'
EPISODE_TABLE_NAME = f'{MODULE_NAME}_episode'


class BatchRun(Base):
    """One call of the batch runner."""

    __tablename__ = BATCH_TABLE_NAME
    id = Column(Integer, primary_key=True)  # noqa:A003

    created = Column(DateTime, default=datetime.datetime.utcnow, doc='when the batch was stored')
    difficulty = Column(String(32), nullable=False, doc='random scenario difficulty')
    policy = Column(String(32), nullable=False, doc='policy kind proposing the inputs')
    psf_enabled = Column(Boolean, nullable=False, doc='whether the safety filter was on')
    info_mode = Column(String(32), nullable=False, doc='where obstacle forecasts came from')

    episodes = relationship('EpisodeResult', back_populates='batch', cascade='all, delete-orphan')

    def __repr__(self):
        return f'BatchRun(id={self.id}, difficulty={self.difficulty}, policy={self.policy}, ' \
               f'psf_enabled={self.psf_enabled}, info_mode={self.info_mode})'

    @property
    def collisions(self) -> int:
        """Count the collisions over every stored episode."""
        return sum(episode.collisions or 0 for episode in self.episodes)


class EpisodeResult(Base):
    """The summary of one episode in a batch."""

    __tablename__ = EPISODE_TABLE_NAME
    id = Column(Integer, primary_key=True)  # noqa:A003

    batch_id = Column(Integer, ForeignKey(f'{BATCH_TABLE_NAME}.id'), nullable=False, index=True)
    batch = relationship(BatchRun, back_populates='episodes')

    seed = Column(Integer, nullable=False, index=True)
    aborted = Column(Boolean, nullable=False, default=False)
    ticks = Column(Integer)
    collisions = Column(Integer)
    min_distance = Column(Float)
    mean_abs_cte = Column(Float)
    cumulative_reward = Column(Float)
    intervention_rate = Column(Float)
    infeasible_ticks = Column(Integer)
    mean_solve_time_ms = Column(Float)

    def __repr__(self):
        return f'EpisodeResult(seed={self.seed}, collisions={self.collisions})'
