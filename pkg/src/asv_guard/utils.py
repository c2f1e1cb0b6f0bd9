# -*- coding: utf-8 -*-

"""Angle helpers and seeded random streams."""

import math
from typing import Dict

import numpy as np

from .constants import RNG_STREAMS

__all__ = [
    'wrap_to_pi',
    'ssa',
    'spawn_streams',
]


def wrap_to_pi(angle: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.pi - math.fmod(math.pi - angle, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def ssa(angle: float) -> float:
    """Return the smallest signed angle equivalent to ``angle``."""
    return wrap_to_pi(angle)


def spawn_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Spawn one Philox generator per subsystem from a single seed.

    Streams are independent, so changing how many numbers one subsystem draws never shifts another.

    :param seed: The scenario seed
    :return: A dictionary from stream name to generator
    """
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {
        name: np.random.Generator(np.random.Philox(child))
        for name, child in zip(RNG_STREAMS, children)
    }
