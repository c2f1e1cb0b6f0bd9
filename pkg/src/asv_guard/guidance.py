# -*- coding: utf-8 -*-

"""Path geometry, rewards and the scripted policies whose actions the safety filter wraps.

The cross-track error is positive when the vessel is to port (left) of the path direction. The heading error is
measured against the tangent of the path at the closest point rather than against the line-of-sight bearing.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    CRUISE_SPEED, HEADING_GAIN, LOS_LOOKAHEAD, REWARD_COLLISION, REWARD_EXISTS, REWARD_GAMMA_D, REWARD_GAMMA_EPS,
    REWARD_GAMMA_PSF, REWARD_GAMMA_R, REWARD_GAMMA_THETA, REWARD_TRADEOFF, SURGE_GAIN, YAW_RATE_GAIN,
)
from .perception import LidarScan
from .utils import ssa
from .vessel import ControlInput, VesselParams, VesselState, rotation_matrix

__all__ = [
    'PathSpec',
    'ClosestPoint',
    'RewardConfig',
    'RewardComponents',
    'PolicyKind',
    'ActionSource',
    'PolicyAction',
    'PolicyConfig',
    'ScriptedPolicy',
    'cross_track_error',
    'heading_error',
    'reward_path',
    'reward_colav',
    'reward_psf',
    'reward_total',
    'scripted_policies',
]

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class ClosestPoint:
    """The projection of a position on a path."""

    point: np.ndarray
    segment: int
    arc_length: float
    bearing: float
    cross_track: float


@dataclass(frozen=True, eq=False)
class PathSpec:
    """A polyline through at least two distinct waypoints, parameterized by arc length."""

    waypoints: np.ndarray
    _lengths: np.ndarray = field(init=False, repr=False)
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        waypoints = np.asarray(self.waypoints, dtype=float)
        if waypoints.ndim != 2 or waypoints.shape[1] != 2 or len(waypoints) < 2:
            raise ValueError('a path needs at least two (x, y) waypoints')
        if not np.all(np.isfinite(waypoints)):
            raise ValueError('waypoints must be finite')
        lengths = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
        if np.any(lengths == 0):
            raise ValueError('consecutive waypoints must be distinct')
        object.__setattr__(self, 'waypoints', waypoints)
        object.__setattr__(self, '_lengths', lengths)
        object.__setattr__(self, '_offsets', np.concatenate([[0.0], np.cumsum(lengths)]))

    def __eq__(self, other):
        return isinstance(other, PathSpec) and np.array_equal(self.waypoints, other.waypoints)

    @property
    def length(self) -> float:
        """Return the total arc length."""
        return float(self._offsets[-1])

    def segment_bearing(self, index: int) -> float:
        """Return the bearing of a segment, counter-clockwise from the x-axis."""
        dx, dy = self.waypoints[index + 1] - self.waypoints[index]
        return math.atan2(dy, dx)

    def point_at(self, s: float) -> np.ndarray:
        """Return the point at arc length ``s``, clamped to the ends of the path."""
        s = min(max(s, 0.0), self.length)
        index = min(int(np.searchsorted(self._offsets, s, side='right')) - 1, len(self._lengths) - 1)
        fraction = (s - self._offsets[index]) / self._lengths[index]
        return self.waypoints[index] + fraction * (self.waypoints[index + 1] - self.waypoints[index])

    def closest(self, p: ArrayLike) -> ClosestPoint:
        """Project a position on the path. Ties go to the earlier segment."""
        p = np.asarray(p, dtype=float)
        starts = self.waypoints[:-1]
        directions = np.diff(self.waypoints, axis=0)
        t = np.clip(np.einsum('ij,ij->i', p - starts, directions) / self._lengths ** 2, 0.0, 1.0)
        projections = starts + t[:, None] * directions
        index = int(np.argmin(np.linalg.norm(p - projections, axis=1)))
        tangent = directions[index] / self._lengths[index]
        offset = p - projections[index]
        return ClosestPoint(
            point=projections[index],
            segment=index,
            arc_length=float(self._offsets[index] + t[index] * self._lengths[index]),
            bearing=self.segment_bearing(index),
            cross_track=float(tangent[0] * offset[1] - tangent[1] * offset[0]),
        )


def cross_track_error(path: PathSpec, p: ArrayLike) -> float:
    """Return the signed distance from ``p`` to the path, positive to port.

    The value is continuous along the path except behind reflex corners, where the closest segment switches.
    """
    return path.closest(p).cross_track


def heading_error(path: PathSpec, state: VesselState) -> float:
    """Return the smallest signed angle from the path tangent at the closest point to the vessel heading."""
    return ssa(state.psi - path.closest(state.position).bearing)


@dataclass(frozen=True)
class RewardConfig:
    """Tuning of the three reward components and how they combine."""

    u_max_speed: float = CRUISE_SPEED
    gamma_r: float = REWARD_GAMMA_R
    gamma_eps: float = REWARD_GAMMA_EPS
    gamma_theta: float = REWARD_GAMMA_THETA
    gamma_d: float = REWARD_GAMMA_D
    gamma_psf: float = REWARD_GAMMA_PSF
    tradeoff: float = REWARD_TRADEOFF
    r_collision: float = REWARD_COLLISION
    r_exists: float = REWARD_EXISTS
    #: Per-axis input magnitudes; taken from the vessel's input box when not given
    u_max: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if not self.u_max_speed > 0:
            raise ValueError('u_max_speed must be positive')
        gammas = (self.gamma_r, self.gamma_eps, self.gamma_theta, self.gamma_d, self.gamma_psf)
        if min(gammas) <= 0:
            raise ValueError('reward weights must be positive')
        if not 0.0 <= self.tradeoff <= 1.0:
            raise ValueError('tradeoff must lie in [0, 1]')
        if not (self.r_collision < 0 and self.r_exists < 0):
            raise ValueError('collision and existence rewards must be negative')

    def with_vessel(self, params: VesselParams) -> RewardConfig:
        """Fill ``u_max`` from the vessel's input bounds if it is unset."""
        if self.u_max is not None:
            return self
        return replace(self, u_max=tuple(float(x) for x in params.input_max))


@dataclass(frozen=True)
class RewardComponents:
    """The per-tick reward terms before they are combined."""

    r_path: float
    r_colav: float
    r_psf: float


def reward_path(u: float, psi_bar: float, eps: float, cfg: RewardConfig) -> float:
    """Reward fast progress along the path with the vessel close to it."""
    velocity_term = u / cfg.u_max_speed * math.cos(psi_bar) + cfg.gamma_r
    cte_term = math.exp(-cfg.gamma_eps * abs(eps)) + cfg.gamma_r
    return velocity_term * cte_term - cfg.gamma_r ** 2


def reward_colav(scan: LidarScan, cfg: RewardConfig) -> float:
    """Penalize close LiDAR returns, weighting beams near the bow the most.

    Missed beams count at the maximum range.
    """
    if scan.angles.size < 1:
        raise ValueError('a scan needs at least one beam')
    weights = 1.0 / (1.0 + cfg.gamma_theta * np.abs(scan.angles))
    penalties = np.exp(-cfg.gamma_d * scan.distances())
    return -float(np.sum(weights * penalties) / np.sum(weights))


def _as_array(value: Union[ControlInput, ArrayLike]) -> np.ndarray:
    if isinstance(value, ControlInput):
        return value.to_array()
    return np.asarray(value, dtype=float)


def reward_psf(
    u_l: Union[ControlInput, ArrayLike],
    u_0: Union[ControlInput, ArrayLike],
    cfg: RewardConfig,
) -> float:
    """Penalize how far the safety filter moved the proposed input.

    :raises ValueError: if ``cfg.u_max`` is unset or zero
    """
    if cfg.u_max is None:
        raise ValueError('u_max is unset, call RewardConfig.with_vessel first')
    scale = float(np.linalg.norm(cfg.u_max))
    if not scale > 0:
        raise ValueError('u_max must be non-zero')
    return -cfg.gamma_psf * float(np.linalg.norm(_as_array(u_l) - _as_array(u_0))) / scale


def reward_total(components: RewardComponents, collision: bool, cfg: RewardConfig) -> float:
    """Combine the components, or return the collision penalty alone."""
    if collision:
        return cfg.r_collision
    return (
        cfg.tradeoff * components.r_path
        + (1.0 - cfg.tradeoff) * components.r_colav
        + components.r_psf
        + cfg.r_exists
    )


class PolicyKind(enum.Enum):
    """Scripted stand-ins for a learned policy."""

    LOS_FOLLOW = 'los'
    CONSTANT_AHEAD = 'constant'
    RANDOM = 'random'
    ADVERSARIAL = 'adversarial'


class ActionSource(enum.Enum):
    """Where a proposed input came from."""

    SCRIPTED = 'SCRIPTED'
    RANDOM = 'RANDOM'
    EXTERNAL = 'EXTERNAL'


@dataclass(frozen=True)
class PolicyAction:
    """A proposed input, already clamped to the input box."""

    u_l: ControlInput
    source: ActionSource


@dataclass(frozen=True)
class PolicyConfig:
    """Gains of the line-of-sight controller."""

    lookahead: float = LOS_LOOKAHEAD
    cruise_speed: float = CRUISE_SPEED
    heading_gain: float = HEADING_GAIN
    yaw_rate_gain: float = YAW_RATE_GAIN
    surge_gain: float = SURGE_GAIN

    def __post_init__(self):
        if not self.lookahead > 0:
            raise ValueError('lookahead must be positive')
        if self.cruise_speed < 0:
            raise ValueError('cruise_speed must be non-negative')


def _surge_damping(params: VesselParams, speed: float) -> float:
    return float(params.damping_linear[0, 0] + params.damping_quadratic[0] * abs(speed))


def _heading_moment(target: float, state: VesselState, cfg: PolicyConfig) -> float:
    return cfg.heading_gain * ssa(target - state.psi) - cfg.yaw_rate_gain * state.r


def _los(state: VesselState, path: PathSpec, params: VesselParams, cfg: PolicyConfig) -> ControlInput:
    closest = path.closest(state.position)
    course = closest.bearing + math.atan(-closest.cross_track / cfg.lookahead)
    speed = cfg.cruise_speed
    tau_u = _surge_damping(params, speed) * speed + cfg.surge_gain * (speed - state.u)
    return ControlInput(tau_u, 0.0, _heading_moment(course, state, cfg))


def _toward(state: VesselState, target: np.ndarray, params: VesselParams, cfg: PolicyConfig) -> ControlInput:
    """Push with as much force as the input box allows straight at ``target``."""
    offset = target - state.position
    body = rotation_matrix(state.psi)[:2, :2].T @ offset
    norm = np.linalg.norm(body)
    if norm == 0:
        return ControlInput(float(params.input_ub[0]), 0.0, 0.0)
    direction = body / norm
    limits = np.where(direction >= 0, params.input_ub[:2], -params.input_lb[:2])
    active = np.abs(direction) > 1e-12
    scale = float(np.min(limits[active] / np.abs(direction[active])))
    bearing = math.atan2(offset[1], offset[0])
    tau = scale * direction
    return ControlInput(float(tau[0]), float(tau[1]), _heading_moment(bearing, state, cfg))


def scripted_policies(
    kind: PolicyKind,
    state: VesselState,
    path: PathSpec,
    params: VesselParams,
    cfg: Optional[PolicyConfig] = None,
    rng: Optional[np.random.Generator] = None,
    obstacles: Optional[Sequence[ArrayLike]] = None,
) -> PolicyAction:
    """Return the proposed input of a scripted policy.

    :param kind: Which policy to run
    :param state: The current vessel state
    :param path: The path to follow
    :param params: Vessel parameters, for the input box and surge damping
    :param cfg: Controller gains
    :param rng: The generator for the random policy
    :param obstacles: Obstacle positions known to the adversarial policy
    """
    cfg = cfg or PolicyConfig()
    if kind is PolicyKind.LOS_FOLLOW:
        control, source = _los(state, path, params, cfg), ActionSource.SCRIPTED
    elif kind is PolicyKind.CONSTANT_AHEAD:
        speed = cfg.cruise_speed
        control, source = ControlInput(_surge_damping(params, speed) * speed, 0.0, 0.0), ActionSource.SCRIPTED
    elif kind is PolicyKind.RANDOM:
        if rng is None:
            raise ValueError('the random policy needs a generator')
        control, source = ControlInput.from_array(rng.uniform(params.input_lb, params.input_ub)), ActionSource.RANDOM
    elif kind is PolicyKind.ADVERSARIAL:
        if obstacles is not None and len(obstacles):
            positions = np.asarray(obstacles, dtype=float).reshape(-1, 2)
            nearest = positions[np.argmin(np.linalg.norm(positions - state.position, axis=1))]
            control = _toward(state, nearest, params, cfg)
        else:
            control = ControlInput(float(params.input_ub[0]), 0.0, 0.0)
        source = ActionSource.SCRIPTED
    else:
        raise ValueError(f'unknown policy: {kind}')
    return PolicyAction(u_l=control.clamp(params), source=source)


class ScriptedPolicy:
    """Binds a policy kind to a vessel, a path and a random stream."""

    def __init__(
        self,
        kind: PolicyKind,
        params: VesselParams,
        path: PathSpec,
        config: Optional[PolicyConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.kind = kind
        self.params = params
        self.path = path
        self.config = config or PolicyConfig()
        self.rng = rng

    def __call__(self, state: VesselState, obstacles: Optional[Sequence[ArrayLike]] = None) -> PolicyAction:
        return scripted_policies(
            self.kind, state, self.path, self.params, cfg=self.config, rng=self.rng, obstacles=obstacles,
        )
