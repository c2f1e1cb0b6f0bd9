# -*- coding: utf-8 -*-

"""Scenario files and seeded random scenarios.

A scenario file is a YAML document tagged ``schema: asv_guard/scenario-v1``. Every section is optional except
``path.waypoints``; missing keys take the defaults shown in ``asv_guard/data/scenario_default.yml`` and unknown keys
are rejected with the dotted path of the offending field. :func:`dump_scenario` writes the canonical form with every
default filled in, which :func:`load_scenario` reads back to an identical scenario.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml

from .constants import (
    AIS_COVARIANCE, AIS_PERIOD, DEFAULT_SCENARIO_PATH, DIFFICULTIES, DYNAMICS_DT, EPISODE_DURATION, LIDAR_PERIOD,
    MAX_GENERATION_ATTEMPTS, MAX_OBSTACLES, OBSTACLE_RADIUS_RANGE, OBSTACLE_SPEED_CAP, PATH_LENGTH_RANGE,
    SCENARIO_SCHEMA,
)
from .exceptions import ScenarioParseError, ScenarioValidationError, VesselParamsError
from .guidance import PathSpec, PolicyConfig, RewardConfig
from .perception import EllipseShape, LidarConfig, RectangleShape
from .safety_filter import PsfConfig
from .tracking import TrackingConfig
from .utils import spawn_streams
from .vessel import Disturbance, VesselParams, VesselState, load_vessel_params

__all__ = [
    'EpisodeConfig',
    'AisConfig',
    'DisturbanceProfile',
    'ObstacleScript',
    'Scenario',
    'load_scenario',
    'parse_scenario',
    'dump_scenario',
    'save_scenario',
    'generate_random_scenario',
]

logger = logging.getLogger(__name__)

SHAPES = ('disc', 'ellipse', 'rectangle')


@dataclass(frozen=True)
class EpisodeConfig:
    """Tick structure of an episode."""

    dt: float = DYNAMICS_DT
    duration: float = EPISODE_DURATION
    lidar_period: float = LIDAR_PERIOD

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError('dt must be positive')
        if not self.duration > 0:
            raise ValueError('duration must be positive')
        if self.lidar_period < self.dt:
            raise ValueError('lidar_period must not be shorter than dt')

    @property
    def ticks(self) -> int:
        """Return the number of dynamics ticks in an episode."""
        return int(round(self.duration / self.dt))

    @property
    def lidar_every(self) -> int:
        """Return the number of ticks between LiDAR scans."""
        return max(1, int(round(self.lidar_period / self.dt)))


@dataclass(frozen=True)
class AisConfig:
    """Synthetic AIS reports, or a recorded file to replay instead."""

    period: float = AIS_PERIOD
    covariance: float = AIS_COVARIANCE
    replay: Optional[str] = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError('period must be positive')
        if not self.covariance > 0:
            raise ValueError('covariance must be positive')


@dataclass(frozen=True)
class DisturbanceProfile:
    """A constant environmental force plus an optional sinusoid, in the body frame."""

    constant: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    period: float = 0.0

    def __post_init__(self):
        if self.period < 0:
            raise ValueError('period must be non-negative')
        if any(self.amplitude) and self.period == 0:
            raise ValueError('a sinusoidal disturbance needs a positive period')

    def at(self, t: float) -> Disturbance:
        """Return the disturbance at time ``t``."""
        force = np.asarray(self.constant, dtype=float)
        if self.period > 0:
            force = force + np.asarray(self.amplitude) * math.sin(2.0 * math.pi * t / self.period)
        return Disturbance.from_array(force)


@dataclass(frozen=True)
class ObstacleScript:
    """Ground-truth motion of one obstacle.

    Obstacles move at constant velocity, or on a circular arc when ``turn_rate`` is non-zero. Collision checks and
    the safety filter use the bounding disc of the shape.
    """

    obstacle_id: str
    position: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    radius: float = 5.0
    shape: str = 'disc'
    semi_axes: Optional[Tuple[float, float]] = None
    half_extents: Optional[Tuple[float, float]] = None
    orientation: float = 0.0
    turn_rate: float = 0.0
    ais: bool = False

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f'shape must be one of {SHAPES}')
        values = self.position + self.velocity + (self.radius, self.orientation, self.turn_rate)
        if not all(math.isfinite(value) for value in values):
            raise ValueError('obstacle scripts must be finite')
        if self.shape == 'disc' and not self.radius > 0:
            raise ValueError('radius must be positive')
        if self.shape == 'ellipse' and (self.semi_axes is None or min(self.semi_axes) <= 0):
            raise ValueError('an ellipse needs two positive semi_axes')
        if self.shape == 'rectangle' and (self.half_extents is None or min(self.half_extents) <= 0):
            raise ValueError('a rectangle needs two positive half_extents')

    @property
    def bounding_radius(self) -> float:
        """Return the radius of the disc used for collisions and the safety filter."""
        if self.shape == 'ellipse':
            return float(max(self.semi_axes))
        if self.shape == 'rectangle':
            return float(math.hypot(*self.half_extents))
        return float(self.radius)

    @property
    def speed(self) -> float:
        """Return the speed over ground."""
        return float(math.hypot(*self.velocity))

    def state_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Return the true position and velocity at time ``t``."""
        p0 = np.asarray(self.position, dtype=float)
        v0 = np.asarray(self.velocity, dtype=float)
        w = self.turn_rate
        if w == 0 or self.speed == 0:
            return p0 + v0 * t, v0.copy()
        course = math.atan2(v0[1], v0[0])
        speed = self.speed
        position = p0 + speed / w * np.array([
            math.sin(course + w * t) - math.sin(course),
            math.cos(course) - math.cos(course + w * t),
        ])
        velocity = speed * np.array([math.cos(course + w * t), math.sin(course + w * t)])
        return position, velocity

    def shape_at(self, t: float):
        """Return the LiDAR shape at time ``t``."""
        position, _ = self.state_at(t)
        center = (float(position[0]), float(position[1]))
        orientation = self.orientation + self.turn_rate * t
        if self.shape == 'ellipse':
            return EllipseShape(center=center, semi_axes=self.semi_axes, orientation=orientation)
        if self.shape == 'rectangle':
            return RectangleShape(center=center, half_extents=self.half_extents, orientation=orientation)
        return EllipseShape.disc(position, self.radius)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the scenario file layout."""
        return {
            'id': self.obstacle_id,
            'shape': self.shape,
            'position': list(self.position),
            'velocity': list(self.velocity),
            'radius': self.radius,
            'semi_axes': list(self.semi_axes) if self.semi_axes is not None else None,
            'half_extents': list(self.half_extents) if self.half_extents is not None else None,
            'orientation': self.orientation,
            'turn_rate': self.turn_rate,
            'ais': self.ais,
        }


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to run one deterministic episode."""

    path: PathSpec
    vessel: VesselParams = field(default_factory=VesselParams.default)
    initial_state: VesselState = field(default_factory=lambda: VesselState(0.0, 0.0, 0.0))
    obstacles: Tuple[ObstacleScript, ...] = ()
    disturbance: DisturbanceProfile = field(default_factory=DisturbanceProfile)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    ais: AisConfig = field(default_factory=AisConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    psf: PsfConfig = field(default_factory=PsfConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    seed: int = 0
    name: str = 'scenario'

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    def replace(self, **changes) -> Scenario:
        """Return a copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize with every default filled in."""
        state = self.initial_state
        return {
            'schema': SCENARIO_SCHEMA,
            'name': self.name,
            'seed': self.seed,
            'vessel': self.vessel.to_dict(),
            'initial_state': {'x': state.x_s, 'y': state.y_s, 'psi': state.psi, 'u': state.u, 'v': state.v,
                              'r': state.r},
            'path': {'waypoints': self.path.waypoints.tolist()},
            'obstacles': [obstacle.to_dict() for obstacle in self.obstacles],
            'disturbance': _plain(self.disturbance),
            'sensors': {'lidar': _plain(self.lidar), 'ais': _plain(self.ais)},
            'tracking': _plain(self.tracking),
            'psf': _plain(self.psf),
            'reward': _plain(self.reward),
            'policy': _plain(self.policy),
            'episode': _plain(self.episode),
        }


def _plain(config) -> Dict[str, Any]:
    rv = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        rv[f.name] = list(value) if isinstance(value, tuple) else value
    return rv


def _mapping(data: Any, path: str) -> Mapping[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ScenarioParseError(path, 'expected a mapping')
    return data


def _reject_unknown(data: Mapping[str, Any], known: Sequence[str], path: str) -> None:
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ScenarioParseError(f'{path}.{unknown[0]}' if path else unknown[0], 'unknown key')


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(path, 'expected a number')
    return float(value)


def _numbers(value: Any, size: int, path: str) -> Tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != size:
        raise ScenarioParseError(path, f'expected a list of {size} numbers')
    return tuple(_number(item, f'{path}[{i}]') for i, item in enumerate(value))


def _coerce(value: Any, default: Any, path: str) -> Any:
    """Convert a parsed value to the type of a field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioParseError(path, 'expected true or false')
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioParseError(path, 'expected an integer')
        return value
    if isinstance(default, float):
        return _number(value, path)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ScenarioParseError(path, 'expected a string')
        return value
    if isinstance(default, tuple):
        return _numbers(value, len(default), path)
    raise ScenarioParseError(path, 'unsupported value')


def _section(data: Any, path: str, cls, optional: Optional[Dict[str, Any]] = None):
    """Build a config dataclass from a mapping, filling in defaults.

    :param optional: Converters for fields whose default is None
    """
    data = _mapping(data, path)
    fields = [f for f in dataclasses.fields(cls) if f.init]
    _reject_unknown(data, [f.name for f in fields], path)
    kwargs = {}
    for f in fields:
        if f.name not in data:
            continue
        value = data[f.name]
        if optional and f.name in optional:
            kwargs[f.name] = None if value is None else optional[f.name](value, f'{path}.{f.name}')
        else:
            kwargs[f.name] = _coerce(value, f.default, f'{path}.{f.name}')
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ScenarioValidationError(path, str(e)) from None


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ScenarioParseError(path, 'expected a string')
    return value


def _parse_vessel(value: Any, base_dir: Optional[str]) -> VesselParams:
    try:
        if value is None or value == 'default':
            return VesselParams.default()
        if isinstance(value, str):
            path = value if os.path.isabs(value) or base_dir is None else os.path.join(base_dir, value)
            return load_vessel_params(path)
        return VesselParams.from_dict(_mapping(value, 'vessel'))
    except VesselParamsError as e:
        raise ScenarioValidationError('vessel', str(e)) from None


def _parse_state(data: Any) -> VesselState:
    data = _mapping(data, 'initial_state')
    keys = ('x', 'y', 'psi', 'u', 'v', 'r')
    _reject_unknown(data, keys, 'initial_state')
    values = [_number(data[key], f'initial_state.{key}') if key in data else 0.0 for key in keys]
    try:
        return VesselState(*values)
    except ValueError as e:
        raise ScenarioValidationError('initial_state', str(e)) from None


def _parse_path(data: Any) -> PathSpec:
    data = _mapping(data, 'path')
    _reject_unknown(data, ('waypoints',), 'path')
    waypoints = data.get('waypoints')
    if not waypoints:
        raise ScenarioValidationError('path.waypoints', 'at least two waypoints are required')
    if not isinstance(waypoints, list):
        raise ScenarioParseError('path.waypoints', 'expected a list of [x, y] pairs')
    points = [_numbers(point, 2, f'path.waypoints[{i}]') for i, point in enumerate(waypoints)]
    try:
        return PathSpec(np.array(points))
    except ValueError as e:
        raise ScenarioValidationError('path.waypoints', str(e)) from None


_OBSTACLE_KEYS = ('id', 'shape', 'position', 'velocity', 'radius', 'semi_axes', 'half_extents', 'orientation',
                  'turn_rate', 'ais')


def _parse_obstacle(data: Any, index: int) -> ObstacleScript:
    path = f'obstacles[{index}]'
    data = _mapping(data, path)
    _reject_unknown(data, _OBSTACLE_KEYS, path)
    if 'position' not in data:
        raise ScenarioValidationError(f'{path}.position', 'an obstacle needs a position')
    kwargs: Dict[str, Any] = {
        'obstacle_id': _string(data['id'], f'{path}.id') if 'id' in data else f'O{index + 1}',
        'position': _numbers(data['position'], 2, f'{path}.position'),
    }
    if 'velocity' in data:
        kwargs['velocity'] = _numbers(data['velocity'], 2, f'{path}.velocity')
    for key in ('radius', 'orientation', 'turn_rate'):
        if key in data:
            kwargs[key] = _number(data[key], f'{path}.{key}')
    for key in ('semi_axes', 'half_extents'):
        if data.get(key) is not None:
            kwargs[key] = _numbers(data[key], 2, f'{path}.{key}')
    if 'shape' in data:
        kwargs['shape'] = _string(data['shape'], f'{path}.shape')
    if 'ais' in data:
        kwargs['ais'] = _coerce(data['ais'], False, f'{path}.ais')
    try:
        return ObstacleScript(**kwargs)
    except ValueError as e:
        raise ScenarioValidationError(path, str(e)) from None


_TOP_LEVEL_KEYS = ('schema', 'name', 'seed', 'vessel', 'initial_state', 'path', 'obstacles', 'disturbance',
                   'sensors', 'tracking', 'psf', 'reward', 'policy', 'episode')


def parse_scenario(data: Any, base_dir: Optional[str] = None) -> Scenario:
    """Build a scenario from a parsed document.

    :param data: The parsed YAML document
    :param base_dir: The directory relative vessel file references are resolved against
    :raises ScenarioParseError: if the document does not follow the schema
    :raises ScenarioValidationError: if a value breaks an invariant
    """
    if not isinstance(data, Mapping):
        raise ScenarioParseError('scenario', 'expected a mapping at the top level')
    _reject_unknown(data, _TOP_LEVEL_KEYS, '')

    schema = data.get('schema', SCENARIO_SCHEMA)
    if schema != SCENARIO_SCHEMA:
        raise ScenarioParseError('schema', f'expected {SCENARIO_SCHEMA!r}, got {schema!r}')

    seed = _coerce(data.get('seed', 0), 0, 'seed')
    if seed < 0:
        raise ScenarioValidationError('seed', 'seed must be non-negative')

    obstacles = data.get('obstacles') or []
    if not isinstance(obstacles, list):
        raise ScenarioParseError('obstacles', 'expected a list')
    scripts = tuple(_parse_obstacle(item, i) for i, item in enumerate(obstacles))
    ids = [script.obstacle_id for script in scripts]
    if len(set(ids)) != len(ids):
        raise ScenarioValidationError('obstacles', 'obstacle ids must be unique')

    sensors = _mapping(data.get('sensors'), 'sensors')
    _reject_unknown(sensors, ('lidar', 'ais'), 'sensors')
    ais = _section(sensors.get('ais'), 'sensors.ais', AisConfig, optional={'replay': _string})
    if ais.replay is not None and base_dir is not None and not os.path.isabs(ais.replay):
        ais = dataclasses.replace(ais, replay=os.path.join(base_dir, ais.replay))

    return Scenario(
        name=_string(data.get('name', 'scenario'), 'name'),
        seed=seed,
        vessel=_parse_vessel(data.get('vessel'), base_dir),
        initial_state=_parse_state(data.get('initial_state')),
        path=_parse_path(data.get('path')),
        obstacles=scripts,
        disturbance=_section(data.get('disturbance'), 'disturbance', DisturbanceProfile),
        lidar=_section(sensors.get('lidar'), 'sensors.lidar', LidarConfig),
        ais=ais,
        tracking=_section(data.get('tracking'), 'tracking', TrackingConfig),
        psf=_section(data.get('psf'), 'psf', PsfConfig),
        reward=_section(
            data.get('reward'), 'reward', RewardConfig, optional={'u_max': lambda v, p: _numbers(v, 3, p)},
        ),
        policy=_section(data.get('policy'), 'policy', PolicyConfig),
        episode=_section(data.get('episode'), 'episode', EpisodeConfig),
    )


def load_scenario(path: Optional[str] = None) -> Scenario:
    """Load and validate a scenario file.

    :param path: The scenario file. Defaults to the packaged default scenario.
    """
    path = path or DEFAULT_SCENARIO_PATH
    with open(path) as file:
        try:
            data = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ScenarioParseError('scenario', f'invalid YAML: {e}') from None
    scenario = parse_scenario(data, base_dir=os.path.dirname(os.path.abspath(path)))
    logger.debug('loaded scenario %s with %d obstacles from %s', scenario.name, len(scenario.obstacles), path)
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    """Return the canonical YAML form of a scenario."""
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=None)


def save_scenario(scenario: Scenario, path: str) -> None:
    """Write the canonical form of a scenario to a file."""
    with open(path, 'w') as file:
        file.write(dump_scenario(scenario))


def _random_path(rng: np.random.Generator) -> PathSpec:
    length = rng.uniform(*PATH_LENGTH_RANGE)
    if rng.integers(2, 4) == 2:
        return PathSpec(np.array([[0.0, 0.0], [length, 0.0]]))
    first = length * rng.uniform(0.4, 0.6)
    turn = rng.uniform(-math.pi / 4, math.pi / 4)
    corner = np.array([first, 0.0])
    end = corner + (length - first) * np.array([math.cos(turn), math.sin(turn)])
    return PathSpec(np.array([[0.0, 0.0], corner, end]))


def _random_obstacle(
    rng: np.random.Generator,
    kind: str,
    path: PathSpec,
    index: int,
) -> ObstacleScript:
    radius = float(rng.uniform(*OBSTACLE_RADIUS_RANGE))
    obstacle_id = f'O{index + 1}'
    if kind == 'static':
        s = rng.uniform(0.0, min(path.length, 200.0))
        closest = path.closest(path.point_at(s))
        normal = np.array([-math.sin(closest.bearing), math.cos(closest.bearing)])
        position = closest.point + rng.uniform(-20.0, 20.0) * normal
        return ObstacleScript(obstacle_id, (float(position[0]), float(position[1])), radius=radius)

    aim = path.closest(path.point_at(rng.uniform(0.0, 30.0)))
    t_hit = rng.uniform(30.0, 80.0)
    speed = rng.uniform(0.5, 1.0) * OBSTACLE_SPEED_CAP
    if kind == 'crossing':
        course = aim.bearing + rng.choice([-1.0, 1.0]) * math.pi / 2 + rng.uniform(-0.35, 0.35)
    else:
        course = aim.bearing + math.pi + rng.uniform(-0.17, 0.17)
    velocity = speed * np.array([math.cos(course), math.sin(course)])
    position = aim.point - velocity * t_hit
    return ObstacleScript(
        obstacle_id,
        (float(position[0]), float(position[1])),
        velocity=(float(velocity[0]), float(velocity[1])),
        radius=radius,
        ais=bool(rng.random() < 0.5),
    )


def generate_random_scenario(seed: int, difficulty: str = 'mixed', base: Optional[Scenario] = None) -> Scenario:
    """Generate a seeded scenario with one to eight obstacles.

    Moving obstacles aim at a point on the first 30 m of the path, reaching it 30 to 80 s into the episode. An
    obstacle is redrawn until the vessel's initial position keeps ``d_safe + d_f`` from it; after a bounded number
    of attempts it is dropped, as long as at least one obstacle remains.

    :param seed: The scenario seed
    :param difficulty: One of ``static``, ``crossing``, ``head-on`` or ``mixed``
    :param base: A scenario whose vessel and configuration sections are reused
    :raises ScenarioValidationError: if no obstacle can be placed clear of the start
    """
    if difficulty not in DIFFICULTIES:
        raise ValueError(f'difficulty must be one of {DIFFICULTIES}, got {difficulty!r}')
    rng = spawn_streams(seed)['scenario']
    base = base or Scenario(path=PathSpec(np.array([[0.0, 0.0], [1.0, 0.0]])))

    path = _random_path(rng)
    start = VesselState(0.0, 0.0, 0.0)
    required = base.psf.d_safe + base.psf.d_f
    kinds = ('static', 'crossing', 'head-on')

    obstacles: List[ObstacleScript] = []
    for index in range(int(rng.integers(1, MAX_OBSTACLES + 1))):
        kind = difficulty if difficulty != 'mixed' else kinds[int(rng.integers(len(kinds)))]
        for _ in range(MAX_GENERATION_ATTEMPTS):
            obstacle = _random_obstacle(rng, kind, path, len(obstacles))
            clearance = np.linalg.norm(np.asarray(obstacle.position) - start.position) - obstacle.bounding_radius
            if clearance >= required:
                obstacles.append(obstacle)
                break
        else:
            logger.debug('seed %d: dropped obstacle %d after %d attempts', seed, index, MAX_GENERATION_ATTEMPTS)

    if not obstacles:
        message = f'seed {seed}: no obstacle keeps {required:g} m from the start in {MAX_GENERATION_ATTEMPTS} attempts'
        raise ScenarioValidationError('obstacles', message)

    return base.replace(
        name=f'random-{difficulty}-{seed}',
        seed=seed,
        path=path,
        initial_state=start,
        obstacles=tuple(obstacles),
    )
