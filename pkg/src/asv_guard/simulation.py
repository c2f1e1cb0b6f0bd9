# -*- coding: utf-8 -*-

"""The closed-loop episode engine.

Each dynamics tick runs, in order: the LiDAR (on its own period) and AIS reports, the tracker, the obstacle
forecast for the safety filter, the policy, the safety filter, one integration step, and finally the rewards and
collision flag of the state the step reached. One :class:`TickRecord` is stored per tick.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .exceptions import EpisodeAbortedError, IntegrationDivergedError
from .guidance import (
    PolicyKind, RewardComponents, ScriptedPolicy, cross_track_error, heading_error, reward_colav, reward_path,
    reward_psf, reward_total,
)
from .parsers import ais_messages_from_df, get_ais_replay_df
from .perception import AisMessage, LidarScan, cluster_points, simulate_scan
from .safety_filter import ObstacleForecast, PredictiveSafetyFilter, PsfStatus, TerminalSet, build_terminal_set
from .scenario import Scenario, generate_random_scenario
from .tracking import TrackManager, kf_predict
from .utils import spawn_streams
from .vessel import ControlInput, VesselState, step_rk4

__all__ = [
    'InfoMode',
    'ObstacleRecord',
    'TickRecord',
    'EpisodeTrace',
    'EpisodeSummary',
    'AisSource',
    'run_episode',
    'summarize',
    'run_batch',
]

logger = logging.getLogger(__name__)

#: Trace status of ticks where the safety filter is switched off
DISABLED = 'DISABLED'
INTERVENTIONS = {PsfStatus.MODIFIED.value, PsfStatus.RELAXED.value, PsfStatus.INFEASIBLE.value}


class InfoMode(enum.Enum):
    """What the safety filter knows about the obstacles."""

    TRACKED = 'tracked'
    GROUND_TRUTH = 'ground-truth'
    NONE = 'none'


@dataclass(frozen=True)
class ObstacleRecord:
    """True and estimated position of one obstacle at one tick."""

    obstacle_id: str
    true_x: float
    true_y: float
    radius: float
    track_id: Optional[str] = None
    est_x: float = math.nan
    est_y: float = math.nan
    est_sigma: float = math.nan


@dataclass(frozen=True)
class TickRecord:
    """Everything that happened during one dynamics tick.

    The state is the one at the start of the tick; rewards, the collision flag and the clearance describe the state
    reached at its end.
    """

    t: float
    state: VesselState
    u_l: ControlInput
    u_0: ControlInput
    delta_ratio: float
    status: str
    iterations: int
    slack_total: float
    solve_time: float
    cte: float
    heading_error: float
    clearance: float
    r_path: float
    r_colav: float
    r_psf: float
    r_total: float
    collision: bool
    obstacles: Tuple[ObstacleRecord, ...] = ()
    plan: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    forecast: Optional[ObstacleForecast] = field(default=None, compare=False, repr=False)


@dataclass
class EpisodeTrace:
    """The per-tick records of one episode with the flags it ran under."""

    scenario_name: str
    seed: int
    policy: str
    psf_enabled: bool
    info_mode: str
    d_safe: float
    dt: float
    records: List[TickRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class EpisodeSummary:
    """Aggregate metrics of one episode, recomputable from its trace."""

    ticks: int
    collisions: int
    min_distance: float
    mean_abs_cte: float
    cumulative_reward: float
    intervention_rate: float
    infeasible_ticks: int
    mean_solve_time_ms: float

    def to_dict(self) -> dict:
        """Return the summary as a flat dictionary."""
        return asdict(self)


def summarize(trace: EpisodeTrace) -> EpisodeSummary:
    """Compute the summary of a trace.

    Collisions are counted as rising edges of the per-tick collision flag.
    """
    records = trace.records
    if not records:
        raise ValueError('cannot summarize an empty trace')
    collisions, previous = 0, False
    for record in records:
        if record.collision and not previous:
            collisions += 1
        previous = record.collision
    solver_times = [record.solve_time for record in records if record.status != DISABLED]
    return EpisodeSummary(
        ticks=len(records),
        collisions=collisions,
        min_distance=float(min(record.clearance for record in records)),
        mean_abs_cte=float(np.mean([abs(record.cte) for record in records])),
        cumulative_reward=float(math.fsum(record.r_total for record in records)),
        intervention_rate=sum(record.status in INTERVENTIONS for record in records) / len(records),
        infeasible_ticks=sum(record.status == PsfStatus.INFEASIBLE.value for record in records),
        mean_solve_time_ms=1e3 * float(np.mean(solver_times)) if solver_times else 0.0,
    )


class AisSource:
    """Synthesizes AIS reports for flagged obstacles, or replays a recorded file.

    Each synthetic sender starts at a random phase within one period and reports its true speed and course with a
    noisy position.
    """

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.scenario = scenario
        self.rng = rng
        self.period = scenario.ais.period
        self.covariance = scenario.ais.covariance
        self.replay: Optional[List[AisMessage]] = None
        if scenario.ais.replay is not None:
            self.replay = ais_messages_from_df(get_ais_replay_df(scenario.ais.replay))
            logger.info('replaying %d AIS messages from %s', len(self.replay), scenario.ais.replay)
        self.senders = [obstacle for obstacle in scenario.obstacles if obstacle.ais]
        self.next_time = [float(rng.uniform(0.0, self.period)) for _ in self.senders]

    def messages(self, start: float, end: float) -> List[AisMessage]:
        """Return the reports stamped in ``(start, end]``."""
        if self.replay is not None:
            return [message for message in self.replay if start < message.stamp <= end]
        rv = []
        for i, obstacle in enumerate(self.senders):
            while self.next_time[i] <= end:
                stamp = self.next_time[i]
                self.next_time[i] += self.period
                if stamp <= start:
                    continue
                position, velocity = obstacle.state_at(stamp)
                noisy = position + self.rng.normal(scale=math.sqrt(self.covariance), size=2)
                rv.append(AisMessage(
                    stamp=stamp,
                    vessel_id=obstacle.obstacle_id,
                    x=float(noisy[0]),
                    y=float(noisy[1]),
                    speed=float(np.hypot(*velocity)),
                    course=float(math.atan2(velocity[1], velocity[0])),
                ))
        return sorted(rv, key=lambda message: (message.stamp, message.vessel_id))


def _ground_truth_forecast(scenario: Scenario, t: float) -> ObstacleForecast:
    psf = scenario.psf
    if not scenario.obstacles:
        return ObstacleForecast.empty(psf.horizon)
    times = t + psf.dt * np.arange(psf.horizon + 1)
    positions = np.array([
        [obstacle.state_at(time)[0] for time in times]
        for obstacle in scenario.obstacles
    ])
    radii = np.array([[obstacle.bounding_radius] * (psf.horizon + 1) for obstacle in scenario.obstacles])
    return ObstacleForecast(positions=positions, radii=radii)


def _tracked_forecast(scenario: Scenario, tracker: TrackManager, t: float) -> ObstacleForecast:
    psf = scenario.psf
    tracks = tracker.confirmed_tracks()
    beliefs = [kf_predict(track.belief, max(0.0, t - track.belief.stamp), tracker.config.noise) for track in tracks]
    return ObstacleForecast.from_beliefs(
        beliefs,
        [track.extent for track in tracks],
        psf.horizon,
        psf.dt,
        noise=tracker.config.noise,
        sigma_level=psf.sigma_level,
        inflate=psf.inflate,
    )


def _obstacle_records(scenario: Scenario, tracker: TrackManager, t: float) -> Tuple[ObstacleRecord, ...]:
    tracks = tracker.confirmed_tracks()
    rv = []
    for obstacle in scenario.obstacles:
        position, _ = obstacle.state_at(t)
        kwargs = {}
        if tracks:
            distances = [np.linalg.norm(track.belief.position - position) for track in tracks]
            best = int(np.argmin(distances))
            if distances[best] <= obstacle.bounding_radius + scenario.psf.d_safe:
                belief = tracks[best].belief
                kwargs = dict(
                    track_id=tracks[best].track_id,
                    est_x=float(belief.position[0]),
                    est_y=float(belief.position[1]),
                    est_sigma=math.sqrt(float(np.linalg.eigvalsh(belief.position_cov).max())),
                )
        rv.append(ObstacleRecord(
            obstacle_id=obstacle.obstacle_id,
            true_x=float(position[0]),
            true_y=float(position[1]),
            radius=obstacle.bounding_radius,
            **kwargs,
        ))
    return tuple(rv)


def _clearance(scenario: Scenario, position: np.ndarray, t: float) -> Tuple[float, bool]:
    """Return the smallest distance to an obstacle outline and whether the hulls overlap."""
    clearance, collision = math.inf, False
    radius = scenario.vessel.collision_radius
    for obstacle in scenario.obstacles:
        center, _ = obstacle.state_at(t)
        distance = float(np.linalg.norm(position - center))
        clearance = min(clearance, distance - obstacle.bounding_radius)
        collision = collision or distance < obstacle.bounding_radius + radius
    return clearance, collision


def run_episode(
    scenario: Scenario,
    policy_kind: PolicyKind = PolicyKind.LOS_FOLLOW,
    psf_enabled: bool = True,
    obstacle_info_mode: InfoMode = InfoMode.TRACKED,
    terminal: Optional[TerminalSet] = None,
) -> Tuple[EpisodeTrace, EpisodeSummary]:
    """Run one deterministic episode.

    :param scenario: The scenario to run
    :param policy_kind: The scripted policy proposing inputs
    :param psf_enabled: If false, proposed inputs are only clamped to the input box
    :param obstacle_info_mode: Where the safety filter's obstacle forecast comes from
    :param terminal: A prebuilt terminal set, to skip its construction
    :raises EpisodeAbortedError: if the integration diverges; the partial trace is attached
    """
    streams = spawn_streams(scenario.seed)
    params = scenario.vessel
    episode = scenario.episode
    policy = ScriptedPolicy(policy_kind, params, scenario.path, scenario.policy, rng=streams['policy'])
    safety_filter = PredictiveSafetyFilter(params, scenario.psf, terminal) if psf_enabled else None
    tracker = TrackManager(config=scenario.tracking)
    ais = AisSource(scenario, streams['ais'])
    reward_config = scenario.reward.with_vessel(params)
    u_max_norm = float(np.linalg.norm(reward_config.u_max))

    trace = EpisodeTrace(
        scenario_name=scenario.name,
        seed=scenario.seed,
        policy=policy_kind.value,
        psf_enabled=psf_enabled,
        info_mode=obstacle_info_mode.value,
        d_safe=scenario.psf.d_safe,
        dt=episode.dt,
    )
    logger.info('episode %s: policy=%s psf=%s info=%s ticks=%d', scenario.name, policy_kind.value, psf_enabled,
                obstacle_info_mode.value, episode.ticks)

    state = scenario.initial_state
    scan: Optional[LidarScan] = None
    for k in range(episode.ticks):
        t = k * episode.dt
        clusters = []
        lidar_tick = k % episode.lidar_every == 0
        if lidar_tick:
            shapes = [obstacle.shape_at(t) for obstacle in scenario.obstacles]
            scan = simulate_scan((state.x_s, state.y_s, state.psi), shapes, scenario.lidar, rng=streams['lidar'],
                                 stamp=t)
            clusters = cluster_points(scan, eps=scenario.lidar.cluster_eps, min_points=scenario.lidar.min_points)
        messages = ais.messages(t - episode.dt, t)
        if lidar_tick or messages:
            tracker.step(clusters, messages, t)

        if obstacle_info_mode is InfoMode.TRACKED:
            forecast = _tracked_forecast(scenario, tracker, t)
        elif obstacle_info_mode is InfoMode.GROUND_TRUTH:
            forecast = _ground_truth_forecast(scenario, t)
        else:
            forecast = ObstacleForecast.empty(scenario.psf.horizon)

        true_positions = [obstacle.state_at(t)[0] for obstacle in scenario.obstacles]
        action = policy(state, obstacles=true_positions)
        disturbance = scenario.disturbance.at(t)

        if safety_filter is not None:
            solution = safety_filter.filter(state, action.u_l, forecast, t=t, disturbance=disturbance)
            u_0, status = solution.u0, solution.status.value
            iterations, slack_total, solve_time = solution.iterations, solution.slack_total, solution.solve_time
            plan = solution.positions
            if solution.status is PsfStatus.INFEASIBLE:
                logger.warning('t=%.1f: safety filter infeasible, applying the relaxed input', t)
        else:
            u_0, status = action.u_l.clamp(params), DISABLED
            iterations, slack_total, solve_time, plan = 0, 0.0, 0.0, None

        try:
            next_state = step_rk4(state, u_0, disturbance, params, episode.dt)
        except IntegrationDivergedError as e:
            logger.error('t=%.1f: integration diverged, aborting %s', t, scenario.name)
            raise EpisodeAbortedError(f'integration diverged at t={t:.1f}: {e}', trace=trace) from e

        clearance, collision = _clearance(scenario, next_state.position, t + episode.dt)
        cte = cross_track_error(scenario.path, next_state.position)
        psi_bar = heading_error(scenario.path, next_state)
        components = RewardComponents(
            r_path=reward_path(next_state.u, psi_bar, cte, reward_config),
            r_colav=reward_colav(scan, reward_config),
            r_psf=reward_psf(action.u_l, u_0, reward_config),
        )
        if collision:
            logger.info('t=%.1f: collision in %s', t, scenario.name)

        trace.records.append(TickRecord(
            t=t,
            state=state,
            u_l=action.u_l,
            u_0=u_0,
            delta_ratio=float(np.linalg.norm(action.u_l.to_array() - u_0.to_array())) / u_max_norm,
            status=status,
            iterations=iterations,
            slack_total=slack_total,
            solve_time=solve_time,
            cte=cte,
            heading_error=psi_bar,
            clearance=clearance,
            r_path=components.r_path,
            r_colav=components.r_colav,
            r_psf=components.r_psf,
            r_total=reward_total(components, collision, reward_config),
            collision=collision,
            obstacles=_obstacle_records(scenario, tracker, t),
            plan=plan,
            forecast=forecast,
        ))
        state = next_state

    summary = summarize(trace)
    logger.info('episode %s finished: %d collisions, intervention rate %.3f', scenario.name, summary.collisions,
                summary.intervention_rate)
    return trace, summary


def _run_seed(
    seed: int,
    difficulty: str,
    policy_kind: PolicyKind,
    psf_enabled: bool,
    info_mode: InfoMode,
    base: Optional[Scenario],
    terminal: Optional[TerminalSet],
) -> dict:
    scenario = generate_random_scenario(seed, difficulty, base=base)
    try:
        _, summary = run_episode(scenario, policy_kind, psf_enabled, info_mode, terminal=terminal)
    except EpisodeAbortedError as e:
        logger.warning('seed %d aborted: %s', seed, e)
        return {'seed': seed, 'difficulty': difficulty, 'aborted': True}
    return {'seed': seed, 'difficulty': difficulty, 'aborted': False, **summary.to_dict()}


def run_batch(
    seeds: Iterable[int],
    difficulty: str = 'mixed',
    policy_kind: PolicyKind = PolicyKind.RANDOM,
    psf_enabled: bool = True,
    info_mode: InfoMode = InfoMode.GROUND_TRUTH,
    workers: int = 1,
    base: Optional[Scenario] = None,
    use_tqdm: bool = True,
) -> pd.DataFrame:
    """Run one random episode per seed and tabulate their summaries.

    The terminal set is built once and shared; everything else is per episode, so episodes may run in a process
    pool. Rows are ordered by seed either way.

    :param seeds: The scenario seeds
    :param workers: The number of processes; 1 runs in this process
    :param base: A scenario whose vessel and configuration sections every random scenario reuses
    """
    seeds: Sequence[int] = sorted(seeds)
    terminal = None
    if psf_enabled:
        reference = base or generate_random_scenario(0, difficulty)
        terminal = build_terminal_set(reference.vessel, reference.psf)
    run = partial(
        _run_seed,
        difficulty=difficulty,
        policy_kind=policy_kind,
        psf_enabled=psf_enabled,
        info_mode=info_mode,
        base=base,
        terminal=terminal,
    )
    progress = dict(total=len(seeds), desc='episodes', disable=not use_tqdm)
    if workers > 1:
        with Pool(workers) as pool:
            rows = list(tqdm(pool.imap(run, seeds), **progress))
    else:
        rows = [run(seed) for seed in tqdm(seeds, **progress)]
    df = pd.DataFrame(rows)
    collisions = int(df['collisions'].sum()) if 'collisions' in df else 0
    logger.info('batch of %d episodes: %d collisions in total', len(df), collisions)
    return df
